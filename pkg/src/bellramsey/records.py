"""Record files: JSON-lines streams, CSV aggregates, gnuplot data files.

Frozen field names (compatibility surface):

* JSON-lines: line 1 ``{"type": "header", "schema_version", "seed", "config"}``,
  then one ``{"type": "record", "tau", "n_ee", "n_eg", "n_ge", "n_gg",
  "parity", "meta"}`` per line.
* CSV aggregate columns: protocol, tau_s, n_ee, n_eg, n_ge, n_gg, parity, parity_err.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .protocol import MeasurementRecord

CSV_COLUMNS = ("protocol", "tau_s", "n_ee", "n_eg", "n_ge", "n_gg", "parity", "parity_err")


class RecordFormatError(ValueError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def header(config: dict, seed: int) -> dict:
    return {"type": "header", "schema_version": config.get("schema_version", 1), "seed": seed, "config": config}


def write_jsonl(path, head: dict, records) -> None:
    lines = [_dumps(head)]
    lines += [_dumps({"type": "record", **r.to_dict()}) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_jsonl(path) -> tuple[dict | None, list[MeasurementRecord]]:
    """Parse a records file; errors name the offending line number."""
    head = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                kind = obj.get("type", "record")
                if kind == "header":
                    if lineno != 1:
                        raise ValueError("header must be the first line")
                    head = obj
                    continue
                if kind != "record":
                    raise ValueError(f"unknown line type {kind!r}")
                records.append(MeasurementRecord.from_dict(obj))
            except (ValueError, KeyError, TypeError, AttributeError, ZeroDivisionError) as exc:
                raise RecordFormatError(f"{path}:{lineno}: malformed record ({exc})") from None
    return head, records


def aggregate_rows(records) -> list[dict]:
    rows = []
    for r in records:
        n_ee, n_eg, n_ge, n_gg = r.counts
        rows.append({
            "protocol": r.meta.get("protocol", ""),
            "tau_s": repr(r.tau),
            "n_ee": n_ee,
            "n_eg": n_eg,
            "n_ge": n_ge,
            "n_gg": n_gg,
            "parity": repr(r.parity_estimate),
            "parity_err": repr(r.parity_err),
        })
    return rows


def csv_text(records) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(aggregate_rows(records))
    return buf.getvalue()


def write_csv(path, records) -> None:
    Path(path).write_text(csv_text(records), encoding="utf-8")


def write_table_csv(path, rows: list[dict], columns=None) -> None:
    columns = columns or list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_gnuplot(path, records, title: str = "") -> None:
    """Whitespace-separated tau / parity / error columns for gnuplot."""
    lines = [f"# {title}".rstrip(), "# tau_s parity parity_err"]
    lines += [f"{r.tau:.9g} {r.parity_estimate:.9g} {r.parity_err:.9g}" for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
