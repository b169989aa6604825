"""Command-line front end.

    bellramsey shifts   [--config PATH] [--out DIR] [--format csv|jsonl]
    bellramsey simulate --config PATH [--seed N] [--shots N] [--out DIR] [--workers N] [--no-fit]
    bellramsey fit      RECORDS... [--separate] [--average-mj] [--theta] [--gamma-fixed] [--out DIR]
    bellramsey scan     --config PATH --axis omega|tau|mj [--seed N] [--shots N] [--out DIR] [--workers N]

Exit codes: 0 success, 1 validation error, 2 runtime/numerical failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigValidationError, RunConfig, from_dict, load_config
from .constants import constants_report
from .estimate import FitError, average_mj, fit_fringe, fit_theta, separate_shifts
from .protocol import (
    ConfigError,
    ProtocolKind,
    coherence_decay_rate,
    decay_baseline,
    predicted_alpha,
    run_ramsey,
    scan_mj,
    stream_id,
)
from .records import (
    RecordFormatError,
    header,
    read_jsonl,
    write_csv,
    write_gnuplot,
    write_jsonl,
    write_table_csv,
)
from .report import fit_row, format_table, psi1_comparison, shift_table

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class ValidationFailure(Exception):
    """Bad user input detected before or after execution (exit code 1)."""


# --------------------------------------------------------------------------
# output helpers


def _emit(rows: list[dict], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "jsonl":
        for r in rows:
            out.write(json.dumps(r, sort_keys=True) + "\n")
        return
    if not rows:
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    out.write(",".join(cols) + "\n")
    for r in rows:
        out.write(",".join(_cell(r.get(c, "")) for c in cols) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(float(v) + 0.0)
    return str(v)


def _out_dir(args, cfg: RunConfig | None) -> Path:
    path = Path(args.out if args.out is not None else (cfg.output_dir if cfg else "out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else from_dict({})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ValidationFailure(f"{args.config}: cannot parse config ({exc})") from None
    shots = getattr(args, "shots", None)
    if shots is not None and shots < 1:
        raise ValidationFailure(f"--shots must be >= 1, got {shots}")
    return cfg.with_overrides(seed=getattr(args, "seed", None), shots=shots)


# --------------------------------------------------------------------------
# shifts


def cmd_shifts(args) -> int:
    cfg = _load(args)
    summary, levels = shift_table(cfg)
    if args.out is not None:
        out = _out_dir(args, cfg)
        write_table_csv(out / "shifts.csv", summary, ["quantity", "value", "unit"])
        write_table_csv(out / "levels.csv", levels)
        (out / "constants.csv").write_text(constants_report(), encoding="utf-8")
    _emit(summary, args.format)
    sys.stdout.write("\n")
    _emit(levels, args.format)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def _simulate_records(cfg: RunConfig, spec, trap, seed, workers, stream=None, extra_meta=None):
    env = cfg.env_for(trap)
    return run_ramsey(
        spec,
        env,
        trap,
        cfg.noise,
        cfg.species,
        seed,
        mode=cfg.mode,
        workers=workers,
        stream=stream,
        extra_meta=extra_meta,
    )


def _write_records(out: Path, cfg: RunConfig, records, name: str, aggregate: str) -> None:
    write_jsonl(out / f"{name}.jsonl", header(cfg.resolved(), cfg.seed), records)
    write_csv(out / aggregate, records)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    records = _simulate_records(cfg, cfg.protocol, cfg.trap, cfg.seed, args.workers)
    _write_records(out, cfg, records, "records", "aggregate.csv")
    write_gnuplot(out / "fringe.dat", records, f"{cfg.protocol.kind.value} m'={cfg.protocol.m_prime:g} seed={cfg.seed}")
    if args.no_fit:
        return EXIT_OK
    rows, _ = _fit_groups({"": (header(cfg.resolved(), cfg.seed), records)}, gamma_fixed=False)
    summary = list(rows)
    if cfg.protocol.kind is ProtocolKind.PSI1 and cfg.trap.n_ions == 2:
        comp = psi1_comparison(cfg)
        for r in summary:
            r.update({c["quantity"]: c["value"] for c in comp})
    if summary:
        write_table_csv(out / "fit.csv", summary)
        (out / "summary.txt").write_text(format_table(summary), encoding="utf-8")
        _emit(summary, args.format)
    return EXIT_OK


# --------------------------------------------------------------------------
# fit


def _group_key(rec, cfg_dict: dict) -> tuple:
    f_z = rec.meta.get("f_z", cfg_dict.get("trap", {}).get("f_z"))
    return (rec.meta.get("protocol", cfg_dict["protocol"]["kind"]), float(rec.meta.get("m_prime", 2.5)), float(f_z))


def _group(sources: dict) -> dict:
    """Map (protocol, m', f_z) -> (config dict, records) from loaded files."""
    groups = {}
    for _, (head, records) in sources.items():
        cfg_dict = head["config"] if head else {}
        if not cfg_dict:
            raise ValidationFailure("records file has no header; cannot recover the run configuration")
        for r in records:
            key = _group_key(r, cfg_dict)
            groups.setdefault(key, (cfg_dict, []))[1].append(r)
    return groups


def _fit_groups(sources: dict, gamma_fixed: bool) -> tuple[list[dict], dict]:
    rows = []
    fits = {}
    for key, (cfg_dict, records) in sorted(_group(sources).items()):
        kind, m_prime, f_z = key
        cfg = from_dict(cfg_dict)
        spec = replace(cfg.protocol, kind=ProtocolKind(kind), m_prime=m_prime)
        trap = cfg.trap_at(f_z)
        env = cfg.env_for(trap)
        alpha_pred = predicted_alpha(spec, env, trap, cfg.species)
        records = sorted(records, key=lambda r: r.tau)
        # decay products add a calculable offset that the damped cosine cannot absorb
        base = decay_baseline(spec, env, trap, cfg.species, [r.tau for r in records])
        kw = {"phase_hint": spec.phi0, "baseline": base}
        if gamma_fixed:
            kw["gamma_fixed"] = coherence_decay_rate(spec.kind, cfg.species.gamma)
        fit = fit_fringe(records, **kw)
        fits[key] = fit
        rows.append(fit_row({"protocol": kind, "m_prime": m_prime, "f_z": f_z}, fit, alpha_pred))
    return rows, fits


def _separation_rows(fits: dict) -> list[dict]:
    rows = []
    f_values = sorted({k[2] for k in fits})
    for f_z in f_values:
        p1 = [v for k, v in fits.items() if k[0] == "Psi1" and k[2] == f_z]
        p2 = [v for k, v in fits.items() if k[0] == "Psi2" and k[2] == f_z]
        if not p1 or not p2:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            dec = separate_shifts(p1[0], p2[0])
        rows.append({"f_z": f_z, **dec.to_dict()})
    return rows


def _average_rows(fits: dict, m_primes=(0.5, 1.5, 2.5)) -> list[dict]:
    rows = []
    for f_z in sorted({k[2] for k in fits}):
        freqs = {(k[0], k[1]): v for k, v in fits.items() if k[2] == f_z and k[0] in ("Psi0", "Psi0Swapped")}
        try:
            mean = average_mj(freqs, m_primes)
        except KeyError as exc:
            raise ValidationFailure(f"f_z={f_z:g}: {exc.args[0]}") from None
        rows.append({"f_z": f_z, "mean_alpha": mean, "mean_frequency_hz": mean / (2 * math.pi)})
    return rows


def _theta_rows(sep_rows: list[dict], cfg: RunConfig, mode: str) -> list[dict]:
    if len(sep_rows) < 3:
        raise ValidationFailure(f"theta fit needs Psi1 and Psi2 runs at >= 3 trap frequencies, found {len(sep_rows)}")
    omega = [2 * math.pi * r["f_z"] for r in sep_rows]
    alpha = [r["alpha_qs"] for r in sep_rows]
    sigma = [r["alpha_qs_err"] for r in sep_rows]
    res = fit_theta(omega, alpha, cfg.species, cfg.trap.beta, sigma, mode=mode)
    return [res.to_dict()]


def _report(out: Path | None, name: str, rows: list[dict], fmt: str, title: str) -> None:
    if out is not None and rows:
        write_table_csv(out / f"{name}.csv", rows)
    sys.stdout.write(f"# {title}\n")
    _emit(rows, fmt)


def _analyse(sources: dict, args, out: Path | None) -> int:
    rows, fits = _fit_groups(sources, args.gamma_fixed)
    _report(out, "fit", rows, args.format, "fringe fits")
    summary_parts = [format_table(rows)]
    sep = []
    if args.separate or args.theta:
        sep = _separation_rows(fits)
        if not sep:
            raise ValidationFailure("shift separation needs both Psi1 and Psi2 records at the same f_z")
        _report(out, "separation", sep, args.format, "quadrupole / B-gradient separation")
        summary_parts.append(format_table(sep))
    if args.average_mj:
        avg = _average_rows(fits)
        _report(out, "average_mj", avg, args.format, "m'-averaged Psi0 frequency")
        summary_parts.append(format_table(avg))
    if args.theta:
        head = next(iter(sources.values()))[0]
        th = _theta_rows(sep, from_dict(head["config"]), args.theta_mode)
        _report(out, "theta", th, args.format, "quadrupole moment")
        summary_parts.append(format_table(th))
    if out is not None:
        (out / "fit_summary.txt").write_text("\n".join(summary_parts), encoding="utf-8")
    return EXIT_OK


def cmd_fit(args) -> int:
    sources = {}
    for path in args.records:
        sources[path] = read_jsonl(path)
        if not sources[path][1]:
            raise ValidationFailure(f"{path}: no records")
    out = _out_dir(args, None) if args.out is not None else None
    return _analyse(sources, args, out)


# --------------------------------------------------------------------------
# scan


def cmd_scan(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    records = []
    if args.axis == "tau":
        records = _simulate_records(cfg, cfg.protocol, cfg.trap, cfg.seed, args.workers)
    elif args.axis == "omega":
        for i, f_z in enumerate(cfg.scan["f_z"]):
            trap = cfg.trap_at(float(f_z))
            for kind in cfg.scan["kinds"]:
                spec = replace(cfg.protocol, kind=ProtocolKind(kind))
                stream = ((i + 1) << 12) | stream_id(spec)
                records += _simulate_records(cfg, spec, trap, cfg.seed, args.workers, stream, {"f_z": float(f_z)})
    else:
        kind = cfg.protocol.kind
        if kind not in (ProtocolKind.PSI0, ProtocolKind.PSI0_SWAPPED):
            raise ValidationFailure("scan --axis mj needs protocol kind Psi0 or Psi0Swapped")
        runs = scan_mj(
            cfg.protocol, cfg.env, cfg.trap, cfg.noise, cfg.species, cfg.seed,
            tuple(cfg.scan["m_primes"]), mode=cfg.mode, workers=args.workers,
        )
        for key in sorted(runs):
            records += runs[key]
    name = f"scan_{args.axis}"
    _write_records(out, cfg, records, name, f"{name}_aggregate.csv")
    write_gnuplot(out / f"{name}.dat", records, f"{name} seed={cfg.seed}")
    if args.no_fit:
        return EXIT_OK
    kinds = {r.meta["protocol"] for r in records}
    args.separate = args.axis == "omega" and {"Psi1", "Psi2"} <= kinds
    args.theta = args.separate and len(cfg.scan["f_z"]) >= 3
    args.average_mj = args.axis == "mj"
    return _analyse({name: (header(cfg.resolved(), cfg.seed), records)}, args, out)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellramsey", description="Bell-state Ramsey spectroscopy of trapped-ion quadrupole shifts.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, run=True):
        sp.add_argument("--config", help="TOML/JSON config, or a records .jsonl whose header is reused")
        sp.add_argument("--out", help="output directory (default: config output.dir)")
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="stdout table format")
        if run:
            sp.add_argument("--seed", type=int, help="master seed (overrides config)")
            sp.add_argument("--shots", type=int, help="shots per tau (overrides config)")
            sp.add_argument("--workers", type=int, default=1, help="worker processes; outputs do not depend on it")
            sp.add_argument("--no-fit", action="store_true", help="write records only")

    def analysis(sp):
        sp.add_argument("--gamma-fixed", action="store_true", help="freeze the decay rate at its analytic value")
        sp.add_argument("--theta-mode", choices=("affine", "magnitude"), default="affine")

    s = sub.add_parser("shifts", help="trap gradient and level-shift table")
    common(s, run=False)
    s.set_defaults(func=cmd_shifts)

    s = sub.add_parser("simulate", help="run the configured protocol and write records")
    common(s)
    s.set_defaults(func=cmd_simulate, gamma_fixed=False)

    s = sub.add_parser("fit", help="fit records files")
    s.add_argument("records", nargs="+", help="JSON-lines records files")
    s.add_argument("--out", help="directory for fit report files")
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    s.add_argument("--separate", action="store_true", help="split Psi1/Psi2 into quadrupole and B-gradient parts")
    s.add_argument("--average-mj", action="store_true", help="average Psi0 runs over m' and both orderings")
    s.add_argument("--theta", action="store_true", help="infer the quadrupole moment from an f_z scan")
    analysis(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("scan", help="scan trap frequency, tau ladder or m'")
    common(s)
    s.add_argument("--axis", choices=("omega", "tau", "mj"), default="omega")
    analysis(s)
    s.set_defaults(func=cmd_scan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ConfigValidationError, ConfigError, ValidationFailure, RecordFormatError) as exc:
        problems = getattr(exc, "problems", None) or [str(exc)]
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FitError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
