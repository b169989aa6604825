"""Tables for the CLI: level shifts, the Psi1 reference comparison, fit summaries."""

from __future__ import annotations

import math

import numpy as np

from .physdata import D, S, quadrupole_shift, zeeman_shift
from .protocol import ProtocolKind, ProtocolSpec, predicted_alpha
from .trapmodel import axial_field_gradient, ion_separation, trap_gradient_single

#: Reference Psi1 phase-evolution frequency for Sr+ at 2 pi x 1 MHz, Hz.
REFERENCE_PSI1_HZ = 152.0

D_LEVELS = tuple(D(m) for m in (0.5, 1.5, 2.5))


def shift_table(cfg) -> tuple[list[dict], list[dict]]:
    """Return (summary rows, per-level rows) for a resolved :class:`RunConfig`.

    Summary rows are ``{"quantity", "value", "unit"}``; per-level rows give the
    Zeeman shift at B0, the quadrupole shift and their ratio.
    """
    sp, trap, env = cfg.species, cfg.trap, cfg.env
    summary = []

    def add(name, value, unit):
        summary.append({"quantity": name, "value": float(value), "unit": unit})

    add("f_z", trap.omega_z / (2 * math.pi), "Hz")
    add("theta", sp.theta_ea0, "e a0^2")
    add("beta", math.degrees(trap.beta), "deg")
    if trap.n_ions == 2:
        add("ion_separation", ion_separation(trap, sp), "m")
    single = trap_gradient_single(trap, sp)
    add("field_gradient_single_ion", single, "V/m^2")
    add("field_gradient_single_ion_abs", abs(single) * 1e-6, "V/mm^2")
    total = axial_field_gradient(trap, sp)
    add(f"field_gradient_{trap.n_ions}_ion", total, "V/m^2")
    add(f"field_gradient_{trap.n_ions}_ion_abs", abs(total) * 1e-6, "V/mm^2")

    levels = []
    for lv in (S(-0.5), S(0.5)) + tuple(D(m) for m in (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5)):
        z = zeeman_shift(lv, env.B0, sp)
        q = quadrupole_shift(lv, env, sp)
        levels.append({
            "level": str(lv),
            "m_j": lv.m_j,
            "zeeman_hz": z,
            "quadrupole_hz": q,
            "zeeman_over_quadrupole": abs(z / q) if q != 0 else math.inf,
        })
    q_sum = sum(quadrupole_shift(lv, env, sp) for lv in D_LEVELS)
    q_scale = max(abs(quadrupole_shift(lv, env, sp)) for lv in D_LEVELS)
    add("quadrupole_sum_over_m", q_sum, "Hz")
    add("quadrupole_sum_relative", q_sum / q_scale if q_scale else 0.0, "1")
    add("quadrupole_scale", q_scale, "Hz")
    q52 = quadrupole_shift(D(2.5), env, sp)
    z52 = zeeman_shift(D(2.5), env.B0, sp)
    if q52 != 0 and z52 != 0:
        add("zeeman_quadrupole_orders_of_magnitude", math.log10(abs(z52 / q52)), "decades")
    if trap.n_ions == 2:
        summary.extend(psi1_comparison(cfg))
    return summary, levels


def psi1_comparison(cfg) -> list[dict]:
    """Psi1 frequency from the level shifts next to the 152 Hz reference value."""
    sp, env, trap = cfg.species, cfg.env, cfg.trap
    quad_only = abs(2 * quadrupole_shift(D(0.5), env, sp) - 2 * quadrupole_shift(D(2.5), env, sp))
    spec = ProtocolSpec(kind=ProtocolKind.PSI1, m_prime=2.5)
    full = float(abs(predicted_alpha(spec, env, trap, sp)) / (2 * math.pi))
    rows = [
        {"quantity": "psi1_quadrupole_frequency", "value": quad_only, "unit": "Hz"},
        {"quantity": "psi1_predicted_frequency", "value": full, "unit": "Hz"},
        {"quantity": "psi1_reference_frequency", "value": REFERENCE_PSI1_HZ, "unit": "Hz"},
        {"quantity": "psi1_reference_over_computed", "value": REFERENCE_PSI1_HZ / quad_only if quad_only else math.nan, "unit": "1"},
    ]
    return rows


def fit_row(key: dict, fit, predicted_alpha_value: float | None = None) -> dict:
    row = dict(key)
    row.update({
        "alpha": fit.alpha,
        "alpha_err": fit.alpha_err,
        "frequency_hz": fit.frequency,
        "frequency_err_hz": fit.alpha_err / (2 * math.pi),
        "phi": fit.phi,
        "phi_err": fit.phi_err,
        "contrast0": fit.contrast0,
        "gamma_fit": fit.gamma_fit,
        "gamma_err": fit.gamma_err,
        "chi2_red": fit.chi2_red,
        "n_points": fit.n_points,
    })
    if key.get("protocol") in ("Psi0", "Psi0Swapped"):
        # frequency_hz is the detuning sum; this is the same fringe read as the mean detuning
        row["frequency_averaged_hz"] = fit.frequency / 2
    if predicted_alpha_value is not None:
        row["predicted_frequency_hz"] = predicted_alpha_value / (2 * math.pi)
        row["relative_deviation"] = (
            (fit.alpha - predicted_alpha_value) / predicted_alpha_value if predicted_alpha_value else math.nan
        )
    return row


def format_table(rows: list[dict], columns=None) -> str:
    """Fixed-width plain-text table."""
    if not rows:
        return "(empty)\n"
    columns = columns or list(rows[0])

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{v:.6g}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"
