"""Recovering frequencies and shift coefficients from measurement records.

Fringe model::

    parity(tau) = C0 * exp(-gamma * tau) * cos(alpha * tau - phi)

fitted by weighted least squares (binomial weights) after a coarse
periodogram search for alpha. The sign of alpha is not identifiable from a
cosine alone; pass ``phase_hint`` (the known preparation phase, e.g. pi/2)
to pick the branch whose phi lies closest to it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import argrelmax

from .constants import E_A0_SQUARED, PLANCK_H
from .physdata import IonSpecies, angular_factor


class FitError(RuntimeError):
    """Fit did not produce a trustworthy answer; ``diagnostics`` says why."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class FitResult:
    alpha: float
    phi: float
    contrast0: float
    gamma_fit: float
    covariance: np.ndarray
    residual_rms: float
    chi2_red: float = float("nan")
    n_points: int = 0
    gamma_fixed: bool = False

    @property
    def alpha_err(self) -> float:
        return float(math.sqrt(self.covariance[0, 0]))

    @property
    def phi_err(self) -> float:
        return float(math.sqrt(self.covariance[1, 1]))

    @property
    def contrast_err(self) -> float:
        return float(math.sqrt(self.covariance[2, 2]))

    @property
    def gamma_err(self) -> float:
        return float(math.sqrt(self.covariance[3, 3]))

    @property
    def frequency(self) -> float:
        """alpha / 2 pi, Hz."""
        return self.alpha / (2 * math.pi)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "alpha_err": self.alpha_err,
            "frequency_hz": self.frequency,
            "phi": self.phi,
            "phi_err": self.phi_err,
            "contrast0": self.contrast0,
            "contrast0_err": self.contrast_err,
            "gamma_fit": self.gamma_fit,
            "gamma_err": self.gamma_err,
            "residual_rms": self.residual_rms,
            "chi2_red": self.chi2_red,
            "n_points": self.n_points,
        }


def fringe_model(tau, alpha, phi, c0, gamma):
    tau = np.asarray(tau, dtype=float)
    return c0 * np.exp(-gamma * tau) * np.cos(alpha * tau - phi)


def _jacobian(tau, alpha, phi, c0, gamma):
    env = np.exp(-gamma * tau)
    arg = alpha * tau - phi
    c, s = np.cos(arg), np.sin(arg)
    return np.column_stack([
        -c0 * env * s * tau,
        c0 * env * s,
        env * c,
        -c0 * tau * env * c,
    ])


def periodogram(tau, y, sigma, alphas):
    """Weighted chi^2 reduction of a cos/sin pair at each trial alpha."""
    tau = np.asarray(tau, dtype=float)
    w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    y = np.asarray(y, dtype=float)
    chi0 = np.sum(w * y**2)
    if chi0 <= 0:
        return np.zeros(len(alphas))
    out = np.empty(len(alphas))
    for lo in range(0, len(alphas), 4096):
        arg = np.outer(alphas[lo : lo + 4096], tau)
        c, s = np.cos(arg), np.sin(arg)
        cc, cs, ss = (c * c) @ w, (c * s) @ w, (s * s) @ w
        bc, bs = c @ (w * y), s @ (w * y)
        det = cc * ss - cs * cs
        ok = det > 1e-12 * np.maximum(cc * ss, 1e-300)
        # 2x2 normal equations solved in closed form; degenerate rows keep the larger single term
        red = np.where(
            ok,
            (ss * bc * bc - 2 * cs * bc * bs + cc * bs * bs) / np.where(ok, det, 1.0),
            np.maximum(np.where(cc > 0, bc * bc / np.where(cc > 0, cc, 1.0), 0.0),
                       np.where(ss > 0, bs * bs / np.where(ss > 0, ss, 1.0), 0.0)),
        )
        out[lo : lo + 4096] = red / chi0
    return out


def _default_bracket(tau) -> tuple[float, float]:
    t = np.unique(tau)
    dt = np.diff(t)
    dt = dt[dt > 0]
    if dt.size == 0:
        raise FitError("need at least two distinct tau values")
    return 0.0, math.pi / dt.min()


def _candidate_alphas(tau, y, sigma, bracket, max_candidates=6, floor=0.5):
    """Periodogram local maxima, strongest first, refined on a fine grid."""
    span = tau.max() - tau.min()
    lo, hi = bracket
    step = 2 * math.pi / (10 * span)
    alphas = np.arange(lo, hi + step, step)
    if alphas.size > 200_000:
        raise FitError("frequency bracket too wide for the periodogram", {"n_grid": alphas.size})
    power = periodogram(tau, y, sigma, alphas)
    peaks = argrelmax(np.concatenate([[-1.0], power, [-1.0]]))[0] - 1
    peaks = sorted(peaks, key=lambda k: -power[k])
    peaks = [k for k in peaks if power[k] >= floor * power[peaks[0]]][:max_candidates]
    out = []
    for k in peaks:
        fine = np.linspace(alphas[k] - step, alphas[k] + step, 41)
        fine = fine[fine >= 0]
        out.append(float(fine[int(np.argmax(periodogram(tau, y, sigma, fine)))]))
    return out, {"alpha_peak": out[0], "power_peak": float(power[peaks[0]])}


def _wrap(phi):
    return (phi + math.pi) % (2 * math.pi) - math.pi


def fit_fringe_arrays(
    tau,
    parity,
    sigma=None,
    shots=None,
    *,
    alpha_bracket=None,
    alpha_guess=None,
    phase_hint=None,
    gamma_fixed=None,
    ambiguity=4.0,
    reweight=True,
    baseline=None,
) -> FitResult:
    """Fit the damped-cosine fringe model to arrays.

    ``sigma`` gives per-point parity standard errors; if omitted and ``shots``
    is given, binomial errors sqrt((1 - P^2)/N) are used (re-evaluated on the
    model after a first pass); with neither, unit weights. ``baseline`` is a
    known non-oscillating parity offset per point, subtracted before fitting.
    """
    tau = np.asarray(tau, dtype=float)
    raw = np.asarray(parity, dtype=float)
    if tau.shape != raw.shape or tau.ndim != 1:
        raise FitError("tau and parity must be 1-D arrays of equal length")
    base = np.zeros_like(raw) if baseline is None else np.broadcast_to(np.asarray(baseline, dtype=float), raw.shape)
    y = raw - base
    n_free = 3 if gamma_fixed is not None else 4
    if np.unique(tau).size < 4 and alpha_bracket is None and alpha_guess is None:
        raise FitError("need >= 4 distinct tau values or a frequency bracket")
    if tau.size <= n_free:
        raise FitError(f"need more than {n_free} points")
    if shots is not None:
        shots = np.broadcast_to(np.asarray(shots, dtype=float), tau.shape)
    unit_weights = False
    if sigma is None:
        if shots is not None:
            sigma = np.sqrt((1 - np.clip(raw, -1, 1) ** 2 + 1.0 / shots) / shots)
        else:
            sigma = np.ones_like(y)
            reweight = False
            unit_weights = True
    else:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), tau.shape).copy()
        reweight = False

    def start(alpha0):
        c, s_ = np.cos(alpha0 * tau), np.sin(alpha0 * tau)
        w = 1 / sigma**2
        A = np.array([[np.sum(w * c * c), np.sum(w * c * s_)], [np.sum(w * c * s_), np.sum(w * s_ * s_)]])
        a, b = np.linalg.lstsq(A, np.array([np.sum(w * c * y), np.sum(w * s_ * y)]), rcond=None)[0]
        return [alpha0, math.atan2(b, a), max(math.hypot(a, b), 1e-3), 0.0]

    def solve(x0, sigma):
        if gamma_fixed is None:
            fun = lambda p: (fringe_model(tau, *p) - y) / sigma
            jac = lambda p: _jacobian(tau, *p) / sigma[:, None]
        else:
            fun = lambda p: (fringe_model(tau, *p, gamma_fixed) - y) / sigma
            jac = lambda p: _jacobian(tau, *p, gamma_fixed)[:, :3] / sigma[:, None]
            x0 = x0[:3]
        res = least_squares(fun, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        if not res.success or not np.all(np.isfinite(res.x)):
            raise FitError(f"least squares did not converge: {res.message}", dict(diag, status=res.status))
        p = list(res.x) + ([] if gamma_fixed is None else [gamma_fixed])
        return np.array(p), res

    diag = {}
    if alpha_guess is None:
        bracket = alpha_bracket or _default_bracket(tau)
        cands, diag = _candidate_alphas(tau, y, sigma, bracket)
    else:
        cands = [abs(float(alpha_guess))]
    fits = []
    for a0 in cands:
        try:
            p, res = solve(start(a0), sigma)
        except FitError:
            continue
        fits.append((2 * res.cost, p, res))
    if not fits:
        raise FitError("no periodogram candidate converged", dict(diag, candidates=cands))
    fits.sort(key=lambda f: f[0])
    chi2_best, p, res = fits[0]
    span = tau.max() - tau.min()
    rivals = [f for f in fits[1:] if abs(abs(f[1][0]) - abs(p[0])) > math.pi / span]
    if rivals:
        # without error bars, measure chi^2 in units of the best-fit residual variance
        scale = max(chi2_best / max(tau.size - n_free, 1), 1e-16 * float(np.mean(y**2)), 1e-300) if unit_weights else 1.0
        dchi2 = (rivals[0][0] - chi2_best) / scale
        diag.update(alpha_second=float(abs(rivals[0][1][0])), delta_chi2=float(dchi2))
        if dchi2 < ambiguity:
            raise FitError(
                f"ambiguous fringe frequency: {abs(p[0]):.6g} vs {abs(rivals[0][1][0]):.6g} rad/s "
                f"(delta chi^2 = {dchi2:.3g})",
                diag,
            )
    if reweight:
        model = np.clip(fringe_model(tau, *p) + base, -1, 1)
        sigma = np.sqrt(np.maximum(1 - model**2, 1.0 / shots) / shots)
        p, res = solve(p, sigma)

    J = res.jac
    try:
        cov_free = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian; parameters not identifiable", diag) from exc
    cov = np.zeros((4, 4))
    cov[:n_free, :n_free] = cov_free
    if not np.all(np.isfinite(cov)):
        raise FitError("non-finite covariance", diag)

    alpha, phi, c0, gamma = p
    sign = np.ones(4)
    if c0 < 0:
        c0, phi = -c0, phi + math.pi
    if alpha < 0:
        alpha, phi = -alpha, -phi
        sign[:2] = -1
    phi = _wrap(phi)
    if phase_hint is not None:
        d_pos = abs(_wrap(phi - phase_hint))
        d_neg = abs(_wrap(-phi - phase_hint))
        if d_neg < d_pos:
            alpha, phi = -alpha, -phi
            sign[:2] *= -1
    cov = cov * np.outer(sign, sign)
    resid = fringe_model(tau, alpha, phi, c0, gamma) - y
    dof = max(tau.size - n_free, 1)
    return FitResult(
        alpha=float(alpha),
        phi=float(phi),
        contrast0=float(c0),
        gamma_fit=float(gamma),
        covariance=cov,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        chi2_red=float(np.sum((resid / sigma) ** 2) / dof),
        n_points=int(tau.size),
        gamma_fixed=gamma_fixed is not None,
    )


def fit_fringe(records, **kw) -> FitResult:
    """Fit a list of :class:`~bellramsey.protocol.MeasurementRecord`."""
    if not records:
        raise FitError("no records")
    tau = np.array([r.tau for r in records])
    par = np.array([r.parity_estimate for r in records])
    shots = np.array([r.shots for r in records], dtype=float)
    return fit_fringe_arrays(tau, par, shots=shots, **kw)


def phase_from_parity(parity: float, contrast: float = 1.0) -> float:
    """Phase x in [-pi/2, pi/2] with parity = contrast * sin(x)."""
    return math.asin(max(-1.0, min(1.0, parity / contrast)))


# --------------------------------------------------------------------------
# interleaved drift correction


@dataclass
class InterleavedEstimate:
    alpha: float
    alpha_err: float
    block_alphas: np.ndarray
    block_drifts: np.ndarray
    corrected: bool


def interleaved_alpha(
    zero_records,
    long_records,
    tau_long: float,
    alpha_prior: float,
    *,
    contrast_zero: float = 1.0,
    contrast_long: float = 1.0,
    correct: bool = True,
) -> InterleavedEstimate:
    """Drift-corrected fringe frequency from interleaved tau = 0 / tau_long blocks.

    Assumes phi0 = pi/2, so P(0) = -C0 sin(d) and P(tau) = C sin(alpha tau - d)
    with d the drift of the preparation phase in that block. ``alpha_prior``
    (e.g. from a tau-ladder fit) resolves the integer-fringe ambiguity.
    """
    if len(zero_records) != len(long_records) or not zero_records:
        raise ValueError("need matching, non-empty zero and long record lists")
    drifts = []
    alphas = []
    for rz, rl in zip(zero_records, long_records):
        d = phase_from_parity(-rz.parity_estimate, contrast_zero) if correct else 0.0
        x = phase_from_parity(rl.parity_estimate, contrast_long)
        target = alpha_prior * tau_long - d
        # candidates x + 2 pi k and (pi - x) + 2 pi k; take the one nearest the prior
        cands = []
        for base in (x, math.pi - x):
            k = round((target - base) / (2 * math.pi))
            cands.append(base + 2 * math.pi * k)
        theta = min(cands, key=lambda c: abs(c - target))
        drifts.append(d)
        alphas.append((theta + d) / tau_long)
    alphas = np.array(alphas)
    n = alphas.size
    err = float(alphas.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return InterleavedEstimate(float(alphas.mean()), err, alphas, np.array(drifts), correct)


# --------------------------------------------------------------------------
# shift separation and averaging


def _val_err(x):
    if isinstance(x, FitResult):
        return x.alpha, x.alpha_err
    if isinstance(x, (tuple, list)):
        return float(x[0]), float(x[1])
    return float(x), 0.0


@dataclass
class ShiftDecomposition:
    alpha_qs: float
    alpha_bgrad: float
    alpha_qs_err: float
    alpha_bgrad_err: float
    precondition_ok: bool

    def to_dict(self) -> dict:
        return {
            "alpha_qs": self.alpha_qs,
            "alpha_qs_err": self.alpha_qs_err,
            "alpha_bgrad": self.alpha_bgrad,
            "alpha_bgrad_err": self.alpha_bgrad_err,
            "quadrupole_hz": self.alpha_qs / (2 * math.pi),
            "bgrad_hz": self.alpha_bgrad / (2 * math.pi),
            "precondition_ok": self.precondition_ok,
        }


def separate_shifts(fit1, fit2) -> ShiftDecomposition:
    """Split the Psi1 and Psi2 rates into quadrupole and B-gradient parts.

    Accepts :class:`FitResult` objects, ``(value, err)`` pairs or plain values.
    The split assumes |alpha_B'| < |alpha_QS|; a violation is flagged, not raised.
    """
    a1, e1 = _val_err(fit1)
    a2, e2 = _val_err(fit2)
    qs = 0.5 * (a1 + a2)
    bg = 0.5 * (a1 - a2)
    err = 0.5 * math.hypot(e1, e2)
    ok = abs(bg) < abs(qs)
    if not ok:
        warnings.warn("|alpha_B'| >= |alpha_QS|: the Psi1/Psi2 split is not trustworthy", RuntimeWarning)
    return ShiftDecomposition(qs, bg, err, err, ok)


REQUIRED_MJ = (0.5, 1.5, 2.5)
ORDERINGS = ("Psi0", "Psi0Swapped")


def average_mj(freqs: dict, m_primes=REQUIRED_MJ, orderings=ORDERINGS) -> float:
    """Mean super-transition frequency over m' and both ion orderings.

    ``freqs`` maps ``(ordering, m')`` to a frequency (any unit). Quadrupole
    shifts cancel because sum over m' of j(j+1) - 3 m'^2 is zero; the
    B-gradient term flips sign between the orderings.
    """
    missing = [(o, m) for o in orderings for m in m_primes if (o, m) not in freqs]
    if missing:
        names = ", ".join(f"{o}(m'={m:g})" for o, m in missing)
        raise KeyError(f"missing runs for averaging: {names}")
    vals = [_val_err(freqs[(o, m)])[0] for o in orderings for m in m_primes]
    return float(np.mean(vals))


# --------------------------------------------------------------------------
# quadrupole moment from an omega_z scan

#: Psi1 level factor 2 f(1/2) - 2 f(5/2) with f(m) = [j(j+1) - 3m^2]/[j(2j-1)].
PSI1_LEVEL_FACTOR = 3.6


@dataclass
class ThetaFit:
    theta_ea0: float
    theta_err: float
    patch_grad: float
    patch_err: float
    slope: float
    intercept: float
    covariance: np.ndarray = field(repr=False)
    mode: str = "affine"

    def to_dict(self) -> dict:
        return {
            "theta_ea0": self.theta_ea0,
            "theta_err": self.theta_err,
            "patch_grad": self.patch_grad,
            "patch_err": self.patch_err,
            "slope": self.slope,
            "intercept": self.intercept,
            "mode": self.mode,
        }


def alpha_per_gradient(beta: float, level_factor: float = PSI1_LEVEL_FACTOR) -> float:
    """d(alpha)/d(dEdz * Theta) in rad/s per (V/m^2 * C m^2)."""
    return 2 * math.pi * level_factor * angular_factor(beta) / (4 * PLANCK_H)


def fit_theta(
    omega_z,
    alpha_qs,
    species: IonSpecies,
    beta: float = 0.0,
    sigma=None,
    *,
    level_factor: float = PSI1_LEVEL_FACTOR,
    mode: str = "affine",
) -> ThetaFit:
    """Infer Theta and a patch gradient from alpha_QS(omega_z^2).

    Model: alpha_QS = kappa * Theta * (-2 m omega_z^2 / q + patch), i.e.
    affine in omega_z^2 with slope s = -2 kappa Theta m / q. ``mode =
    "magnitude"`` fits |s omega_z^2 + p| instead.
    """
    w2 = np.asarray(omega_z, dtype=float) ** 2
    y = np.asarray(alpha_qs, dtype=float)
    if np.unique(w2).size < 3:
        raise ValueError("fit_theta needs at least 3 distinct omega_z values")
    kappa = alpha_per_gradient(beta, level_factor)
    if abs(kappa) < 1e-9 * abs(alpha_per_gradient(0.0, level_factor)):
        raise ValueError("beta at the magic angle: alpha carries no quadrupole information")
    absolute = sigma is not None
    sig = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    X = np.column_stack([w2, np.ones_like(w2)])
    Xw = X / sig[:, None]
    yw = y / sig
    if mode == "affine":
        coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
        J = Xw
        resid = yw - Xw @ coef
    elif mode == "magnitude":
        c0, *_ = np.linalg.lstsq(Xw, np.abs(yw), rcond=None)
        res = least_squares(lambda c: (np.abs(X @ c) - np.abs(y)) / sig, c0, method="lm")
        coef = res.x
        J = res.jac
        resid = res.fun
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cov = np.linalg.inv(J.T @ J)
    if not absolute:
        dof = max(len(y) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    s, p = coef
    grad_per_w2 = -2 * species.mass / species.charge
    theta = s / (kappa * grad_per_w2)
    theta_err = math.sqrt(cov[0, 0]) / abs(kappa * grad_per_w2)
    # patch = p * grad_per_w2 / s
    g = np.array([-p * grad_per_w2 / s**2, grad_per_w2 / s])
    patch = p * grad_per_w2 / s
    patch_err = math.sqrt(max(g @ cov @ g, 0.0))
    return ThetaFit(
        theta_ea0=theta / E_A0_SQUARED,
        theta_err=theta_err / E_A0_SQUARED,
        patch_grad=patch,
        patch_err=patch_err,
        slope=float(s),
        intercept=float(p),
        covariance=cov,
        mode=mode,
    )


def beta_sensitivity(beta: float, delta_beta: float) -> float:
    """Worst-case relative change of (3cos^2 beta - 1) for beta -> beta +/- delta_beta."""
    a0 = angular_factor(beta)
    if abs(a0) < 1e-9:
        warnings.warn("beta at the magic angle: sensitivity is unbounded", RuntimeWarning)
        return math.inf
    return max(abs(1 - angular_factor(beta + s * delta_beta) / a0) for s in (1.0, -1.0))
