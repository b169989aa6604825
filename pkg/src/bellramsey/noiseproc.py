"""Environmental noise: Ornstein-Uhlenbeck paths and per-shot realizations.

Three sources are modelled, all off by default:

* common-mode magnetic field fluctuation dB(t) (T),
* probe-laser frequency fluctuation dnu(t) (Hz),
* a linear drift of the preparation phase phi0 across lab time (rad/s).

A path is sampled on a grid with dt <= tau_c/10 and dt <= tau/100 and the
accumulated phase uses the trapezoid (segment midpoint) rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class NoiseConfig:
    b_sigma: float = 0.0
    b_tau_c: float = 1e-3
    laser_sigma: float = 0.0
    laser_tau_c: float = 1e-3
    phi0_drift: float = 0.0

    def __post_init__(self):
        if self.b_sigma < 0 or self.laser_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not (self.b_tau_c > 0 and self.laser_tau_c > 0):
            raise ValueError("correlation times must be positive")

    @property
    def has_fluctuations(self) -> bool:
        return self.b_sigma > 0 or self.laser_sigma > 0

    @property
    def is_quiet(self) -> bool:
        return not self.has_fluctuations and self.phi0_drift == 0


def ou_path(sigma: float, tau_c: float, dt: float, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary OU samples x_0 ... x_{n_steps} (n_steps + 1 values).

    Uses the exact update x_{k+1} = a x_k + sigma sqrt(1 - a^2) xi_k with
    a = exp(-dt / tau_c), started from N(0, sigma^2).
    """
    if dt <= 0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    if sigma == 0:
        return np.zeros(n_steps + 1)
    a = math.exp(-dt / tau_c)
    xi = rng.standard_normal(n_steps + 1)
    xi[0] *= sigma
    xi[1:] *= sigma * math.sqrt(1 - a * a)
    # x_k = a x_{k-1} + xi_k
    return lfilter([1.0], [1.0, -a], xi)


def path_integral(path: np.ndarray, dt: float) -> float:
    """Trapezoid integral of a sampled path."""
    if path.size < 2:
        return 0.0
    return float(dt * (path.sum() - 0.5 * (path[0] + path[-1])))


def integration_grid(tau: float, tau_c: float) -> tuple[float, int]:
    n = max(100, math.ceil(10 * tau / tau_c))
    return tau / n, n


@dataclass(frozen=True)
class ShotNoise:
    """Noise seen by one shot: integrals over the free evolution plus phi0 offset."""

    b_integral: float = 0.0  # T s
    laser_integral: float = 0.0  # Hz s
    dphi0: float = 0.0  # rad

    @property
    def is_zero(self) -> bool:
        return self.b_integral == 0 and self.laser_integral == 0 and self.dphi0 == 0


def shot_environment(config: NoiseConfig, tau: float, rng: np.random.Generator, t_lab: float = 0.0) -> ShotNoise:
    """Sample the noise realization for one shot of free-evolution time ``tau``.

    ``t_lab`` is the lab time at which the shot starts; it sets the
    preparation-phase drift.
    """
    b_int = 0.0
    l_int = 0.0
    if tau > 0:
        if config.b_sigma > 0:
            dt, n = integration_grid(tau, config.b_tau_c)
            b_int = path_integral(ou_path(config.b_sigma, config.b_tau_c, dt, n, rng), dt)
        if config.laser_sigma > 0:
            dt, n = integration_grid(tau, config.laser_tau_c)
            l_int = path_integral(ou_path(config.laser_sigma, config.laser_tau_c, dt, n, rng), dt)
    return ShotNoise(b_integral=b_int, laser_integral=l_int, dphi0=config.phi0_drift * t_lab)


def ou_phase_variance(sigma: float, tau_c: float, tau: float) -> float:
    """Variance of the integral of a stationary OU process over [0, tau]."""
    x = tau / tau_c
    return 2 * sigma**2 * tau_c**2 * (x - 1 + math.exp(-x))
