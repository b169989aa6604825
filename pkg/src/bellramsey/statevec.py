"""Exact two-ion state engine on the 8 x 8 = 64 dimensional product space.

Basis order: flat index ``8 * i1 + i2`` where ``i1``, ``i2`` are positions
in :data:`bellramsey.physdata.LEVELS` for ion 1 and ion 2.

Frame convention: every amplitude evolves in the rotating frame of a single
probe laser. The per-level frequency handed to :func:`free_evolve` is the
level's energy in that frame (Hz): S levels carry their Zeeman shift, D
levels carry the laser detuning nu0 - nu_L plus Zeeman and quadrupole
shifts. Pulses are ideal rotations in that frame.

Rotation convention on a pair (g = lower S level, e = upper D level)::

    R(theta, phi)|g> = cos(theta/2)|g> - i e^{+i phi} sin(theta/2)|e>
    R(theta, phi)|e> = cos(theta/2)|e> - i e^{-i phi} sin(theta/2)|g>

Detection is manifold-resolved only: S -> g (sigma_z = -1), D -> e (+1).

Besides pure states the module carries density-matrix counterparts of the
same operations (``*_rho``) for the noise-free expectation mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .physdata import LEVELS, N_LEVELS, UPPER_MASK, Manifold, ZeemanLevel

DIM = N_LEVELS * N_LEVELS
NORM_TOL = 1e-12

# Outcome order used for joint probabilities and counts.
OUTCOMES = ("ee", "eg", "ge", "gg")
_PARITY_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])

# number of ions in D for every basis state, shape (8, 8)
_N_UPPER = UPPER_MASK[:, None].astype(int) + UPPER_MASK[None, :].astype(int)


class InvalidPulseError(ValueError):
    pass


@dataclass(frozen=True)
class TwoIonState:
    """Normalized pure state; ``amplitudes`` has shape (64,)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(DIM)
        n = float(np.vdot(a, a).real)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"state is not normalized (norm^2 = {n:.12g})")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def matrix(self) -> np.ndarray:
        """Amplitudes as an (8, 8) array indexed [level1, level2]."""
        return self.amplitudes.reshape(N_LEVELS, N_LEVELS)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def overlap(self, other: "TwoIonState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def amplitude(self, level1: ZeemanLevel, level2: ZeemanLevel) -> complex:
        return complex(self.matrix[level1.index, level2.index])

    def swap_ions(self) -> "TwoIonState":
        return TwoIonState(self.matrix.T.copy())

    def density(self) -> np.ndarray:
        """Density matrix with shape (8, 8, 8, 8), indices [i1, i2, j1, j2]."""
        m = self.matrix
        return np.einsum("ab,cd->abcd", m, m.conj())

    @classmethod
    def superposition(cls, terms) -> "TwoIonState":
        """Normalized state from ``[(coeff, level1, level2), ...]``."""
        m = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        for coeff, l1, l2 in terms:
            m[l1.index, l2.index] += coeff
        n = np.linalg.norm(m)
        if n == 0:
            raise ValueError("zero state")
        return cls(m / n)


@dataclass(frozen=True)
class PulseSpec:
    """Ideal rotation on one ion's {lower, upper} pair.

    ``ion`` is 1, 2 or ``"both"``. ``detuning_phase`` is an extra frame phase
    added to ``phase`` when the pulse is applied.
    """

    ion: int | str
    lower: ZeemanLevel
    upper: ZeemanLevel
    area: float
    phase: float = 0.0
    detuning_phase: float = 0.0

    def __post_init__(self):
        if self.ion not in (1, 2, "both"):
            raise InvalidPulseError(f"ion must be 1, 2 or 'both', got {self.ion!r}")
        check_transition(self.lower, self.upper)

    @property
    def ions(self) -> tuple[int, ...]:
        return (1, 2) if self.ion == "both" else (int(self.ion),)


def check_transition(lower: ZeemanLevel, upper: ZeemanLevel) -> None:
    if lower.manifold is not Manifold.S12 or upper.manifold is not Manifold.D52:
        raise InvalidPulseError(f"pulse must connect S1/2 to D5/2, got {lower} -> {upper}")
    if abs(upper.m_j - lower.m_j) > 2:
        raise InvalidPulseError(f"{lower} -> {upper} violates |dm| <= 2")


def default_branching() -> dict[ZeemanLevel, dict[ZeemanLevel, float]]:
    """Uniform over the S sub-levels reachable from each D sub-level with |dm| <= 2."""
    table = {}
    s_levels = [lv for lv in LEVELS if lv.manifold is Manifold.S12]
    for d in LEVELS:
        if d.manifold is not Manifold.D52:
            continue
        allowed = [s for s in s_levels if abs(d.m_j - s.m_j) <= 2]
        table[d] = {s: 1.0 / len(allowed) for s in allowed}
    return table


@dataclass(frozen=True)
class DecayChannel:
    """Spontaneous decay D5/2 -> S1/2 at rate ``gamma`` for each ion."""

    gamma: float
    branching: dict = field(default_factory=default_branching)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        for d, dist in self.branching.items():
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"branching from {d} sums to {total}")

    def branching_matrix(self) -> np.ndarray:
        """B[s_index, d_index] = probability that level d decays to s."""
        b = np.zeros((N_LEVELS, N_LEVELS))
        for d, dist in self.branching.items():
            for s, p in dist.items():
                b[s.index, d.index] = p
        return b


# --------------------------------------------------------------------------
# single-ion operators


def rotation_matrix(lower: ZeemanLevel, upper: ZeemanLevel, area: float, phase: float) -> np.ndarray:
    """8x8 unitary of an ideal rotation on {lower, upper}, identity elsewhere."""
    u = np.eye(N_LEVELS, dtype=complex)
    g, e = lower.index, upper.index
    c, s = math.cos(area / 2), math.sin(area / 2)
    u[g, g] = c
    u[e, e] = c
    u[e, g] = -1j * np.exp(1j * phase) * s
    u[g, e] = -1j * np.exp(-1j * phase) * s
    return u


def _apply_ion_op(m: np.ndarray, op: np.ndarray, ion: int) -> np.ndarray:
    if ion == 1:
        return op @ m
    return m @ op.T


def _apply_ion_op_rho(rho: np.ndarray, op: np.ndarray, ion: int) -> np.ndarray:
    """op_ion rho op_ion^dagger for rho indexed [i1, i2, j1, j2]."""
    if ion == 1:
        r = np.tensordot(op, rho, axes=(1, 0))
        return np.moveaxis(np.tensordot(r, op.conj(), axes=(2, 1)), -1, 2)
    r = np.moveaxis(np.tensordot(op, rho, axes=(1, 1)), 0, 1)
    return np.tensordot(r, op.conj(), axes=(3, 1))


def _pulse_ops(pulse: PulseSpec):
    op = rotation_matrix(pulse.lower, pulse.upper, pulse.area, pulse.phase + pulse.detuning_phase)
    return [(op, ion) for ion in pulse.ions]


# --------------------------------------------------------------------------
# pure-state operations


def prepare_product(level1: ZeemanLevel, level2: ZeemanLevel) -> TwoIonState:
    m = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    m[level1.index, level2.index] = 1.0
    return TwoIonState(m)


def apply_rotation(state: TwoIonState, pulse: PulseSpec) -> TwoIonState:
    m = state.matrix
    for op, ion in _pulse_ops(pulse):
        m = _apply_ion_op(m, op, ion)
    return TwoIonState(m)


def basis_frequencies(shifts1, shifts2) -> np.ndarray:
    """Frame frequency of every product basis state, shape (8, 8), Hz."""
    return np.asarray(shifts1, dtype=float)[:, None] + np.asarray(shifts2, dtype=float)[None, :]


def free_evolve(state: TwoIonState, shifts1, shifts2, tau: float) -> TwoIonState:
    """Diagonal evolution: amplitude *= exp(-i 2 pi (f1(l1) + f2(l2)) tau)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return apply_phases(state, 2 * math.pi * basis_frequencies(shifts1, shifts2) * tau)


def apply_phases(state: TwoIonState, phases: np.ndarray) -> TwoIonState:
    """Multiply by exp(-i * phases) with ``phases`` of shape (8, 8)."""
    return TwoIonState(state.matrix * np.exp(-1j * phases))


def _n_upper_populations(m: np.ndarray) -> np.ndarray:
    pop = np.abs(m) ** 2
    return np.array([pop[_N_UPPER == k].sum() for k in range(3)])


def apply_decay(state: TwoIonState, channel: DecayChannel, tau: float, rng: np.random.Generator):
    """One quantum-jump trajectory of spontaneous decay over [0, tau].

    Between jumps the no-jump evolution damps every D amplitude by
    exp(-gamma t / 2). Because the survival probability is a quadratic in
    exp(-gamma t) (0, 1 or 2 ions in D), jump times are drawn exactly by
    inverting it. Each jump is a distinct channel |s><d| on one ion.

    Returns ``(state, jump_count)``.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    gamma = channel.gamma
    m = state.matrix.copy()
    if gamma == 0 or tau == 0:
        return TwoIonState(m), 0
    bmat = channel.branching_matrix()
    t = 0.0
    jumps = 0
    while True:
        p0, p1, p2 = _n_upper_populations(m)
        if p1 + p2 <= 0:
            break
        r = rng.random()
        x_end = math.exp(-gamma * (tau - t))
        if p0 + p1 * x_end + p2 * x_end**2 >= r:
            m = m * np.exp(-0.5 * gamma * (tau - t) * _N_UPPER)
            m /= np.linalg.norm(m)
            break
        # survival p0 + p1 x + p2 x^2 = r, with x = exp(-gamma s)
        if p2 > 0:
            x = (-p1 + math.sqrt(max(p1 * p1 - 4 * p2 * (p0 - r), 0.0))) / (2 * p2)
        else:
            x = (r - p0) / p1
        x = min(max(x, x_end), 1.0)
        s = -math.log(x) / gamma
        m = m * np.exp(-0.5 * gamma * s * _N_UPPER)
        m /= np.linalg.norm(m)
        t += s
        # choose ion, source D level and target S level by rate
        pop = np.abs(m) ** 2
        pop1 = pop.sum(axis=1) * UPPER_MASK
        pop2 = pop.sum(axis=0) * UPPER_MASK
        rates = np.concatenate([(bmat * pop1[None, :]).ravel(), (bmat * pop2[None, :]).ravel()])
        k = int(np.searchsorted(np.cumsum(rates), rng.random() * rates.sum(), side="right"))
        k = min(k, rates.size - 1)
        ion, rest = divmod(k, N_LEVELS * N_LEVELS)
        s_idx, d_idx = divmod(rest, N_LEVELS)
        new = np.zeros_like(m)
        if ion == 0:
            new[s_idx, :] = m[d_idx, :]
        else:
            new[:, s_idx] = m[:, d_idx]
        m = new / np.linalg.norm(new)
        jumps += 1
    return TwoIonState(m), jumps


def joint_probabilities(state: TwoIonState) -> np.ndarray:
    """(p_ee, p_eg, p_ge, p_gg); first letter refers to ion 1."""
    return _joint_from_populations(np.abs(state.matrix) ** 2)


def _joint_from_populations(pop: np.ndarray) -> np.ndarray:
    up = UPPER_MASK
    lo = ~UPPER_MASK
    p = np.array([
        pop[np.ix_(up, up)].sum(),
        pop[np.ix_(up, lo)].sum(),
        pop[np.ix_(lo, up)].sum(),
        pop[np.ix_(lo, lo)].sum(),
    ])
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def parity(probs) -> float:
    """<sigma_z(1) sigma_z(2)> = p_ee + p_gg - p_eg - p_ge."""
    return float(np.dot(_PARITY_SIGNS, probs))


def sample_outcomes(probs, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Counts per outcome for ``shots`` projective measurements.

    Shot ``i`` consumes the ``i``-th uniform of ``rng``, so a given
    (stream, shot index) always yields the same outcome.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return np.bincount(sample_shot_outcomes(probs, shots, rng), minlength=4)


def sample_shot_outcomes(probs, shots: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(shots), side="right")
    return np.minimum(idx, len(cdf) - 1)


# --------------------------------------------------------------------------
# density-matrix counterparts (expectation mode)


def apply_rotation_rho(rho: np.ndarray, pulse: PulseSpec) -> np.ndarray:
    for op, ion in _pulse_ops(pulse):
        rho = _apply_ion_op_rho(rho, op, ion)
    return rho


def apply_phases_rho(rho: np.ndarray, phases: np.ndarray) -> np.ndarray:
    ph = np.exp(-1j * phases)
    return rho * ph[:, :, None, None] * ph.conj()[None, None, :, :]


def decay_kraus(channel: DecayChannel, tau: float) -> list[np.ndarray]:
    """Kraus operators of one ion's decay over ``tau`` (amplitude damping)."""
    x = math.exp(-channel.gamma * tau)
    k0 = np.diag(np.where(UPPER_MASK, math.sqrt(x), 1.0)).astype(complex)
    ops = [k0]
    bmat = channel.branching_matrix()
    for s_idx, d_idx in zip(*np.nonzero(bmat)):
        k = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        k[s_idx, d_idx] = math.sqrt(bmat[s_idx, d_idx] * (1 - x))
        ops.append(k)
    return ops


def apply_decay_rho(rho: np.ndarray, channel: DecayChannel, tau: float) -> np.ndarray:
    """Exact ensemble decay over ``tau``; the two ions decay independently."""
    if channel.gamma == 0 or tau == 0:
        return rho
    kraus = decay_kraus(channel, tau)
    for ion in (1, 2):
        rho = sum(_apply_ion_op_rho(rho, k, ion) for k in kraus)
    return rho


def joint_probabilities_rho(rho: np.ndarray) -> np.ndarray:
    pop = np.einsum("abab->ab", rho).real
    return _joint_from_populations(pop)
