"""Ramsey protocols on single ions and two-ion Bell states.

Every protocol is a coherent superposition of two product components,
``lower`` and ``upper``::

    SingleIon    R(pi/2, phi0)|s+>           (ion 2 is a spectator in s-)
    BellGGEE     |s+ s+>  +  e^{i phi0} |m' m'>
    Psi0         |s+ s->  +  e^{i phi0} |m' -m'>
    Psi0Swapped  |s- s+>  +  e^{i phi0} |-m' m'>
    Psi1         |5/2 -5/2>  +  e^{i phi0} |1/2 -1/2>
    Psi2         |-5/2 5/2>  +  e^{i phi0} |-1/2 1/2>

The analysis maps the lower/upper coherence onto the manifold parity so
that, noise-free and without decay,

    parity(tau) = cos(alpha * tau - phi0),
    alpha = 2 pi [f(upper) - f(lower)],

with f the frame frequency of a product state. For Psi1/Psi2 the lower
D-D component is first shelved into S by pi pulses. For SingleIon the
record reports p_e - p_g of ion 1 (the absent partner reads as +1).

Preparation infidelity eps replaces the state, with probability eps, by
one of the two components chosen at random (fully dephased mixture).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import statevec as sv
from .noiseproc import NoiseConfig, ShotNoise, shot_environment
from .physdata import (
    D,
    S,
    S_MINUS,
    S_PLUS,
    FieldEnvironment,
    IonSpecies,
    ZeemanLevel,
    level_shift_total,
    LEVELS,
    UPPER_MASK,
    zeeman_coefficients,
)
from .trapmodel import TrapConfig, local_field


class ConfigError(ValueError):
    """Inconsistent run configuration, raised before any shot runs."""


class ProtocolKind(str, enum.Enum):
    SINGLE_ION = "SingleIon"
    BELL_GGEE = "BellGGEE"
    PSI0 = "Psi0"
    PSI0_SWAPPED = "Psi0Swapped"
    PSI1 = "Psi1"
    PSI2 = "Psi2"

    @property
    def entangled(self) -> bool:
        return self is not ProtocolKind.SINGLE_ION

    @property
    def double_d(self) -> bool:
        return self in (ProtocolKind.PSI1, ProtocolKind.PSI2)


SPECTATOR = S_MINUS

#: trajectory: one quantum-jump trajectory and one detection per shot.
#: expectation: exact ensemble probabilities, multinomial projection noise.
#: exact: exact ensemble probabilities apportioned to integer counts (no sampling).
MODES = ("trajectory", "expectation", "exact")
_SEED_TAGS = {k: i for i, k in enumerate(ProtocolKind)}


@dataclass(frozen=True)
class ProtocolSpec:
    """One Ramsey experiment.

    ``detuning`` is nu0 - nu_L of the probe laser in Hz (added to every D
    level's frame frequency). ``shot_overhead`` is the preparation plus
    detection time per shot, used only for lab-time bookkeeping.
    """

    kind: ProtocolKind
    m_prime: float = 2.5
    phi0: float = 0.0
    prep_infidelity: float = 0.0
    tau_list: tuple = (0.0,)
    shots_per_tau: int = 100
    detuning: float = 0.0
    shot_overhead: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        object.__setattr__(self, "tau_list", tuple(float(t) for t in self.tau_list))
        if not (0.0 <= self.prep_infidelity < 1.0):
            raise ConfigError(f"prep_infidelity must lie in [0, 1), got {self.prep_infidelity}")
        if any(t < 0 for t in self.tau_list):
            raise ConfigError("tau values must be non-negative")
        if self.shots_per_tau < 1:
            raise ConfigError(f"shots_per_tau must be >= 1, got {self.shots_per_tau}")
        if self.shot_overhead < 0:
            raise ConfigError("shot_overhead must be non-negative")
        # raises for an m' that breaks the selection rules
        try:
            analysis_pulses(self)
        except (ValueError, sv.InvalidPulseError) as exc:
            raise ConfigError(f"{self.kind.value}: invalid m_prime {self.m_prime}: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["tau_list"] = list(self.tau_list)
        return d


@dataclass
class MeasurementRecord:
    tau: float
    counts: tuple
    parity_estimate: float
    meta: dict = field(default_factory=dict)

    @property
    def shots(self) -> int:
        return int(sum(self.counts))

    @property
    def parity_err(self) -> float:
        return math.sqrt(max(1.0 - self.parity_estimate**2, 0.0) / self.shots)

    @classmethod
    def from_counts(cls, tau: float, counts, meta=None) -> "MeasurementRecord":
        counts = tuple(int(c) for c in counts)
        n = sum(counts)
        par = (counts[0] + counts[3] - counts[1] - counts[2]) / n
        return cls(tau=float(tau), counts=counts, parity_estimate=par, meta=dict(meta or {}))

    def to_dict(self) -> dict:
        n_ee, n_eg, n_ge, n_gg = self.counts
        return {
            "tau": self.tau,
            "n_ee": n_ee,
            "n_eg": n_eg,
            "n_ge": n_ge,
            "n_gg": n_gg,
            "parity": self.parity_estimate,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementRecord":
        rec = cls.from_counts(d["tau"], (d["n_ee"], d["n_eg"], d["n_ge"], d["n_gg"]), d.get("meta"))
        if "parity" in d and abs(rec.parity_estimate - d["parity"]) > 1e-12:
            raise ValueError("parity field disagrees with counts")
        return rec


# --------------------------------------------------------------------------
# level bookkeeping


def components(spec: ProtocolSpec) -> tuple[tuple[ZeemanLevel, ZeemanLevel], tuple[ZeemanLevel, ZeemanLevel]]:
    """(lower, upper) product components as (ion1 level, ion2 level)."""
    k, m = spec.kind, spec.m_prime
    if k is ProtocolKind.SINGLE_ION:
        return (S_PLUS, SPECTATOR), (D(m), SPECTATOR)
    if k is ProtocolKind.BELL_GGEE:
        return (S_PLUS, S_PLUS), (D(m), D(m))
    if k is ProtocolKind.PSI0:
        return (S_PLUS, S_MINUS), (D(m), D(-m))
    if k is ProtocolKind.PSI0_SWAPPED:
        return (S_MINUS, S_PLUS), (D(-m), D(m))
    if k is ProtocolKind.PSI1:
        return (D(2.5), D(-2.5)), (D(0.5), D(-0.5))
    if k is ProtocolKind.PSI2:
        return (D(-2.5), D(2.5)), (D(-0.5), D(0.5))
    raise ConfigError(f"unknown protocol {k}")


def _shelf(level: ZeemanLevel) -> ZeemanLevel:
    return S(0.5) if level.m_j > 0 else S(-0.5)


def analysis_pulses(spec: ProtocolSpec) -> list[sv.PulseSpec]:
    lower, upper = components(spec)
    if spec.kind is ProtocolKind.SINGLE_ION:
        return [sv.PulseSpec(1, lower[0], upper[0], math.pi / 2, 0.0)]
    pulses = []
    s_levels = list(lower)
    if spec.kind.double_d:
        # shelve the lower D-D component; phase pi/2 on both ions leaves its sign unchanged
        s_levels = [_shelf(lv) for lv in lower]
        for ion in (1, 2):
            pulses.append(sv.PulseSpec(ion, s_levels[ion - 1], lower[ion - 1], math.pi, math.pi / 2))
    for ion in (1, 2):
        pulses.append(sv.PulseSpec(ion, s_levels[ion - 1], upper[ion - 1], math.pi / 2, math.pi / 2))
    return pulses


def ideal_state(spec: ProtocolSpec, phi0: float | None = None) -> sv.TwoIonState:
    phi = spec.phi0 if phi0 is None else phi0
    lower, upper = components(spec)
    c_up = np.exp(1j * phi)
    if spec.kind is ProtocolKind.SINGLE_ION:
        c_up = -1j * c_up
    return sv.TwoIonState.superposition([(1.0, *lower), (c_up, *upper)])


def prepare_bell(spec: ProtocolSpec, rng: np.random.Generator, dphi0: float = 0.0) -> sv.TwoIonState:
    """Target state of ``spec``; with probability eps one component at random."""
    eps = spec.prep_infidelity
    if eps > 0 and rng.random() < eps:
        lower, upper = components(spec)
        return sv.prepare_product(*(lower if rng.random() < 0.5 else upper))
    return ideal_state(spec, spec.phi0 + dphi0)


def _prepared_density(spec: ProtocolSpec, phi0: float) -> np.ndarray:
    rho = ideal_state(spec, phi0).density()
    eps = spec.prep_infidelity
    if eps > 0:
        lower, upper = components(spec)
        mix = 0.5 * (sv.prepare_product(*lower).density() + sv.prepare_product(*upper).density())
        rho = (1 - eps) * rho + eps * mix
    return rho


def frame_frequencies(
    spec: ProtocolSpec, env: FieldEnvironment, trap: TrapConfig, species: IonSpecies
) -> tuple[np.ndarray, np.ndarray]:
    """Per-level frame frequency (Hz) of ion 1 and ion 2."""
    out = []
    for ion in (1, 2):
        b = local_field(env, trap, species, ion)
        f = np.array([level_shift_total(lv, env, species, b) for lv in LEVELS])
        out.append(f + spec.detuning * UPPER_MASK)
    return out[0], out[1]


def predicted_alpha(spec: ProtocolSpec, env: FieldEnvironment, trap: TrapConfig, species: IonSpecies) -> float:
    """Fringe angular frequency 2 pi [f(upper) - f(lower)], rad/s."""
    f1, f2 = frame_frequencies(spec, env, trap, species)
    lower, upper = components(spec)
    df = (f1[upper[0].index] + f2[upper[1].index]) - (f1[lower[0].index] + f2[lower[1].index])
    if spec.kind is ProtocolKind.SINGLE_ION:
        df = f1[upper[0].index] - f1[lower[0].index]
    return 2 * math.pi * df


def coherence_decay_rate(kind: ProtocolKind, gamma: float) -> float:
    """Fringe contrast decay rate for D-level decay rate ``gamma`` (one D level per excited ion)."""
    if kind is ProtocolKind.SINGLE_ION:
        return 0.5 * gamma
    if kind.double_d:
        return 2.0 * gamma
    return gamma


def _detect(kind: ProtocolKind, probs: np.ndarray) -> np.ndarray:
    if kind is ProtocolKind.SINGLE_ION:
        p_e = probs[0] + probs[1]
        return np.array([p_e, 0.0, 1.0 - p_e, 0.0])
    return probs


def validate(spec: ProtocolSpec, trap: TrapConfig, noise: NoiseConfig, mode: str) -> None:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if spec.kind.entangled and trap.n_ions != 2:
        raise ConfigError(f"{spec.kind.value} needs a two-ion crystal (n_ions = 2)")
    if mode != "trajectory" and noise.has_fluctuations:
        raise ConfigError(f"{mode} mode does not sample field/laser noise; use trajectory mode")


# --------------------------------------------------------------------------
# shot kernel


@dataclass(frozen=True)
class _Context:
    spec: ProtocolSpec
    noise: NoiseConfig
    channel: sv.DecayChannel
    freqs: np.ndarray  # (8, 8) frame frequency of every basis state
    zcoef: np.ndarray  # (8, 8) Zeeman Hz/T of every basis state
    n_upper: np.ndarray  # (8, 8)
    pulses: tuple
    seed: int
    stream: int
    mode: str
    meta: dict


def _make_context(spec, env, trap, noise, species, seed, mode, stream, meta, channel=None) -> _Context:
    validate(spec, trap, noise, mode)
    f1, f2 = frame_frequencies(spec, env, trap, species)
    zc = zeeman_coefficients(species)
    return _Context(
        spec=spec,
        noise=noise,
        channel=channel if channel is not None else sv.DecayChannel(species.gamma),
        freqs=sv.basis_frequencies(f1, f2),
        zcoef=sv.basis_frequencies(zc, zc),
        n_upper=sv.basis_frequencies(UPPER_MASK, UPPER_MASK),
        pulses=tuple(analysis_pulses(spec)),
        seed=int(seed),
        stream=int(stream),
        mode=mode,
        meta=dict(meta),
    )


def _phases(ctx: _Context, tau: float, noise: ShotNoise) -> np.ndarray:
    ph = 2 * math.pi * ctx.freqs * tau
    if noise.b_integral or noise.laser_integral:
        ph = ph + 2 * math.pi * (ctx.zcoef * noise.b_integral - ctx.n_upper * noise.laser_integral)
    return ph


def _shot_rng(ctx: _Context, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(ctx.seed, spawn_key=(ctx.stream, *key)))


def _trajectory_outcomes(ctx: _Context, tau: float, t_labs, keys) -> np.ndarray:
    """One quantum trajectory plus one projective detection per shot."""
    base = None
    cache: dict = {}
    out = np.empty(len(keys), dtype=np.int64)
    for i, (t_lab, key) in enumerate(zip(t_labs, keys)):
        rng = _shot_rng(ctx, *key)
        noise = shot_environment(ctx.noise, tau, rng, t_lab)
        state = prepare_bell(ctx.spec, rng, noise.dphi0)
        state, _ = sv.apply_decay(state, ctx.channel, tau, rng)
        quiet = noise.b_integral == 0 and noise.laser_integral == 0
        ck = np.round(state.amplitudes, 13).tobytes() if quiet else None
        probs = cache.get(ck) if quiet else None
        if probs is None:
            if quiet:
                base = _phases(ctx, tau, noise) if base is None else base
                ph = base
            else:
                ph = _phases(ctx, tau, noise)
            state = sv.apply_phases(state, ph)
            for p in ctx.pulses:
                state = sv.apply_rotation(state, p)
            probs = _detect(ctx.spec.kind, sv.joint_probabilities(state))
            if quiet:
                cache[ck] = probs
        out[i] = sv.sample_shot_outcomes(probs, 1, rng)[0]
    return out


def ensemble_probabilities(
    spec: ProtocolSpec,
    env: FieldEnvironment,
    trap: TrapConfig,
    species: IonSpecies,
    tau: float,
    channel: sv.DecayChannel | None = None,
) -> np.ndarray:
    """Exact ensemble outcome probabilities (ee, eg, ge, gg) after the analysis."""
    ctx = _make_context(spec, env, trap, NoiseConfig(), species, 0, "expectation", 0, {}, channel)
    return expectation_probabilities(ctx, tau)


def decay_baseline(
    spec: ProtocolSpec,
    env: FieldEnvironment,
    trap: TrapConfig,
    species: IonSpecies,
    taus,
) -> np.ndarray:
    """Phase-independent parity offset left by decay products at each tau.

    Averaging the ensemble parity over phi0 and phi0 + pi removes the fringe
    and keeps the part that does not oscillate (for the double-D states both
    ions decaying then shelving gives (1 - e^{-Gamma tau})^2 / 2).
    """
    out = []
    for tau in np.atleast_1d(np.asarray(taus, dtype=float)):
        total = 0.0
        for shift in (0.0, math.pi):
            p = ensemble_probabilities(replace(spec, phi0=spec.phi0 + shift), env, trap, species, float(tau))
            total += p[0] + p[3] - p[1] - p[2]
        out.append(0.5 * total)
    return np.array(out)


def realization_probabilities(
    spec: ProtocolSpec,
    env: FieldEnvironment,
    trap: TrapConfig,
    species: IonSpecies,
    tau: float,
    shot_noise: ShotNoise = ShotNoise(),
) -> np.ndarray:
    """Outcome probabilities for one fixed noise realization, without decay."""
    ctx = _make_context(spec, env, trap, NoiseConfig(), species, 0, "trajectory", 0, {}, sv.DecayChannel(0.0))
    state = ideal_state(spec, spec.phi0 + shot_noise.dphi0)
    state = sv.apply_phases(state, _phases(ctx, tau, shot_noise))
    for p in ctx.pulses:
        state = sv.apply_rotation(state, p)
    return _detect(spec.kind, sv.joint_probabilities(state))


def expectation_probabilities(ctx: _Context, tau: float, phi0: float | None = None) -> np.ndarray:
    phi = ctx.spec.phi0 if phi0 is None else phi0
    rho = _prepared_density(ctx.spec, phi)
    rho = sv.apply_decay_rho(rho, ctx.channel, tau)
    rho = sv.apply_phases_rho(rho, _phases(ctx, tau, ShotNoise()))
    for p in ctx.pulses:
        rho = sv.apply_rotation_rho(rho, p)
    return _detect(ctx.spec.kind, sv.joint_probabilities_rho(rho))


def _drift_probabilities(ctx: _Context, tau: float, t_labs) -> np.ndarray:
    """Per-shot probabilities, shape (n, 4), under a drifting preparation phase."""
    # outcome probabilities are affine in (cos phi, sin phi)
    phi0 = ctx.spec.phi0
    p0 = expectation_probabilities(ctx, tau, phi0)
    pq = expectation_probabilities(ctx, tau, phi0 + math.pi / 2)
    pp = expectation_probabilities(ctx, tau, phi0 + math.pi)
    c, a, b = 0.5 * (p0 + pp), 0.5 * (p0 - pp), pq - 0.5 * (p0 + pp)
    dphi = ctx.noise.phi0_drift * np.asarray(t_labs)
    probs = c[None, :] + np.cos(dphi)[:, None] * a[None, :] + np.sin(dphi)[:, None] * b[None, :]
    probs = np.clip(probs, 0, None)
    return probs / probs.sum(axis=1, keepdims=True)


def _expectation_outcomes(ctx: _Context, tau: float, t_labs, stream_key) -> np.ndarray:
    rng = _shot_rng(ctx, *stream_key)
    u = rng.random(len(t_labs))
    if ctx.noise.phi0_drift == 0:
        probs = expectation_probabilities(ctx, tau)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return np.minimum(np.searchsorted(cdf, u, side="right"), 3)
    cdf = np.cumsum(_drift_probabilities(ctx, tau, t_labs), axis=1)
    cdf[:, -1] = 1.0
    return np.minimum((u[:, None] >= cdf).sum(axis=1), 3)


def apportion(probs, shots: int) -> np.ndarray:
    """Integer counts closest to probs * shots (largest remainder)."""
    raw = np.asarray(probs, dtype=float) * shots
    counts = np.floor(raw).astype(np.int64)
    short = shots - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _exact_counts(ctx: _Context, tau: float, t_labs) -> np.ndarray:
    if ctx.noise.phi0_drift == 0:
        return apportion(expectation_probabilities(ctx, tau), len(t_labs))
    return apportion(_drift_probabilities(ctx, tau, t_labs).mean(axis=0), len(t_labs))


def _counts(ctx: _Context, tau: float, t_labs, block_key: tuple) -> np.ndarray:
    if ctx.mode == "exact":
        return _exact_counts(ctx, tau, t_labs)
    return np.bincount(_outcomes(ctx, tau, t_labs, block_key), minlength=4)


def _outcomes(ctx: _Context, tau: float, t_labs, block_key: tuple) -> np.ndarray:
    if ctx.mode == "expectation":
        return _expectation_outcomes(ctx, tau, t_labs, block_key)
    keys = [(*block_key, i) for i in range(len(t_labs))]
    return _trajectory_outcomes(ctx, tau, t_labs, keys)


def _run_tau(args) -> MeasurementRecord:
    ctx, k, tau, t0 = args
    n = ctx.spec.shots_per_tau
    meta = dict(ctx.meta, tau_index=k)
    if ctx.mode == "exact" and ctx.noise.phi0_drift == 0:
        # no per-shot structure needed; allows very large nominal shot counts
        return MeasurementRecord.from_counts(tau, apportion(expectation_probabilities(ctx, tau), n), meta)
    t_labs = t0 + np.arange(n) * (tau + ctx.spec.shot_overhead)
    return MeasurementRecord.from_counts(tau, _counts(ctx, tau, t_labs, (0, k)), meta)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_fingerprint(*objs) -> str:
    """Short stable hash of the inputs of a run."""

    def enc(o):
        if hasattr(o, "to_dict"):
            return o.to_dict()
        if hasattr(o, "__dataclass_fields__"):
            return {k: enc(v) for k, v in asdict(o).items()}
        return o

    blob = json.dumps([enc(o) for o in objs], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_ramsey(
    spec: ProtocolSpec,
    env: FieldEnvironment,
    trap: TrapConfig,
    noise: NoiseConfig,
    species: IonSpecies,
    seed: int,
    *,
    mode: str = "trajectory",
    workers: int = 1,
    stream: int | None = None,
    channel: sv.DecayChannel | None = None,
    config_hash: str | None = None,
    extra_meta: dict | None = None,
) -> list[MeasurementRecord]:
    """Run a tau scan; one record per tau in ``spec.tau_list`` order.

    Each shot draws from its own random stream keyed by (seed, stream, tau
    index, shot index), so output does not depend on ``workers``.
    """
    if stream is None:
        stream = stream_id(spec)
    chash = config_hash or run_fingerprint(spec, env, trap, noise, species)
    meta = {"seed": int(seed), "protocol": spec.kind.value, "m_prime": spec.m_prime, "config_hash": chash, "mode": mode}
    meta.update(extra_meta or {})
    ctx = _make_context(spec, env, trap, noise, species, seed, mode, stream, meta, channel)
    jobs = []
    t0 = 0.0
    for k, tau in enumerate(spec.tau_list):
        jobs.append((ctx, k, tau, t0))
        t0 += spec.shots_per_tau * (tau + spec.shot_overhead)
    return _map(_run_tau, jobs, workers)


def stream_id(spec: ProtocolSpec) -> int:
    return _SEED_TAGS[spec.kind] * 16 + int(round(2 * spec.m_prime)) + 8


def _run_block(args):
    ctx, b, tau_long, pairs, t0 = args
    o = ctx.spec.shot_overhead
    period = 2 * o + tau_long
    t_zero = t0 + np.arange(pairs) * period
    t_long = t_zero + o
    res = []
    for sub, tau, t_labs in ((0, 0.0, t_zero), (1, tau_long, t_long)):
        meta = dict(ctx.meta, block=b, t_lab=float(t_labs.mean()))
        res.append(MeasurementRecord.from_counts(tau, _counts(ctx, tau, t_labs, (1 + sub, b)), meta))
    return tuple(res)


def run_interleaved(
    spec: ProtocolSpec,
    env: FieldEnvironment,
    trap: TrapConfig,
    noise: NoiseConfig,
    species: IonSpecies,
    seed: int,
    tau_long: float,
    n_blocks: int,
    pairs_per_block: int,
    *,
    mode: str = "trajectory",
    workers: int = 1,
    channel: sv.DecayChannel | None = None,
) -> tuple[list[MeasurementRecord], list[MeasurementRecord]]:
    """Alternate tau = 0 and tau = tau_long shots; return per-block records.

    Shots alternate zero/long within one lab-time sequence, so both series
    see the same preparation-phase drift. ``spec.phi0`` should be pi/2.
    """
    if not spec.kind.entangled:
        raise ConfigError("interleaving applies to entangled protocols")
    if n_blocks < 1 or pairs_per_block < 1:
        raise ConfigError("need at least one block and one pair per block")
    meta = {
        "seed": int(seed),
        "protocol": spec.kind.value,
        "m_prime": spec.m_prime,
        "config_hash": run_fingerprint(spec, env, trap, noise, species, tau_long),
        "mode": mode,
        "interleaved": True,
    }
    ctx = _make_context(spec, env, trap, noise, species, seed, mode, stream_id(spec), meta, channel)
    block_time = pairs_per_block * (2 * spec.shot_overhead + tau_long)
    jobs = [(ctx, b, tau_long, pairs_per_block, b * block_time) for b in range(n_blocks)]
    pairs = _map(_run_block, jobs, workers)
    return [p[0] for p in pairs], [p[1] for p in pairs]


def scan_mj(
    base: ProtocolSpec,
    env: FieldEnvironment,
    trap: TrapConfig,
    noise: NoiseConfig,
    species: IonSpecies,
    seed: int,
    m_primes=(0.5, 1.5, 2.5),
    *,
    mode: str = "trajectory",
    workers: int = 1,
) -> dict[tuple[str, float], list[MeasurementRecord]]:
    """Run Psi0 and Psi0Swapped for every m'; keys are (kind, m')."""
    if base.kind not in (ProtocolKind.PSI0, ProtocolKind.PSI0_SWAPPED):
        raise ConfigError("scan_mj needs a Psi0-family base protocol")
    out = {}
    for kind in (ProtocolKind.PSI0, ProtocolKind.PSI0_SWAPPED):
        for m in m_primes:
            spec = replace(base, kind=kind, m_prime=m)
            out[(kind.value, m)] = run_ramsey(spec, env, trap, noise, species, seed, mode=mode, workers=workers)
    return out


def tau_ladder(tau_max: float, n: int = 24, tau_min: float | None = None, include_zero: bool = True) -> tuple:
    """Geometrically spaced free-evolution times; breaks fringe aliasing."""
    if n < 2:
        raise ValueError("ladder needs n >= 2")
    tau_min = tau_max / 300 if tau_min is None else tau_min
    taus = np.geomspace(tau_min, tau_max, n - (1 if include_zero else 0))
    if include_zero:
        taus = np.concatenate([[0.0], taus])
    return tuple(float(t) for t in taus)
