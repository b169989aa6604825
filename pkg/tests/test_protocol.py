import math
from dataclasses import replace

import numpy as np
import pytest

from bellramsey import statevec as sv
from bellramsey.estimate import fit_fringe, interleaved_alpha
from bellramsey.noiseproc import NoiseConfig, ShotNoise, shot_environment
from bellramsey.physdata import D, S, S_MINUS, S_PLUS, FieldEnvironment, quadrupole_shift, zeeman_shift
from bellramsey.protocol import (
    ConfigError,
    MeasurementRecord,
    ProtocolKind as K,
    ProtocolSpec,
    apportion,
    coherence_decay_rate,
    decay_baseline,
    ensemble_probabilities,
    ideal_state,
    predicted_alpha,
    prepare_bell,
    realization_probabilities,
    run_interleaved,
    run_ramsey,
    scan_mj,
    tau_ladder,
)
from bellramsey.trapmodel import TrapConfig, environment_for, local_field

NO_DECAY = sv.DecayChannel(0.0)
QUIET = NoiseConfig()


@pytest.fixture
def env_full(sr, trap_1mhz):
    return environment_for(trap_1mhz, sr, B0=4e-4, B_grad=2e-3)


def hand_alpha(kind, m, env, trap, sp, detuning=0.0):
    """Closed-form fringe frequency from per-level shifts, summed by hand."""
    b1, b2 = local_field(env, trap, sp, 1), local_field(env, trap, sp, 2)

    def f(level, b):
        extra = detuning if level.is_upper else 0.0
        return zeeman_shift(level, b, sp) + quadrupole_shift(level, env, sp) + extra

    if kind is K.SINGLE_ION:
        return 2 * math.pi * (f(D(m), b1) - f(S_PLUS, b1))
    pairs = {
        K.BELL_GGEE: ((S_PLUS, S_PLUS), (D(m), D(m))),
        K.PSI0: ((S_PLUS, S_MINUS), (D(m), D(-m))),
        K.PSI0_SWAPPED: ((S_MINUS, S_PLUS), (D(-m), D(m))),
        K.PSI1: ((D(2.5), D(-2.5)), (D(0.5), D(-0.5))),
        K.PSI2: ((D(-2.5), D(2.5)), (D(-0.5), D(0.5))),
    }
    (l1, l2), (u1, u2) = pairs[kind]
    return 2 * math.pi * (f(u1, b1) + f(u2, b2) - f(l1, b1) - f(l2, b2))


def parity(p):
    return sv.parity(p)


# --------------------------------------------------------------------------
# preparation


def test_prepared_states():
    rng = np.random.default_rng(0)
    spec = ProtocolSpec(K.PSI0, m_prime=1.5)
    target = sv.TwoIonState.superposition([(1, S_PLUS, S_MINUS), (1, D(1.5), D(-1.5))])
    assert abs(prepare_bell(spec, rng).overlap(target)) == pytest.approx(1.0, abs=1e-15)
    swapped = ideal_state(replace(spec, kind=K.PSI0_SWAPPED))
    np.testing.assert_allclose(swapped.matrix, ideal_state(spec).swap_ions().matrix, atol=1e-15)
    psi1 = ideal_state(ProtocolSpec(K.PSI1))
    expect = sv.TwoIonState.superposition([(1, D(2.5), D(-2.5)), (1, D(0.5), D(-0.5))])
    assert abs(psi1.overlap(expect)) == pytest.approx(1.0, abs=1e-15)


def test_preparation_infidelity_mixture():
    spec = ProtocolSpec(K.PSI0, prep_infidelity=0.3)
    rng = np.random.default_rng(1)
    n = 4000
    mixed = sum(abs(prepare_bell(spec, rng).overlap(ideal_state(spec))) ** 2 < 0.9 for _ in range(n))
    assert abs(mixed / n - 0.3) < 3 * math.sqrt(0.21 / n)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ProtocolSpec(K.PSI0, m_prime=3.5)
    with pytest.raises(ConfigError):
        ProtocolSpec(K.PSI0, prep_infidelity=1.0)
    with pytest.raises(ConfigError):
        ProtocolSpec(K.PSI1, tau_list=(-1.0,))
    with pytest.raises(ConfigError):
        ProtocolSpec(K.PSI1, shots_per_tau=0)
    with pytest.raises(ConfigError):
        ProtocolSpec(K.SINGLE_ION, m_prime=-2.5)  # s+ -> D(-5/2) breaks |dm| <= 2


def test_record_parity_and_roundtrip():
    rec = MeasurementRecord.from_counts(0.01, (10, 3, 2, 5), {"protocol": "Psi1"})
    assert rec.shots == 20
    assert rec.parity_estimate == pytest.approx((10 + 5 - 3 - 2) / 20)
    assert MeasurementRecord.from_dict(rec.to_dict()) == rec
    bad = rec.to_dict() | {"parity": 0.9}
    with pytest.raises(ValueError):
        MeasurementRecord.from_dict(bad)


# --------------------------------------------------------------------------
# fringe oracles


@pytest.mark.parametrize("kind", list(K))
def test_full_evolution_matches_hand_formula(kind, sr, trap_1mhz, env_full):
    m = 1.5 if kind is not K.SINGLE_ION else 2.5
    spec = ProtocolSpec(kind, m_prime=m, phi0=0.4, detuning=37.0)
    alpha = hand_alpha(kind, m, env_full, trap_1mhz, sr, detuning=37.0)
    # absolute floor: the sum cancels Zeeman terms of ~1e8 rad/s
    assert predicted_alpha(spec, env_full, trap_1mhz, sr) == pytest.approx(alpha, rel=1e-12, abs=1e-6)
    for tau in (0.0, 1.3e-7, 2.1e-6, 4e-4, 0.0123):
        p = ensemble_probabilities(spec, env_full, trap_1mhz, sr, tau, channel=NO_DECAY)
        assert parity(p) == pytest.approx(math.cos(alpha * tau - 0.4), abs=1e-9)


def test_bell_fringe_is_twice_single_ion(sr, trap_1mhz):
    env = FieldEnvironment()
    single = ProtocolSpec(K.SINGLE_ION, detuning=10.0)
    bell = ProtocolSpec(K.BELL_GGEE, detuning=10.0)
    a1 = predicted_alpha(single, env, trap_1mhz, sr)
    a2 = predicted_alpha(bell, env, trap_1mhz, sr)
    assert a1 == 2 * math.pi * 10.0
    assert a2 == 2 * a1
    # 25 ms at 10 Hz: the Bell parity has turned over to -1
    p = ensemble_probabilities(bell, env, trap_1mhz, sr, 0.025, channel=NO_DECAY)
    assert parity(p) == pytest.approx(-1.0, abs=1e-12)


def test_psi1_frequency_from_quadrupole_factors(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1)
    alpha = predicted_alpha(spec, env_quad, trap_1mhz, sr)
    q52 = quadrupole_shift(D(2.5), env_quad, sr)
    assert abs(alpha) / (2 * math.pi) == pytest.approx(3.6 * abs(q52), rel=1e-12)
    env72 = FieldEnvironment(dEdz=7.2e7)
    assert abs(predicted_alpha(spec, env72, trap_1mhz, sr)) / (2 * math.pi) == pytest.approx(228.1, rel=1e-3)


def test_single_ion_simulated_fringe(sr, trap_1mhz):
    spec = ProtocolSpec(K.SINGLE_ION, detuning=10.0, phi0=0.0, tau_list=tau_ladder(0.3, 30), shots_per_tau=10_000)
    recs = run_ramsey(spec, FieldEnvironment(), trap_1mhz, QUIET, sr, seed=3, mode="expectation")
    fit = fit_fringe(recs, phase_hint=0.0)
    truth = 2 * math.pi * 10.0
    assert abs(fit.alpha - truth) < 3 * fit.alpha_err
    assert fit.alpha_err / truth < 1e-3
    # residuals at the binomial level: sigma_P <= 1 / sqrt(N)
    assert fit.residual_rms < 3 / math.sqrt(10_000)
    assert fit.gamma_fit == pytest.approx(coherence_decay_rate(K.SINGLE_ION, sr.gamma), abs=3 * fit.gamma_err)


def test_bell_simulated_fringe_is_twice_single(sr, trap_1mhz):
    env = FieldEnvironment()
    taus = tau_ladder(0.2, 30)
    fits = {}
    for kind in (K.SINGLE_ION, K.BELL_GGEE):
        spec = ProtocolSpec(kind, detuning=10.0, tau_list=taus, shots_per_tau=5000)
        fits[kind] = fit_fringe(run_ramsey(spec, env, trap_1mhz, QUIET, sr, seed=4, mode="expectation"), phase_hint=0.0)
    ratio = fits[K.BELL_GGEE].alpha / fits[K.SINGLE_ION].alpha
    err = ratio * math.hypot(fits[K.BELL_GGEE].alpha_err / fits[K.BELL_GGEE].alpha, fits[K.SINGLE_ION].alpha_err / fits[K.SINGLE_ION].alpha)
    assert abs(ratio - 2) < 4 * err


# --------------------------------------------------------------------------
# immunity


def test_psi0_immune_to_uniform_field_offset(sr, trap_1mhz):
    spec = ProtocolSpec(K.PSI0, m_prime=2.5, phi0=0.3)
    for tau in (1e-3, 0.05, 0.15):
        ref = ensemble_probabilities(spec, FieldEnvironment(B0=4e-4), trap_1mhz, sr, tau, NO_DECAY)
        for dB in (1e-9, 3e-7, -2e-6):
            shifted = ensemble_probabilities(spec, FieldEnvironment(B0=4e-4 + dB), trap_1mhz, sr, tau, NO_DECAY)
            np.testing.assert_allclose(shifted, ref, atol=1e-9)


def test_psi1_immune_to_laser_detuning_and_field_offset(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2)
    for tau in (1e-3, 0.05, 0.15):
        ref = ensemble_probabilities(spec, env_quad, trap_1mhz, sr, tau, NO_DECAY)
        det = ensemble_probabilities(replace(spec, detuning=1234.5), env_quad, trap_1mhz, sr, tau, NO_DECAY)
        np.testing.assert_allclose(det, ref, atol=1e-9)
        moved = replace(env_quad, B0=2e-6)
        np.testing.assert_allclose(ensemble_probabilities(spec, moved, trap_1mhz, sr, tau, NO_DECAY), ref, atol=1e-9)


def _noisy_contrast(spec, env, trap, sp, tau, noise, n=400, seed=0):
    vals = []
    rng = np.random.default_rng(seed)
    for _ in range(n):
        shot = shot_environment(noise, tau, rng)
        vals.append(parity(realization_probabilities(spec, env, trap, sp, tau, shot)))
    return np.array(vals)


def test_field_noise_hits_single_ion_not_psi0(sr, trap_1mhz):
    env = FieldEnvironment(B0=4e-4)
    noise = NoiseConfig(b_sigma=2e-10, b_tau_c=1e-2)
    tau = 0.05
    psi0 = ProtocolSpec(K.PSI0, phi0=0.0)
    single = ProtocolSpec(K.SINGLE_ION, phi0=0.0)
    ref0 = parity(realization_probabilities(psi0, env, trap_1mhz, sr, tau))
    p0 = _noisy_contrast(psi0, env, trap_1mhz, sr, tau, noise)
    np.testing.assert_allclose(p0, ref0, atol=1e-9)
    ps = _noisy_contrast(single, env, trap_1mhz, sr, tau, noise)
    ref_s = parity(realization_probabilities(single, env, trap_1mhz, sr, tau))
    assert abs(ps.mean()) < abs(ref_s) - 0.1


def test_laser_noise_hits_psi0_not_psi1(sr, trap_1mhz, env_quad):
    noise = NoiseConfig(laser_sigma=20.0, laser_tau_c=1e-2)
    tau = 0.05
    psi1 = ProtocolSpec(K.PSI1, phi0=0.0)
    psi0 = ProtocolSpec(K.PSI0, phi0=0.0)
    ref1 = parity(realization_probabilities(psi1, env_quad, trap_1mhz, sr, tau))
    np.testing.assert_allclose(_noisy_contrast(psi1, env_quad, trap_1mhz, sr, tau, noise), ref1, atol=1e-9)
    ref0 = parity(realization_probabilities(psi0, env_quad, trap_1mhz, sr, tau))
    assert abs(_noisy_contrast(psi0, env_quad, trap_1mhz, sr, tau, noise).mean()) < abs(ref0) - 0.1


def test_trajectory_noise_degrades_single_ion_contrast(sr, trap_1mhz):
    env = FieldEnvironment(B0=4e-4)
    noise = NoiseConfig(b_sigma=2e-10, b_tau_c=1e-2)
    taus = (0.0, 0.05)
    out = {}
    for kind in (K.SINGLE_ION, K.PSI0):
        spec = ProtocolSpec(kind, phi0=0.0, tau_list=taus, shots_per_tau=1500)
        recs = run_ramsey(spec, env, trap_1mhz, noise, sr, seed=9, channel=NO_DECAY)
        out[kind] = recs[1].parity_estimate
    assert out[K.PSI0] > 0.95
    assert out[K.SINGLE_ION] < out[K.PSI0] - 0.2


# --------------------------------------------------------------------------
# decay


@pytest.mark.parametrize("kind", [K.PSI1, K.PSI0, K.BELL_GGEE, K.SINGLE_ION])
def test_ensemble_contrast_decay(kind, sr, trap_1mhz):
    env = FieldEnvironment()
    spec = ProtocolSpec(kind, phi0=0.0)
    tau = 0.1
    c = coherence_decay_rate(kind, sr.gamma)
    p_plus = parity(ensemble_probabilities(spec, env, trap_1mhz, sr, tau))
    p_minus = parity(ensemble_probabilities(replace(spec, phi0=math.pi), env, trap_1mhz, sr, tau))
    assert 0.5 * (p_plus - p_minus) == pytest.approx(math.exp(-c * tau), rel=1e-9)


def test_decay_baseline(sr, trap_1mhz, env_quad):
    taus = np.array([0.0, 0.05, 0.15, 0.3])
    x = 1 - np.exp(-sr.gamma * taus)
    psi1 = decay_baseline(ProtocolSpec(K.PSI1, phi0=0.7), env_quad, trap_1mhz, sr, taus)
    np.testing.assert_allclose(psi1, x**2 / 2, atol=1e-12)
    for kind in (K.PSI0, K.BELL_GGEE, K.SINGLE_ION):
        np.testing.assert_allclose(decay_baseline(ProtocolSpec(kind), env_quad, trap_1mhz, sr, taus), 0.0, atol=1e-12)


def test_trajectories_match_ensemble(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2, tau_list=(0.02, 0.08), shots_per_tau=1000)
    exact = [parity(ensemble_probabilities(spec, env_quad, trap_1mhz, sr, t)) for t in spec.tau_list]
    z = []
    for seed in range(10):
        for r, p in zip(run_ramsey(spec, env_quad, trap_1mhz, QUIET, sr, seed=seed), exact):
            z.append((r.parity_estimate - p) / math.sqrt((1 - p * p) / r.shots))
    z = np.array(z)
    assert abs(z.mean()) < 3 / math.sqrt(z.size)
    assert 0.6 < z.std() < 1.4


# --------------------------------------------------------------------------
# run orchestration


def test_run_ramsey_deterministic_and_worker_independent(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2, tau_list=(0.0, 0.01, 0.05), shots_per_tau=200)
    noise = NoiseConfig(b_sigma=1e-10, laser_sigma=5.0)
    a = run_ramsey(spec, env_quad, trap_1mhz, noise, sr, seed=5)
    b = run_ramsey(spec, env_quad, trap_1mhz, noise, sr, seed=5, workers=2)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
    c = run_ramsey(spec, env_quad, trap_1mhz, noise, sr, seed=6)
    assert [r.counts for r in a] != [r.counts for r in c]
    assert all(r.shots == 200 for r in a)
    assert a[0].meta["seed"] == 5 and a[0].meta["protocol"] == "Psi1"


def test_expectation_mode_rejects_fluctuations(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1)
    with pytest.raises(ConfigError):
        run_ramsey(spec, env_quad, trap_1mhz, NoiseConfig(b_sigma=1e-9), sr, seed=0, mode="expectation")
    with pytest.raises(ConfigError):
        run_ramsey(spec, env_quad, trap_1mhz, QUIET, sr, seed=0, mode="bogus")
    one_ion = TrapConfig(omega_z=trap_1mhz.omega_z, n_ions=1)
    with pytest.raises(ConfigError):
        run_ramsey(spec, env_quad, one_ion, QUIET, sr, seed=0)


def test_apportion():
    np.testing.assert_array_equal(apportion([0.5, 0.25, 0.25, 0.0], 4), [2, 1, 1, 0])
    c = apportion([1 / 3, 1 / 3, 1 / 3, 0], 100)
    assert c.sum() == 100 and c[3] == 0 and c[:3].max() - c[:3].min() <= 1


def test_exact_mode_counts(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2, tau_list=(0.0, 0.01), shots_per_tau=10**9)
    recs = run_ramsey(spec, env_quad, trap_1mhz, QUIET, sr, seed=0, mode="exact")
    for r in recs:
        exact = parity(ensemble_probabilities(spec, env_quad, trap_1mhz, sr, r.tau))
        assert r.parity_estimate == pytest.approx(exact, abs=1e-8)


def test_tau_ladder():
    t = tau_ladder(0.15, 24)
    assert len(t) == 24 and t[0] == 0.0 and t[-1] == pytest.approx(0.15)
    assert np.all(np.diff(t) > 0)
    ratios = np.array(t[2:]) / np.array(t[1:-1])
    np.testing.assert_allclose(ratios, ratios[0])


# --------------------------------------------------------------------------
# interleaving


def test_interleaved_zero_records_sit_at_mid_fringe(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2, shots_per_tau=1)
    zero, _ = run_interleaved(spec, env_quad, trap_1mhz, QUIET, sr, 1, 0.05, 3, 1000, mode="exact")
    for r in zero:
        assert r.parity_estimate == pytest.approx(0.0, abs=1e-12)


def test_interleaved_drift_correction_unbiased(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2, shots_per_tau=1)
    tau_long = 0.05
    truth = predicted_alpha(spec, env_quad, trap_1mhz, sr)
    c_long = math.exp(-coherence_decay_rate(K.PSI1, sr.gamma) * tau_long)
    noise = NoiseConfig(phi0_drift=0.05)
    hits = 0
    z_scores = []
    for seed in range(100):
        zero, long = run_interleaved(spec, env_quad, trap_1mhz, noise, sr, seed, tau_long, 8, 50, mode="expectation")
        est = interleaved_alpha(zero, long, tau_long, truth, contrast_long=c_long)
        z_scores.append((est.alpha - truth) / est.alpha_err)
        hits += abs(est.alpha - truth) <= 2.0 * est.alpha_err
    # Student t with 7 dof: |t| <= 2 covers ~91%
    assert hits >= 80
    assert abs(np.mean(z_scores)) < 3 / math.sqrt(100) * np.std(z_scores) + 0.1
    # drift actually present: the uncorrected estimate is pulled away
    zero, long = run_interleaved(spec, env_quad, trap_1mhz, noise, sr, 0, tau_long, 8, 50, mode="exact")
    raw = interleaved_alpha(zero, long, tau_long, truth, contrast_long=c_long, correct=False)
    fixed = interleaved_alpha(zero, long, tau_long, truth, contrast_long=c_long)
    assert abs(fixed.alpha - truth) < 0.1 * abs(raw.alpha - truth)


def test_interleaved_without_drift_agrees(sr, trap_1mhz, env_quad):
    spec = ProtocolSpec(K.PSI1, phi0=math.pi / 2, shots_per_tau=1)
    truth = predicted_alpha(spec, env_quad, trap_1mhz, sr)
    c_long = math.exp(-coherence_decay_rate(K.PSI1, sr.gamma) * 0.05)
    zero, long = run_interleaved(spec, env_quad, trap_1mhz, QUIET, sr, 3, 0.05, 10, 100, mode="expectation")
    a = interleaved_alpha(zero, long, 0.05, truth, contrast_long=c_long)
    b = interleaved_alpha(zero, long, 0.05, truth, contrast_long=c_long, correct=False)
    assert abs(a.alpha - b.alpha) < 3 * math.hypot(a.alpha_err, b.alpha_err)


# --------------------------------------------------------------------------
# m' scan


def test_scan_mj_quadrupole_factors_and_average(sr, trap_1mhz, env_quad):
    base = ProtocolSpec(K.PSI0, phi0=0.0)
    alphas = {m: predicted_alpha(replace(base, m_prime=m), env_quad, trap_1mhz, sr) for m in (0.5, 1.5, 2.5)}
    # j(j+1) - 3 m^2 = 8, 2, -10 for m' = 1/2, 3/2, 5/2
    unit = alphas[0.5] / 8
    assert alphas[1.5] == pytest.approx(2 * unit, rel=1e-12)
    assert alphas[2.5] == pytest.approx(-10 * unit, rel=1e-12)
    assert abs(sum(alphas.values())) <= 1e-9 * max(map(abs, alphas.values()))


def test_orderings_split_gradient_term(sr, trap_1mhz):
    env = environment_for(trap_1mhz, sr, B0=4e-4, B_grad=5e-3)
    flat = environment_for(trap_1mhz, sr, B0=4e-4)
    b1, b2 = local_field(env, trap_1mhz, sr, 1), local_field(env, trap_1mhz, sr, 2)
    mu = zeeman_shift(D(0.5), 1.0, sr) / (0.5 * sr.g_D)
    for m in (0.5, 1.5, 2.5):
        a = predicted_alpha(ProtocolSpec(K.PSI0, m_prime=m), env, trap_1mhz, sr)
        b = predicted_alpha(ProtocolSpec(K.PSI0_SWAPPED, m_prime=m), env, trap_1mhz, sr)
        ref = predicted_alpha(ProtocolSpec(K.PSI0, m_prime=m), flat, trap_1mhz, sr)
        hand = 2 * math.pi * (2 * sr.g_D * m - sr.g_S) * mu * (b1 - b2)
        assert a - b == pytest.approx(hand, rel=1e-9)
        assert 0.5 * (a + b) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_scan_mj_runs_both_orderings(sr, trap_1mhz, env_quad):
    base = ProtocolSpec(K.PSI0, phi0=0.0, tau_list=(0.0, 0.01), shots_per_tau=10)
    runs = scan_mj(base, env_quad, trap_1mhz, QUIET, sr, seed=1, mode="expectation")
    assert sorted(runs) == sorted((k, m) for k in ("Psi0", "Psi0Swapped") for m in (0.5, 1.5, 2.5))
    with pytest.raises(ConfigError):
        scan_mj(ProtocolSpec(K.PSI1), env_quad, trap_1mhz, QUIET, sr, seed=1)
