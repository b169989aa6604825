import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellramsey.constants import BOHR_MAGNETON, PLANCK_H, constants_report
from bellramsey.physdata import (
    D,
    LEVELS,
    MAGIC_ANGLE,
    FieldEnvironment,
    IonSpecies,
    S,
    ZeemanLevel,
    Manifold,
    get_species,
    lande_g,
    level_shift_total,
    parse_level,
    quadrupole_shift,
    registered_species,
    zeeman_shift,
)

MJ_D = (0.5, 1.5, 2.5)


@pytest.mark.parametrize("L,S_,J,g", [(0, 0.5, 0.5, 2.0), (2, 0.5, 2.5, 1.2), (2, 0.5, 1.5, 0.8)])
def test_lande_g_hand_values(L, S_, J, g):
    assert lande_g(L, S_, J) == pytest.approx(g, abs=1e-12)


def test_lande_g_rejects_triangle_violation():
    with pytest.raises(ValueError):
        lande_g(2, 0.5, 3.5)


def test_level_validation():
    with pytest.raises(ValueError):
        ZeemanLevel(Manifold.S12, 1.5)
    with pytest.raises(ValueError):
        ZeemanLevel(Manifold.D52, 1.0)
    assert len(LEVELS) == 8 and len({lv.index for lv in LEVELS}) == 8


def test_parse_level_roundtrip():
    for lv in LEVELS:
        assert parse_level(str(lv)) == lv


def test_species_registry(sr):
    assert "Sr88" in registered_species()
    assert sr.theta_ea0 == pytest.approx(2.6)
    assert sr.g_D == pytest.approx(1.2)
    assert sr.gamma == pytest.approx(1 / 0.350)
    with pytest.raises(ValueError):
        get_species("Ca40")  # placeholder without a quadrupole moment
    ca = get_species("Ca40", theta_ea0=1.8)
    assert ca.theta_ea0 == pytest.approx(1.8)
    with pytest.raises(KeyError):
        get_species("Xx1")
    assert IonSpecies.from_dict(sr.to_dict()) == sr
    with pytest.raises(ValueError):
        IonSpecies.from_atomic_units("bad", -1.0, 1.0, 1.0)


def test_zeeman_hand_values(sr):
    mu_h = BOHR_MAGNETON / PLANCK_H
    assert mu_h == pytest.approx(13.996245e9, rel=1e-8)
    assert zeeman_shift(D(2.5), 4.0e-4, sr) == pytest.approx(1.6795e7, rel=1e-4)
    assert zeeman_shift(S(-0.5), 1.0e-4, sr) == pytest.approx(-1.4013e6, rel=1e-4)
    for lv in LEVELS:
        assert zeeman_shift(lv, 0.0, sr) == 0.0


def test_quadrupole_hand_values(sr, env_72):
    assert quadrupole_shift(D(2.5), env_72, sr) == pytest.approx(-63.4, rel=5e-3)
    assert quadrupole_shift(D(0.5), env_72, sr) == pytest.approx(50.7, rel=5e-3)
    magic = FieldEnvironment(dEdz=7.2e7, beta=MAGIC_ANGLE)
    assert abs(quadrupole_shift(D(1.5), magic, sr)) < 1e-12
    assert quadrupole_shift(S(0.5), env_72, sr) == 0.0


def test_level_shift_total_is_sum(sr, env_72):
    total = level_shift_total(D(2.5), env_72, sr, 4e-4)
    assert total == pytest.approx(1.6795e7 - 63.4, rel=1e-4)
    ratio = abs(zeeman_shift(D(2.5), 4e-4, sr) / quadrupole_shift(D(2.5), env_72, sr))
    assert 2.5e5 < ratio < 2.75e5
    assert level_shift_total(D(2.5), FieldEnvironment(), sr, 0.0) == 0.0


def test_quadrupole_sum_rule(sr, env_72):
    shifts = [quadrupole_shift(D(m), env_72, sr) for m in MJ_D]
    assert abs(sum(shifts)) <= 1e-12 * max(map(abs, shifts))


@given(
    dEdz=st.floats(-1e9, 1e9, allow_nan=False),
    beta=st.floats(0, math.pi / 2),
    B=st.floats(-1e-2, 1e-2, allow_nan=False),
    m=st.sampled_from(MJ_D),
)
def test_shift_symmetries(dEdz, beta, B, m):
    sr = get_species("Sr88")
    env = FieldEnvironment(dEdz=dEdz, beta=beta)
    assert quadrupole_shift(D(m), env, sr) == quadrupole_shift(D(-m), env, sr)
    assert zeeman_shift(D(m), B, sr) == -zeeman_shift(D(-m), B, sr)
    total = sum(quadrupole_shift(D(k), env, sr) for k in MJ_D)
    scale = max(abs(quadrupole_shift(D(k), env, sr)) for k in MJ_D)
    assert abs(total) <= 1e-12 * max(scale, 1e-300)


def test_shift_linearity(sr):
    base = quadrupole_shift(D(2.5), FieldEnvironment(dEdz=3e7), sr)
    assert quadrupole_shift(D(2.5), FieldEnvironment(dEdz=6e7), sr) == pytest.approx(2 * base, rel=1e-14)
    sr2 = get_species("Sr88", theta_ea0=5.2)
    assert quadrupole_shift(D(2.5), FieldEnvironment(dEdz=3e7), sr2) == pytest.approx(2 * base, rel=1e-14)
    assert zeeman_shift(D(1.5), 2e-4, sr) == pytest.approx(2 * zeeman_shift(D(1.5), 1e-4, sr), rel=1e-14)


def test_beta_range():
    with pytest.raises(ValueError):
        FieldEnvironment(beta=-0.1)
    with pytest.raises(ValueError):
        FieldEnvironment(beta=2.0)


def test_constants_report_lists_values():
    text = constants_report()
    assert text.splitlines()[0] == "name,value,unit"
    assert "mu_B/h,1.399624" in text
