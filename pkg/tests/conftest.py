import math

import pytest

from bellramsey.physdata import FieldEnvironment, get_species
from bellramsey.trapmodel import TrapConfig, environment_for


@pytest.fixture
def sr():
    return get_species("Sr88")


@pytest.fixture
def trap_1mhz():
    return TrapConfig(omega_z=2 * math.pi * 1e6)


@pytest.fixture
def env_quad(sr, trap_1mhz):
    """Quadrupole shift only: no magnetic field."""
    return environment_for(trap_1mhz, sr)


@pytest.fixture
def env_72():
    """The rounded 72 V/mm^2 gradient used in the hand-evaluated examples."""
    return FieldEnvironment(dEdz=7.2e7)
