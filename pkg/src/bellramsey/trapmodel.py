"""Linear Paul trap: two-ion spacing, axial field gradients, local B fields.

Sign conventions
----------------
Gradients are signed. The trap term is -m*omega_z**2/q per ion present,
so a two-ion crystal sees -2*m*omega_z**2/q + patch_grad at each ion.
Ion 1 sits at z = -d/2 and ion 2 at z = +d/2, so the local field is
B0 - B_grad*d/2 for ion 1 and B0 + B_grad*d/2 for ion 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .constants import VACUUM_PERMITTIVITY
from .physdata import FieldEnvironment, IonSpecies


class TrapConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrapConfig:
    omega_z: float
    patch_grad: float = 0.0
    n_ions: int = 2
    beta: float = 0.0

    def __post_init__(self):
        if not self.omega_z > 0:
            raise TrapConfigError(f"omega_z must be positive, got {self.omega_z}")
        if self.n_ions not in (1, 2):
            raise TrapConfigError(f"n_ions must be 1 or 2, got {self.n_ions}")

    @classmethod
    def from_frequency(cls, f_z: float, **kw) -> "TrapConfig":
        """Build from the axial COM frequency in Hz."""
        return cls(omega_z=2 * math.pi * f_z, **kw)


def ion_separation(trap: TrapConfig, species: IonSpecies) -> float:
    """Equilibrium distance of a two-ion crystal, in m."""
    if trap.n_ions != 2:
        raise TrapConfigError("ion separation needs a two-ion crystal")
    q, m = species.charge, species.mass
    return (2 * q**2 / (4 * math.pi * VACUUM_PERMITTIVITY * m * trap.omega_z**2)) ** (1 / 3)


def trap_gradient_single(trap: TrapConfig, species: IonSpecies) -> float:
    """Trap-only gradient -m omega_z^2 / q, V/m^2."""
    return -species.mass * trap.omega_z**2 / species.charge


def axial_field_gradient(trap: TrapConfig, species: IonSpecies) -> float:
    """Total signed dE_z/dz at an ion position, V/m^2 (patch term included)."""
    return trap_gradient_single(trap, species) * trap.n_ions + trap.patch_grad


def local_field(env: FieldEnvironment, trap: TrapConfig, species: IonSpecies, ion_index: int) -> float:
    """Magnetic field at ion 1 or ion 2, T."""
    if ion_index not in (1, 2):
        raise ValueError(f"ion_index must be 1 or 2, got {ion_index}")
    if trap.n_ions == 1 or env.B_grad == 0.0:
        return env.B0
    half = 0.5 * env.B_grad * ion_separation(trap, species)
    return env.B0 - half if ion_index == 1 else env.B0 + half


def environment_for(trap: TrapConfig, species: IonSpecies, B0: float = 0.0, B_grad: float = 0.0) -> FieldEnvironment:
    """Field environment whose dEdz and beta follow from ``trap``."""
    return FieldEnvironment(B0=B0, B_grad=B_grad, dEdz=axial_field_gradient(trap, species), beta=trap.beta)


def with_trap(env: FieldEnvironment, trap: TrapConfig, species: IonSpecies) -> FieldEnvironment:
    return replace(env, dEdz=axial_field_gradient(trap, species), beta=trap.beta)
