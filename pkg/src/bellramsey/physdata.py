"""Ion species data and single-ion level shifts.

Two manifolds are modelled: S1/2 (two Zeeman sub-levels) and D5/2 (six).
A single ion therefore lives in an 8-dimensional space with the canonical
level order

    index 0, 1      -> S1/2, m_j = -1/2, +1/2
    index 2 ... 7   -> D5/2, m_j = -5/2 ... +5/2

Zeeman shifts use the standard convention dE = g * mu_B * m_j * B with a
dimensionless Lande factor (g_D = 1.2 for D5/2, g_S ~ 2.0023 for S1/2).
Quadrupole moments are quoted in e*a0^2 and stored in C m^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .constants import (
    ATOMIC_MASS_UNIT,
    E_A0_SQUARED,
    ELEMENTARY_CHARGE,
    MU_B_OVER_H,
    PLANCK_H,
)

MAGIC_ANGLE = math.acos(1.0 / math.sqrt(3.0))


class Manifold(enum.Enum):
    S12 = "S12"
    D52 = "D52"

    @property
    def j(self) -> float:
        return 0.5 if self is Manifold.S12 else 2.5


@dataclass(frozen=True, order=True)
class ZeemanLevel:
    """One Zeeman sub-level, e.g. ``ZeemanLevel(Manifold.D52, 2.5)``."""

    manifold: Manifold
    m_j: float

    def __post_init__(self):
        twice = 2 * self.m_j
        if abs(twice - round(twice)) > 1e-9 or round(twice) % 2 == 0:
            raise ValueError(f"m_j must be half-integer, got {self.m_j}")
        if abs(self.m_j) > self.manifold.j + 1e-9:
            raise ValueError(f"|m_j| = {abs(self.m_j)} exceeds j = {self.manifold.j}")
        object.__setattr__(self, "m_j", round(twice) / 2)

    @property
    def index(self) -> int:
        """Position of this level in the 8-level single-ion basis."""
        if self.manifold is Manifold.S12:
            return 0 if self.m_j < 0 else 1
        return 2 + int(round(self.m_j + 2.5))

    @property
    def is_upper(self) -> bool:
        return self.manifold is Manifold.D52

    def __str__(self):
        return f"{self.manifold.value}({Fraction(self.m_j)})"


def S(m_j: float) -> ZeemanLevel:
    return ZeemanLevel(Manifold.S12, m_j)


def D(m_j: float) -> ZeemanLevel:
    return ZeemanLevel(Manifold.D52, m_j)


LEVELS: tuple[ZeemanLevel, ...] = (
    S(-0.5), S(0.5), D(-2.5), D(-1.5), D(-0.5), D(0.5), D(1.5), D(2.5)
)
N_LEVELS = len(LEVELS)
S_PLUS = S(0.5)
S_MINUS = S(-0.5)

#: Boolean mask over the 8 single-ion levels: True for D5/2.
UPPER_MASK = np.array([lv.is_upper for lv in LEVELS])


def parse_level(text: str) -> ZeemanLevel:
    """Parse ``"S12(+1/2)"``, ``"D52(-5/2)"``, ``"D:5/2"`` and similar forms."""
    t = text.strip().replace(" ", "")
    for sep in ("(", ":"):
        if sep in t:
            head, tail = t.split(sep, 1)
            tail = tail.rstrip(")")
            break
    else:
        raise ValueError(f"cannot parse level {text!r}")
    head = head.upper()
    if head in ("S", "S12", "S1/2"):
        manifold = Manifold.S12
    elif head in ("D", "D52", "D5/2"):
        manifold = Manifold.D52
    else:
        raise ValueError(f"unknown manifold in {text!r}")
    return ZeemanLevel(manifold, float(Fraction(tail)))


@dataclass(frozen=True)
class IonSpecies:
    """Single-ion constants.

    ``theta_q`` is the D5/2 quadrupole moment in C m^2; use
    :meth:`from_atomic_units` to build from e*a0^2.
    """

    name: str
    mass: float
    charge: float
    tau_D: float
    g_S: float
    g_D: float
    theta_q: float

    def __post_init__(self):
        if not (self.mass > 0 and self.charge > 0 and self.tau_D > 0):
            raise ValueError("mass, charge and tau_D must be positive")

    @classmethod
    def from_atomic_units(
        cls,
        name: str,
        mass_u: float,
        tau_D: float,
        theta_ea0: float,
        g_S: float = 2.0023,
        g_D: float | None = None,
        charge_e: float = 1.0,
    ) -> "IonSpecies":
        if g_D is None:
            g_D = lande_g(2, 0.5, 2.5)
        return cls(
            name=name,
            mass=mass_u * ATOMIC_MASS_UNIT,
            charge=charge_e * ELEMENTARY_CHARGE,
            tau_D=tau_D,
            g_S=g_S,
            g_D=g_D,
            theta_q=theta_ea0 * E_A0_SQUARED,
        )

    @property
    def theta_ea0(self) -> float:
        return self.theta_q / E_A0_SQUARED

    @property
    def gamma(self) -> float:
        """D5/2 decay rate 1/tau_D."""
        return 1.0 / self.tau_D

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mass_u": self.mass / ATOMIC_MASS_UNIT,
            "charge_e": self.charge / ELEMENTARY_CHARGE,
            "tau_D": self.tau_D,
            "g_S": self.g_S,
            "g_D": self.g_D,
            "theta_ea0": self.theta_ea0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IonSpecies":
        return cls.from_atomic_units(
            name=d["name"],
            mass_u=d["mass_u"],
            tau_D=d["tau_D"],
            theta_ea0=d["theta_ea0"],
            g_S=d.get("g_S", 2.0023),
            g_D=d.get("g_D"),
            charge_e=d.get("charge_e", 1.0),
        )


# Masses are neutral-atom masses in u; lifetimes of the D5/2 level in s.
_KNOWN = {
    "Sr88": dict(mass_u=87.905619, tau_D=0.350, theta_ea0=2.6),
    "Ca40": dict(mass_u=39.962591, tau_D=1.168, theta_ea0=None),
    "Ba138": dict(mass_u=137.905247, tau_D=30.0, theta_ea0=None),
    "Yb172": dict(mass_u=171.936382, tau_D=7.2e-3, theta_ea0=None),
}


def get_species(name: str, theta_ea0: float | None = None, **overrides) -> IonSpecies:
    """Look up a registered species.

    Only Sr88 ships with a quadrupole moment; the other even isotopes are
    placeholders that require ``theta_ea0``.
    """
    try:
        base = dict(_KNOWN[name])
    except KeyError:
        raise KeyError(f"unknown species {name!r}; known: {sorted(_KNOWN)}") from None
    if theta_ea0 is not None:
        base["theta_ea0"] = theta_ea0
    if base["theta_ea0"] is None:
        raise ValueError(f"species {name} needs a user-supplied theta_ea0")
    base.update(overrides)
    return IonSpecies.from_atomic_units(name=name, **base)


def registered_species() -> list[str]:
    return sorted(_KNOWN)


@dataclass(frozen=True)
class FieldEnvironment:
    """Static fields seen by the ion pair.

    B0 is the field at the pair midpoint (T), B_grad the axial gradient
    (T/m), dEdz the signed total axial electric field gradient at an ion
    (V/m^2) and beta the angle between quantization axis and trap axis.
    """

    B0: float = 0.0
    B_grad: float = 0.0
    dEdz: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.beta <= math.pi / 2 + 1e-12):
            raise ValueError(f"beta must lie in [0, pi/2], got {self.beta}")


def lande_g(L: float, S: float, J: float) -> float:
    """Lande g-factor with g_s = 2 (LS coupling)."""
    if not (abs(L - S) - 1e-9 <= J <= L + S + 1e-9) or J <= 0:
        raise ValueError(f"J={J} violates the triangle rule for L={L}, S={S}")
    return 1.0 + (J * (J + 1) + S * (S + 1) - L * (L + 1)) / (2 * J * (J + 1))


def g_factor(level: ZeemanLevel, species: IonSpecies) -> float:
    return species.g_S if level.manifold is Manifold.S12 else species.g_D


def zeeman_coefficient(level: ZeemanLevel, species: IonSpecies) -> float:
    """First-order Zeeman shift per unit field, Hz/T."""
    return g_factor(level, species) * MU_B_OVER_H * level.m_j


def zeeman_shift(level: ZeemanLevel, B: float, species: IonSpecies) -> float:
    """Linear Zeeman shift in Hz."""
    return zeeman_coefficient(level, species) * B


def quadrupole_factor(level: ZeemanLevel) -> float:
    """[j(j+1) - 3 m_j^2] / [j(2j-1)] for D5/2; zero for S1/2."""
    if level.manifold is Manifold.S12:
        return 0.0
    j = 2.5
    return (j * (j + 1) - 3 * level.m_j**2) / (j * (2 * j - 1))


def angular_factor(beta: float) -> float:
    """3 cos^2(beta) - 1."""
    return 3.0 * math.cos(beta) ** 2 - 1.0


def quadrupole_coefficient(env: FieldEnvironment, species: IonSpecies) -> float:
    """dEdz * Theta * (3cos^2 beta - 1) / (4h), in Hz; multiply by quadrupole_factor."""
    return env.dEdz * species.theta_q * angular_factor(env.beta) / (4 * PLANCK_H)


def quadrupole_shift(level: ZeemanLevel, env: FieldEnvironment, species: IonSpecies) -> float:
    """Electric quadrupole shift of a D5/2 sub-level in Hz (0 for S1/2)."""
    return quadrupole_coefficient(env, species) * quadrupole_factor(level)


def level_shift_total(
    level: ZeemanLevel, env: FieldEnvironment, species: IonSpecies, B_local: float
) -> float:
    return zeeman_shift(level, B_local, species) + quadrupole_shift(level, env, species)


def single_ion_shifts(env: FieldEnvironment, species: IonSpecies, B_local: float) -> np.ndarray:
    """Vector of :func:`level_shift_total` over the canonical 8-level basis."""
    return np.array([level_shift_total(lv, env, species, B_local) for lv in LEVELS])


def zeeman_coefficients(species: IonSpecies) -> np.ndarray:
    return np.array([zeeman_coefficient(lv, species) for lv in LEVELS])
