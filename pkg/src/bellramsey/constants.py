"""CODATA-2018 physical constants used throughout the package (SI units)."""

PLANCK_H = 6.62607015e-34  # J s (exact)
ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
BOHR_MAGNETON = 9.2740100783e-24  # J/T
BOHR_RADIUS = 5.29177210903e-11  # m
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg

#: Bohr magneton in frequency units, Hz/T.
MU_B_OVER_H = BOHR_MAGNETON / PLANCK_H

#: One e*a0^2 expressed in C m^2.
E_A0_SQUARED = ELEMENTARY_CHARGE * BOHR_RADIUS**2

CODATA_2018 = {
    "h": (PLANCK_H, "J s"),
    "e": (ELEMENTARY_CHARGE, "C"),
    "mu_B": (BOHR_MAGNETON, "J/T"),
    "a0": (BOHR_RADIUS, "m"),
    "epsilon_0": (VACUUM_PERMITTIVITY, "F/m"),
    "u": (ATOMIC_MASS_UNIT, "kg"),
    "mu_B/h": (MU_B_OVER_H, "Hz/T"),
    "e*a0^2": (E_A0_SQUARED, "C m^2"),
}


def constants_report():
    """Return the constant table as delimited text lines (name, value, unit)."""
    lines = ["name,value,unit"]
    for name, (value, unit) in CODATA_2018.items():
        lines.append(f"{name},{value:.12e},{unit}")
    return "\n".join(lines) + "\n"
