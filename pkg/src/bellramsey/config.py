"""Run configuration: schema, validation, and round-trip through record headers.

Config files are TOML (or JSON with the same structure). A records file
written by ``simulate`` starts with a header line that embeds the fully
resolved config, so ``--config records.jsonl`` reproduces the run exactly.

Schema version 1::

    schema_version = 1
    seed = 2005

    [species]            # registry name; any field may be overridden
    name = "Sr88"
    # theta_ea0 = 2.6

    [trap]
    f_z = 1.0e6          # axial COM frequency, Hz
    patch_grad = 0.0     # V/m^2
    n_ions = 2
    beta_deg = 0.0

    [fields]
    B0 = 4.0e-4          # T
    B_grad = 0.0         # T/m

    [noise]              # all zero by default
    b_sigma = 0.0
    b_tau_c = 1e-3
    laser_sigma = 0.0
    laser_tau_c = 1e-3
    phi0_drift = 0.0

    [protocol]
    kind = "Psi1"
    m_prime = 2.5
    phi0 = 1.5707963267948966
    prep_infidelity = 0.0
    detuning = 0.0       # nu0 - nu_L, Hz
    shots_per_tau = 500
    mode = "trajectory"  # or "expectation" / "exact"
    tau = [0.0, 0.001]   # explicit list, or:
    # ladder = { tau_max = 0.15, n = 24 }

    [scan]               # used by the scan subcommand
    f_z = [0.7e6, 1.0e6, 1.4e6, 2.0e6]
    kinds = ["Psi1", "Psi2"]
    m_primes = [0.5, 1.5, 2.5]

    [output]
    dir = "out"
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .noiseproc import NoiseConfig
from .physdata import FieldEnvironment, IonSpecies, get_species
from .protocol import MODES, ConfigError, ProtocolKind, ProtocolSpec, tau_ladder
from .trapmodel import TrapConfig, environment_for

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "species": {"name": "Sr88"},
    "trap": {"f_z": 1.0e6, "patch_grad": 0.0, "n_ions": 2, "beta_deg": 0.0},
    "fields": {"B0": 0.0, "B_grad": 0.0},
    "noise": {"b_sigma": 0.0, "b_tau_c": 1e-3, "laser_sigma": 0.0, "laser_tau_c": 1e-3, "phi0_drift": 0.0},
    "protocol": {
        "kind": "Psi1",
        "m_prime": 2.5,
        "phi0": math.pi / 2,
        "prep_infidelity": 0.0,
        "detuning": 0.0,
        "shots_per_tau": 500,
        "shot_overhead": 1e-3,
        "mode": "trajectory",
        "ladder": {"tau_max": 0.15, "n": 24},
    },
    "scan": {"f_z": [0.7e6, 1.0e6, 1.4e6, 2.0e6], "kinds": ["Psi1", "Psi2"], "m_primes": [0.5, 1.5, 2.5]},
    "output": {"dir": "out"},
}

_KNOWN_KEYS = {
    "trap": {"f_z", "patch_grad", "n_ions", "beta_deg"},
    "fields": {"B0", "B_grad"},
    "noise": set(DEFAULTS["noise"]),
    "protocol": set(DEFAULTS["protocol"]) | {"tau"},
    "scan": set(DEFAULTS["scan"]),
    "output": {"dir"},
}


class ConfigValidationError(ConfigError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "ladder":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Resolved configuration; ``raw`` holds the merged dict it came from."""

    seed: int
    species: IonSpecies
    trap: TrapConfig
    env: FieldEnvironment
    noise: NoiseConfig
    protocol: ProtocolSpec
    mode: str
    scan: dict
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    def resolved(self) -> dict:
        """Config dict with the tau list spelled out; round-trips via :func:`from_dict`."""
        d = copy.deepcopy(self.raw)
        d["protocol"].pop("ladder", None)
        d["protocol"]["tau"] = list(self.protocol.tau_list)
        d["seed"] = self.seed
        d["species"] = self.species.to_dict()
        return d

    def with_overrides(self, seed=None, shots=None, out=None) -> "RunConfig":
        d = copy.deepcopy(self.raw)
        if seed is not None:
            d["seed"] = seed
        if shots is not None:
            d["protocol"]["shots_per_tau"] = shots
        if out is not None:
            d["output"]["dir"] = str(out)
        return from_dict(d)

    def trap_at(self, f_z: float) -> TrapConfig:
        return TrapConfig(omega_z=2 * math.pi * f_z, patch_grad=self.trap.patch_grad, n_ions=self.trap.n_ions, beta=self.trap.beta)

    def env_for(self, trap: TrapConfig) -> FieldEnvironment:
        return environment_for(trap, self.species, B0=self.env.B0, B_grad=self.env.B_grad)


def from_dict(data: dict) -> RunConfig:
    """Validate and resolve a config dict; all problems are reported at once."""
    d = _merge(DEFAULTS, data)
    problems = []
    if d.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version {d.get('schema_version')!r} unsupported (expected {SCHEMA_VERSION})")
    for section, keys in _KNOWN_KEYS.items():
        extra = set(d.get(section, {})) - keys
        if extra:
            problems.append(f"[{section}] unknown keys: {', '.join(sorted(extra))}")
    seed = d.get("seed")
    if not isinstance(seed, int) or seed < 0:
        problems.append(f"seed must be a non-negative integer, got {seed!r}")

    species = trap = env = noise = spec = None
    sp = dict(d["species"])
    try:
        name = sp.pop("name")
        if "mass_u" in sp:
            species = IonSpecies.from_dict({"name": name, **sp})
        else:
            species = get_species(name, **sp)
    except (KeyError, ValueError, TypeError) as exc:
        problems.append(f"[species] {exc}")
    t = d["trap"]
    try:
        trap = TrapConfig(
            omega_z=2 * math.pi * float(t["f_z"]),
            patch_grad=float(t["patch_grad"]),
            n_ions=int(t["n_ions"]),
            beta=math.radians(float(t["beta_deg"])),
        )
    except (ValueError, TypeError) as exc:
        problems.append(f"[trap] {exc}")
    try:
        noise = NoiseConfig(**d["noise"])
    except (ValueError, TypeError) as exc:
        problems.append(f"[noise] {exc}")
    p = dict(d["protocol"])
    mode = p.pop("mode")
    if mode not in MODES:
        problems.append(f"[protocol] mode must be one of {', '.join(MODES)}, got {mode!r}")
    ladder = p.pop("ladder", None)
    taus = p.pop("tau", None)
    if taus is None:
        try:
            taus = tau_ladder(float(ladder["tau_max"]), int(ladder["n"]), ladder.get("tau_min"))
        except (TypeError, KeyError, ValueError) as exc:
            problems.append(f"[protocol] bad ladder: {exc}")
            taus = (0.0,)
    else:
        d["protocol"].pop("ladder", None)
    try:
        kind = ProtocolKind(p.pop("kind"))
        spec = ProtocolSpec(kind=kind, tau_list=tuple(taus), **p)
    except (ValueError, TypeError) as exc:
        problems.append(f"[protocol] {exc}")
    if trap is not None and spec is not None and spec.kind.entangled and trap.n_ions != 2:
        problems.append(f"[protocol] {spec.kind.value} needs trap.n_ions = 2")
    if noise is not None and mode != "trajectory" and noise.has_fluctuations:
        problems.append("[noise] field/laser noise requires mode = 'trajectory'")
    scan = d["scan"]
    try:
        if any(float(f) <= 0 for f in scan["f_z"]):
            problems.append("[scan] f_z values must be positive")
        for k in scan["kinds"]:
            ProtocolKind(k)
    except (ValueError, TypeError) as exc:
        problems.append(f"[scan] {exc}")
    if problems:
        raise ConfigValidationError(problems)
    try:
        env = FieldEnvironment(B0=float(d["fields"]["B0"]), B_grad=float(d["fields"]["B_grad"]))
        env = environment_for(trap, species, B0=env.B0, B_grad=env.B_grad)
    except (ValueError, TypeError) as exc:
        raise ConfigValidationError([f"[fields] {exc}"]) from None
    return RunConfig(
        seed=seed,
        species=species,
        trap=trap,
        env=env,
        noise=noise,
        protocol=spec,
        mode=mode,
        scan=scan,
        output_dir=d["output"]["dir"],
        raw=d,
    )


def read_header(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    head = json.loads(first)
    if head.get("type") != "header":
        raise ConfigError(f"{path}: first line is not a records header")
    return head


def load_config(path) -> RunConfig:
    """Load TOML, JSON, or the header of a JSON-lines records file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        data = tomllib.loads(text)
    elif path.suffix == ".jsonl":
        data = read_header(path)["config"]
    else:
        data = json.loads(text)
    return from_dict(data)
