"""
Physical parameters, drive settings and scenario configuration.

Every frequency-valued quantity is stored internally as an angular frequency
in rad/s. Scenario files are YAML documents in which each frequency-valued
field carries an explicit unit suffix::

    resonator:
      omega_r: 6452.5 MHz
      kerr_K: -0.5 MHz
      kerr_Kp: 0 Hz
      kappa: 8.96 MHz
    qubit:
      gamma_down: 0.05 MHz
      gamma_phi: 0.1 MHz
      levels:
        - {omega: 0 GHz, g: 50 MHz, epsilon: 0}
        - {omega: 5.8 GHz, g: 70.7 MHz, epsilon: 1}
        - {omega: 11.2 GHz, epsilon: 2.1}
    sideband_correction: 2.0
    drives:
      - {kind: pump, amplitude: 30 MHz, frequency: 6439 MHz}
      - {kind: spectroscopy, amplitude: 25 MHz, frequency: 5.7 GHz}

Values in ``Hz``/``kHz``/``MHz``/``GHz`` are ordinary frequencies (x/2pi) and
are multiplied by 2pi on load; values in ``rad/s`` are taken verbatim. Drive
amplitudes may be complex, given either as ``{re: ..., im: ...}`` or as a
magnitude plus an optional ``phase`` in radians.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

import yaml

__all__ = [
    "ConfigError",
    "Level",
    "SystemParams",
    "DriveSpec",
    "Scenario",
    "load_scenario",
    "load_scenario_file",
    "serialize_scenario",
    "parse_frequency",
    "reduced_detuning",
    "param_hash",
    "OMEGA_C",
]

#: Critical reduced detuning of the Duffing resonator.
OMEGA_C = math.sqrt(3.0)

_UNIT_SCALE = {
    "hz": 2 * math.pi,
    "khz": 2 * math.pi * 1e3,
    "mhz": 2 * math.pi * 1e6,
    "ghz": 2 * math.pi * 1e9,
    "rad/s": 1.0,
}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z/]+)\s*$")


class ConfigError(ValueError):
    """Scenario text failed to parse or validate."""


@dataclass(frozen=True)
class Level:
    """One qubit eigenstate: frequency, coupling to the next level up, dispersion."""

    omega: float
    g: float = 0.0
    epsilon: float = 0.0


@dataclass(frozen=True)
class DriveSpec:
    amplitude: complex
    frequency: float
    kind: str = "pump"

    def __post_init__(self):
        if self.kind not in ("pump", "spectroscopy"):
            raise ConfigError(f"drive kind must be 'pump' or 'spectroscopy', got {self.kind!r}")
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "frequency", float(self.frequency))

    def with_amplitude(self, amplitude: complex) -> "DriveSpec":
        return DriveSpec(amplitude, self.frequency, self.kind)

    def with_frequency(self, frequency: float) -> "DriveSpec":
        return DriveSpec(self.amplitude, frequency, self.kind)


@dataclass(frozen=True)
class SystemParams:
    """Resonator + multi-level qubit parameters (rad/s throughout).

    ``levels[i].g`` is the dipole coupling of the transition i <-> i+1; the top
    level carries no coupling. ``sideband_correction`` scales the sideband
    coupling coefficient and is 1.0 unless a scenario overrides it.
    """

    omega_r: float
    kerr_K: float
    kerr_Kp: float
    kappa: float
    levels: tuple[Level, ...]
    gamma_down: float = 0.0
    gamma_phi: float = 0.0
    sideband_correction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        _validate_params(self)

    @property
    def m_levels(self) -> int:
        return len(self.levels)

    @property
    def omegas(self) -> list[float]:
        return [lv.omega for lv in self.levels]

    @property
    def couplings(self) -> list[float]:
        """g_i for i = 0..M-2."""
        return [lv.g for lv in self.levels[:-1]]

    @property
    def epsilons(self) -> list[float]:
        return [lv.epsilon for lv in self.levels]

    def omega_ij(self, i: int, j: int) -> float:
        return self.levels[i].omega - self.levels[j].omega

    def replace(self, **changes) -> "SystemParams":
        data = {
            "omega_r": self.omega_r,
            "kerr_K": self.kerr_K,
            "kerr_Kp": self.kerr_Kp,
            "kappa": self.kappa,
            "levels": self.levels,
            "gamma_down": self.gamma_down,
            "gamma_phi": self.gamma_phi,
            "sideband_correction": self.sideband_correction,
        }
        data.update(changes)
        return SystemParams(**data)


@dataclass(frozen=True)
class Scenario:
    params: SystemParams
    drives: tuple[DriveSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "drives", tuple(self.drives))
        _validate_drives(self.drives)

    @property
    def pumps(self) -> list[DriveSpec]:
        return [d for d in self.drives if d.kind == "pump"]

    @property
    def pump(self) -> DriveSpec:
        pumps = self.pumps
        if len(pumps) != 1:
            raise ConfigError(f"expected exactly one pump drive, found {len(pumps)}")
        return pumps[0]

    @property
    def spectroscopy(self) -> DriveSpec:
        return next(d for d in self.drives if d.kind == "spectroscopy")

    def __iter__(self):
        # allows ``params, drives = load_scenario(text)``
        yield self.params
        yield list(self.drives)


def _validate_params(p: SystemParams) -> None:
    if not p.kappa > 0:
        raise ConfigError("kappa must be > 0")
    if len(p.levels) < 2:
        raise ConfigError("qubit must have at least 2 levels")
    for i in range(1, len(p.levels)):
        if not p.levels[i].omega > p.levels[i - 1].omega:
            raise ConfigError(
                f"level frequencies must be strictly increasing (level {i} <= level {i - 1})"
            )
    if p.levels[-1].g != 0.0:
        raise ConfigError("top level cannot carry a coupling g")
    if p.levels[0].epsilon != 0.0:
        raise ConfigError("epsilon_0 must equal 0")
    if p.levels[1].epsilon != 1.0:
        raise ConfigError("epsilon_1 must equal 1")
    if p.gamma_down < 0:
        raise ConfigError("gamma_down must be >= 0")
    if p.gamma_phi < 0:
        raise ConfigError("gamma_phi must be >= 0")
    for name in ("omega_r", "kerr_K", "kerr_Kp", "kappa", "gamma_down", "gamma_phi",
                 "sideband_correction"):
        if not math.isfinite(getattr(p, name)):
            raise ConfigError(f"{name} must be finite")


def _validate_drives(drives: Sequence[DriveSpec]) -> None:
    n_spec = sum(d.kind == "spectroscopy" for d in drives)
    if n_spec != 1:
        raise ConfigError(f"exactly one spectroscopy drive required, found {n_spec}")
    freqs = [d.frequency for d in drives if d.kind == "pump"]
    if len(set(freqs)) != len(freqs):
        raise ConfigError("pump frequencies must be pairwise distinct")
    if len(freqs) > 1:
        # the squeezing frame rotates at a single pump frequency
        raise ConfigError("multi-pump scenarios are not supported (one pump drive only)")


def parse_frequency(value: Any, name: str = "value") -> float:
    """Parse ``'5 GHz'`` style quantities to rad/s."""
    if isinstance(value, bool) or isinstance(value, (int, float)):
        raise ConfigError(f"{name}: missing unit suffix (Hz, kHz, MHz, GHz or rad/s)")
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a quantity string, got {type(value).__name__}")
    m = _QUANTITY.match(value)
    if m is None:
        raise ConfigError(f"{name}: cannot parse quantity {value!r}")
    number, unit = m.groups()
    scale = _UNIT_SCALE.get(unit.lower())
    if scale is None:
        raise ConfigError(f"{name}: unknown unit {unit!r}")
    try:
        return float(number) * scale
    except ValueError as exc:
        raise ConfigError(f"{name}: bad number {number!r}") from exc


def _require(mapping: dict, key: str, where: str):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where}: expected a mapping")
    if key not in mapping:
        raise ConfigError(f"missing field: {where}.{key}" if where else f"missing field: {key}")
    return mapping[key]


def _parse_amplitude(spec: dict, where: str) -> complex:
    raw = _require(spec, "amplitude", where)
    if isinstance(raw, dict):
        re_ = parse_frequency(_require(raw, "re", f"{where}.amplitude"), f"{where}.amplitude.re")
        im_ = parse_frequency(raw.get("im", "0 rad/s"), f"{where}.amplitude.im")
        return complex(re_, im_)
    mag = parse_frequency(raw, f"{where}.amplitude")
    phase = float(spec.get("phase", 0.0))
    if phase == 0.0:
        return complex(mag, 0.0)
    return mag * complex(math.cos(phase), math.sin(phase))


def _parse_dimensionless(value: Any, name: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number")
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a number, got {value!r}") from exc


def load_scenario(config_text: str) -> Scenario:
    """Parse and validate a scenario from YAML text.

    Returns a :class:`Scenario`, which also unpacks as ``(params, drives)``.
    Raises :class:`ConfigError` with a named diagnostic on any problem.
    """
    try:
        doc = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping at top level")

    res = _require(doc, "resonator", "")
    qb = _require(doc, "qubit", "")
    omega_r = parse_frequency(_require(res, "omega_r", "resonator"), "resonator.omega_r")
    kerr_K = parse_frequency(_require(res, "kerr_K", "resonator"), "resonator.kerr_K")
    kerr_Kp = parse_frequency(res.get("kerr_Kp", "0 Hz"), "resonator.kerr_Kp")
    kappa = parse_frequency(_require(res, "kappa", "resonator"), "resonator.kappa")

    raw_levels = _require(qb, "levels", "qubit")
    if not isinstance(raw_levels, list):
        raise ConfigError("qubit.levels must be a list")
    levels = []
    for i, lv in enumerate(raw_levels):
        where = f"qubit.levels[{i}]"
        omega = parse_frequency(_require(lv, "omega", where), f"{where}.omega")
        is_top = i == len(raw_levels) - 1
        if is_top:
            g = parse_frequency(lv["g"], f"{where}.g") if "g" in lv else 0.0
        else:
            g = parse_frequency(_require(lv, "g", where), f"{where}.g")
        eps = _parse_dimensionless(_require(lv, "epsilon", where), f"{where}.epsilon")
        levels.append(Level(omega, g, eps))

    params = SystemParams(
        omega_r=omega_r,
        kerr_K=kerr_K,
        kerr_Kp=kerr_Kp,
        kappa=kappa,
        levels=tuple(levels),
        gamma_down=parse_frequency(qb.get("gamma_down", "0 Hz"), "qubit.gamma_down"),
        gamma_phi=parse_frequency(qb.get("gamma_phi", "0 Hz"), "qubit.gamma_phi"),
        sideband_correction=_parse_dimensionless(
            doc.get("sideband_correction", 1.0), "sideband_correction"
        ),
    )

    raw_drives = _require(doc, "drives", "")
    if not isinstance(raw_drives, list):
        raise ConfigError("drives must be a list")
    drives = []
    for k, d in enumerate(raw_drives):
        where = f"drives[{k}]"
        kind = _require(d, "kind", where)
        drives.append(
            DriveSpec(
                amplitude=_parse_amplitude(d, where),
                frequency=parse_frequency(_require(d, "frequency", where), f"{where}.frequency"),
                kind=kind,
            )
        )
    return Scenario(params, tuple(drives))


def load_scenario_file(path) -> Scenario:
    with open(path) as fh:
        return load_scenario(fh.read())


def _q(x: float) -> str:
    return f"{float(x)!r} rad/s"


def scenario_to_dict(scenario: Scenario) -> dict:
    p = scenario.params
    levels = []
    for i, lv in enumerate(p.levels):
        entry = {"omega": _q(lv.omega), "epsilon": float(lv.epsilon)}
        if i < len(p.levels) - 1:
            entry["g"] = _q(lv.g)
        levels.append(entry)
    return {
        "resonator": {
            "omega_r": _q(p.omega_r),
            "kerr_K": _q(p.kerr_K),
            "kerr_Kp": _q(p.kerr_Kp),
            "kappa": _q(p.kappa),
        },
        "qubit": {
            "gamma_down": _q(p.gamma_down),
            "gamma_phi": _q(p.gamma_phi),
            "levels": levels,
        },
        "sideband_correction": float(p.sideband_correction),
        "drives": [
            {
                "kind": d.kind,
                "amplitude": {"re": _q(d.amplitude.real), "im": _q(d.amplitude.imag)},
                "frequency": _q(d.frequency),
            }
            for d in scenario.drives
        ],
    }


def serialize_scenario(scenario: Scenario) -> str:
    """YAML text (rad/s units) that :func:`load_scenario` parses back exactly."""
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)


def param_hash(scenario: Scenario) -> str:
    """Stable SHA-256 of the resolved parameter set, for output provenance."""
    blob = json.dumps(scenario_to_dict(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def reduced_detuning(params: SystemParams, drive: DriveSpec) -> float:
    """Dimensionless detuning 2(omega_r - omega_d)/kappa of a pump drive."""
    if drive.kind != "pump":
        raise ConfigError("reduced detuning is defined for pump drives")
    return 2.0 * (params.omega_r - drive.frequency) / params.kappa

