"""Run configuration: a flat TOML document with validated, documented defaults."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import tomli

from .constants import FINE_STRUCTURE, PhysicalConstants
from .field import FrequencyGrid
from .integrator import FixedCutoff, IntegratorConfig, MovingCutoff
from .seeding import field_seed, trajectory_seeds  # noqa: F401  (re-exported)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


REQUIRED = ("Z", "N", "seed")


@dataclass(frozen=True)
class RunConfig:
    Z: int
    N: int
    seed: int
    alpha: float = FINE_STRUCTURE
    coupling: float = 1.0
    max_mode: Optional[int] = None
    cutoff_scale: Optional[float] = None
    formulation: str = "s_form"
    cutoff: str = "moving"
    n_harm: float = 2.5
    update_increment: float = 0.2
    n_low: Optional[int] = None
    n_high: Optional[int] = None
    steps_per_orbit: int = 4000
    field_refreshes: int = 10
    interpolation: str = "lagrange"
    time_regularization: str = "eccentric_anomaly"
    energy_floor: float = -1.6
    ionisation_threshold: float = -0.05
    ionisation_dwell: float = 1e7
    guard_radius: float = 1e-3
    field_enabled: bool = True
    initial_mapping: str = "exact"
    t_max: float = 1e5
    max_orbits: Optional[int] = None
    sample_interval: float = 1.0
    ensemble_size: int = 1
    workers: int = 1
    initial: str = "sampled"
    initial_R: float = 2.0
    initial_eps: float = 0.0
    initial_start: str = "perihelion"
    output_dir: str = "sed_output"
    record_format: str = "csv"
    checkpoint_every: int = 0

    def __post_init__(self):
        _validate(self)

    # -- derived objects --
    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(self.Z, self.alpha, self.coupling)

    def integrator(self) -> IntegratorConfig:
        if self.cutoff == "moving":
            cut = MovingCutoff(self.n_harm, self.update_increment)
        else:
            cut = FixedCutoff(self.n_low, self.n_high)
        return IntegratorConfig(
            formulation=self.formulation, steps_per_orbit=self.steps_per_orbit,
            field_refreshes=self.field_refreshes, interpolation=self.interpolation,
            energy_floor=self.energy_floor, ionisation_threshold=self.ionisation_threshold,
            ionisation_dwell=self.ionisation_dwell, cutoff=cut,
            mixed_split=self.n_low if self.cutoff == "fixed" else None,
            time_regularization=self.time_regularization, guard_radius=self.guard_radius,
            sample_interval=self.sample_interval, field_enabled=self.field_enabled,
            initial_mapping=self.initial_mapping)

    def resolved_cutoff_scale(self) -> float:
        return self.cutoff_scale if self.cutoff_scale is not None else self.constants().cutoff_scale

    def resolved_max_mode(self) -> int:
        """Explicit ``max_mode`` or the largest index any window can request."""
        if self.max_mode is not None:
            return self.max_mode
        k3_floor = (-2.0 * self.energy_floor) ** 1.5
        if self.cutoff == "moving":
            return math.ceil((self.n_harm + 0.5) * k3_floor * self.N) + 1
        return self.n_high if self.n_high is not None else round(1.5 * k3_floor * self.N)

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.N, self.resolved_max_mode())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_CHOICES = {
    "formulation": ("newton", "s_form", "pure_gc", "mixed_gc"),
    "cutoff": ("moving", "fixed"),
    "interpolation": ("lagrange", "exact"),
    "time_regularization": ("eccentric_anomaly", "none"),
    "initial_mapping": ("exact", "neglect_beta"),
    "initial": ("sampled", "circular", "explicit"),
    "initial_start": ("perihelion", "aphelion", "random"),
    "record_format": ("csv", "binary"),
}


def _validate(c: RunConfig) -> None:
    def need(key, ok, msg):
        if not ok:
            raise ConfigError(key, msg)

    need("Z", c.Z >= 1, "nuclear charge must be a positive integer")
    need("N", c.N >= 1, "mesh density must be a positive integer")
    need("seed", c.seed >= 0, "seed must be a nonnegative integer")
    need("alpha", c.alpha > 0, "must be positive")
    need("coupling", c.coupling >= 0, "must be nonnegative")
    need("max_mode", c.max_mode is None or c.max_mode >= 1, "must be a positive integer")
    need("cutoff_scale", c.cutoff_scale is None or c.cutoff_scale > 0, "must be positive")
    for key, options in _CHOICES.items():
        need(key, getattr(c, key) in options, f"must be one of {options}")
    need("n_harm", c.n_harm > 0, "must be positive")
    need("update_increment", 0 < c.update_increment < 1, "must lie in (0, 1)")
    need("n_low", c.n_low is None or c.n_low >= 0, "must be nonnegative")
    need("n_high", c.n_high is None or c.n_high >= 1, "must be positive")
    if c.n_low is not None and c.n_high is not None:
        need("n_low", c.n_low < c.n_high, "must be below n_high")
    need("steps_per_orbit", c.steps_per_orbit >= 600, "must be at least 600")
    need("field_refreshes", c.field_refreshes >= 1, "must be positive")
    need("energy_floor", c.energy_floor < c.ionisation_threshold, "must lie below ionisation_threshold")
    need("ionisation_threshold", c.ionisation_threshold < 0, "must be negative")
    need("ionisation_dwell", c.ionisation_dwell > 0, "must be positive")
    need("guard_radius", c.guard_radius > 0, "must be positive")
    need("t_max", c.t_max > 0, "must be positive")
    need("max_orbits", c.max_orbits is None or c.max_orbits >= 1, "must be positive")
    need("sample_interval", c.sample_interval > 0, "must be positive")
    need("ensemble_size", c.ensemble_size >= 1, "must be at least 1")
    need("workers", c.workers >= 1, "must be at least 1")
    need("initial_R", c.initial_R > 0, "must be positive")
    need("initial_eps", 0 <= c.initial_eps < 1, "must lie in [0, 1)")
    need("checkpoint_every", c.checkpoint_every >= 0, "must be nonnegative")
    if c.max_mode is not None and c.n_high is not None:
        need("n_high", c.n_high <= c.max_mode, "exceeds max_mode")


def _coerce(f: dataclasses.Field, key: str, value: Any):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if "int" in kind:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(key, f"expected an integer, got {value!r}")
            value = int(value)
        return value
    if "float" in kind:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if "bool" in kind:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true or false, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a string, got {value!r}")
    return value


_FIELDS = {f.name: f for f in fields(RunConfig)}


def config_from_mapping(doc: dict) -> RunConfig:
    unknown = sorted(set(doc) - set(_FIELDS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(key, "required key missing")
    return RunConfig(**{k: _coerce(_FIELDS[k], k, v) for k, v in doc.items()})


def parse_config(text: str) -> RunConfig:
    """Parse a TOML document; keys are flat, unknown keys are rejected."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"malformed TOML: {exc}") from None
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(nested[0], "tables are not supported; use flat keys")
    return config_from_mapping(doc)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        s = repr(v)
        return s if any(ch in s for ch in ".en") else s + ".0"
    # JSON string escapes are valid TOML basic-string escapes; TOML also bans raw DEL
    return json.dumps(v, ensure_ascii=False).replace("\x7f", "\\u007f")


def emit_config(cfg: RunConfig) -> str:
    """Every set field as ``key = value``; unset optional fields are omitted."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is not None:
            lines.append(f"{f.name} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"
