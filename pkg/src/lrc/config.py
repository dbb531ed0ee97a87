"""Flat dotted-key experiment configuration.

Config files are plain text, one ``section.field = value`` per line with
``#`` comments. Values are coerced by the type of the field's default:
bool, int, float, string, or float tuple (``1,2,3`` or ``start:stop:count``
for a linear range). Unknown keys and malformed values are rejected with
the offending line number. Serialization is canonical (sorted keys, repr
floats) so a config has a stable sha256 hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, fields
from importlib import resources

import numpy as np

from lrc.errors import ConfigError
from lrc.link import LinkConfig
from lrc.reservoir import ReservoirParams


@dataclass(frozen=True)
class MaskSpec:
    """Recipe for the per-experiment input mask."""

    n_nodes: int = 32
    kind: str = "uniform"
    rng_seed: int = 2024


@dataclass(frozen=True)
class ReadoutSettings:
    taps_k: int = 10
    train_fraction: float = 0.75
    lambda_grid: tuple = tuple(np.logspace(-8.0, 4.0, 13))


@dataclass(frozen=True)
class RunSettings:
    n_symbols: int = 2**17  # training-stream symbols
    n_test_symbols: int = 2**17  # symbols per test set
    n_test_sets: int = 5
    seed: int = 1
    output_dir: str = "out"


@dataclass(frozen=True)
class SweepSettings:
    delta_f_ghz: tuple = tuple(np.linspace(-50.0, 50.0, 11))
    k_f: tuple = tuple(np.linspace(0.0, 0.2, 9))
    power_dbm: tuple = tuple(np.linspace(-8.0, 14.0, 12))
    osnr_db: tuple = (20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
    taps: tuple = (0.0, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0)
    n_seeds: int = 3
    probe_symbols: int = 256
    probe_trials: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    reservoir: ReservoirParams = field(default_factory=ReservoirParams)
    mask: MaskSpec = field(default_factory=MaskSpec)
    readout: ReadoutSettings = field(default_factory=ReadoutSettings)
    run: RunSettings = field(default_factory=RunSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def validate(self) -> None:
        self.link.validate()
        self.reservoir.validate()
        if self.mask.n_nodes < 1:
            raise ConfigError("mask.n_nodes must be >= 1")
        if self.mask.kind not in ("uniform", "binary"):
            raise ConfigError("mask.kind must be 'uniform' or 'binary'")
        if self.mask.n_nodes % self.link.samples_per_baud:
            raise ConfigError(
                "mask.n_nodes must be a multiple of link.samples_per_baud "
                "(integer oversampling)"
            )
        if self.readout.taps_k < 0:
            raise ConfigError("readout.taps_k must be >= 0")
        if not 0.0 < self.readout.train_fraction < 1.0:
            raise ConfigError("readout.train_fraction must lie in (0, 1)")
        if min(self.run.n_symbols, self.run.n_test_symbols) < 4:
            raise ConfigError("run stream lengths must be at least 4 symbols")
        if self.run.n_test_sets < 1:
            raise ConfigError("run.n_test_sets must be >= 1")


_SECTIONS = {
    "link": LinkConfig,
    "reservoir": ReservoirParams,
    "mask": MaskSpec,
    "readout": ReadoutSettings,
    "run": RunSettings,
    "sweep": SweepSettings,
}


def _parse_value(text: str, default, key: str, lineno: int):
    text = text.strip()
    kind = type(default)
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)  # handles inf/-inf/nan spellings
        if kind is str:
            return text
        if kind is tuple:
            if ":" in text:
                parts = text.split(":")
                if len(parts) != 3:
                    raise ValueError("range syntax is start:stop:count")
                start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
                if count < 1:
                    raise ValueError("range count must be >= 1")
                return tuple(np.linspace(start, stop, count))
            return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    raise ConfigError(f"line {lineno}: unsupported field type for {key}")


def parse_config(
    text: str, base: ExperimentConfig | None = None
) -> ExperimentConfig:
    """Apply ``key = value`` lines on top of ``base`` (or the defaults)."""
    cfg = base if base is not None else ExperimentConfig()
    sections = {name: dict() for name in _SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(f"line {lineno}: key {key!r} is not section.field")
        section, name = key.split(".")
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        klass = _SECTIONS[section]
        defaults = {f.name: _field_default(f) for f in fields(klass)}
        if name not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        sections[section][name] = _parse_value(value, defaults[name], key, lineno)
    parts = {}
    for section, klass in _SECTIONS.items():
        current = getattr(cfg, section)
        if sections[section]:
            current = dataclasses.replace(current, **sections[section])
        parts[section] = current
    return ExperimentConfig(**parts)


def _field_default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


# output_dir says where results land, not what the experiment is; keeping
# it out of the canonical text makes reports and hashes location-independent
_EPHEMERAL = {("run", "output_dir")}


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical flat rendering: every key, sorted, repr floats."""
    lines = []
    for section in sorted(_SECTIONS):
        obj = getattr(cfg, section)
        for f in sorted(fields(obj), key=lambda f: f.name):
            if (section, f.name) in _EPHEMERAL:
                continue
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def config_flat_dict(cfg: ExperimentConfig) -> dict:
    return {
        f"{section}.{f.name}": _format_value(getattr(getattr(cfg, section), f.name))
        for section in sorted(_SECTIONS)
        for f in sorted(fields(getattr(cfg, section)), key=lambda f: f.name)
        if (section, f.name) not in _EPHEMERAL
    }


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()


def preset_names() -> list[str]:
    root = resources.files("lrc") / "presets"
    return sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = resources.files("lrc") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return parse_config(path.read_text(), base)


def theta_ns(cfg: ExperimentConfig) -> float:
    return cfg.reservoir.tau / cfg.mask.n_nodes


def oversample_factor(cfg: ExperimentConfig) -> int:
    return cfg.mask.n_nodes // cfg.link.samples_per_baud
