"""Run configuration: INI sections for every stage, one master seed, flag overrides."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .exceptions import ConfigurationError
from .network import ModelConfig
from .speckle import SpeckleSpec
from .trainer import TrainConfig

SECTIONS = ("run", "speckle", "model", "trainer", "data", "metrics")


@dataclass
class RunConfig:
    """Everything a command needs besides its input paths.

    Each field lives in one INI section (see ``_SECTION_OF``); the master
    ``seed`` feeds initialization, speckle and data order alike.
    """

    seed: int = 0
    threads: int = 1
    out: str = "run"
    looks: str = "1,10"
    scale_factor: int = 1
    lr0: float = 1e-3
    halve_every: int = 3
    epochs: int = 16
    batch_size: int = 16
    patch: int = 112
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mode: str = "self_supervised"
    stride: int = 0
    fresh_noise: bool = True
    validation: str = ""
    target: str = ""
    regions: str = ""
    indexes: str = ""
    tile: int = 256
    extra: dict = field(default_factory=dict, repr=False)

    # -- derived configs ---------------------------------------------------

    def looks_value(self):
        parts = [p.strip() for p in str(self.looks).split(",") if p.strip()]
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise ConfigurationError(f"looks: expected 'L' or 'low,high', got {self.looks!r}") from None
        if len(values) == 1:
            return values[0]
        if len(values) == 2:
            return tuple(values)
        raise ConfigurationError(f"looks: expected 'L' or 'low,high', got {self.looks!r}")

    def speckle_spec(self):
        return SpeckleSpec(self.looks_value(), seed=self.seed)

    def model_config(self):
        return ModelConfig(scale_factor=self.scale_factor).validate()

    def train_config(self):
        return TrainConfig(
            lr0=self.lr0,
            halve_every=self.halve_every,
            epochs=self.epochs,
            batch_size=self.batch_size,
            patch=self.patch,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            mode=self.mode,
            seed=self.seed,
        ).validate()

    def patch_stride(self):
        return self.stride if self.stride > 0 else self.patch

    def index_list(self):
        return [s.strip() for s in self.indexes.split(",") if s.strip()] or None

    # -- INI round trip ----------------------------------------------------

    def to_ini(self):
        parser = configparser.ConfigParser()
        for section in SECTIONS:
            parser.add_section(section)
        for f in fields(self):
            if f.name == "extra":
                continue
            value = getattr(self, f.name)
            parser.set(_SECTION_OF[f.name], f.name, _format(value))
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def update(self, **overrides):
        """Apply non-None overrides (command-line flags win over the file)."""
        for name, value in overrides.items():
            if value is None:
                continue
            if name not in _SECTION_OF:
                raise ConfigurationError(f"unknown setting {name!r}")
            setattr(self, name, _coerce(name, value))
        return self


_SECTION_OF = {
    "seed": "run",
    "threads": "run",
    "out": "run",
    "looks": "speckle",
    "scale_factor": "model",
    "lr0": "trainer",
    "halve_every": "trainer",
    "epochs": "trainer",
    "batch_size": "trainer",
    "patch": "trainer",
    "beta1": "trainer",
    "beta2": "trainer",
    "eps": "trainer",
    "mode": "trainer",
    "stride": "data",
    "fresh_noise": "data",
    "validation": "data",
    "target": "data",
    "regions": "metrics",
    "indexes": "metrics",
    "tile": "metrics",
}

_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name, value):
    kind = _TYPES[name]
    if isinstance(value, str):
        value = value.strip()
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            lowered = str(value).lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except ValueError:
        raise ConfigurationError(f"{name}: cannot interpret {value!r} as {kind}") from None


def parse_config(text, base=None):
    """Read INI ``text`` on top of ``base`` (defaults if None).

    Keys are looked up by name; a key in the wrong section or an unknown key
    is rejected so typos do not silently fall back to defaults.
    """
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config: {exc}") from None
    cfg = RunConfig() if base is None else base
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"config: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in _SECTION_OF:
                raise ConfigurationError(f"config: unknown key {key!r} in [{section}]")
            if _SECTION_OF[key] != section:
                raise ConfigurationError(f"config: key {key!r} belongs in [{_SECTION_OF[key]}], not [{section}]")
            setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
