"""Run configuration: INI-style ``key = value`` sections plus ``section.key=value`` overrides."""
from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field, fields

from .model import ModelConfig
from .sampler import SamplerConfig
from .synth import SynthConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    nodes: str | None = None
    edges: str | None = None
    labels: str | None = None
    split: str | None = None
    primary_type: str = "P"


@dataclass(frozen=True)
class ClusterConfig:
    n_clusters: int | None = None
    restarts: int = 10
    max_iter: int = 300
    seed: int = 0
    use_split: bool = False


SECTIONS: dict[str, type] = {
    "data": DataConfig,
    "model": ModelConfig,
    "sampler": SamplerConfig,
    "train": TrainConfig,
    "cluster": ClusterConfig,
    "synth": SynthConfig,
}
# derived or owned by the CLI rather than the user
HIDDEN = {("sampler", "max_length"), ("train", "checkpoint_path")}
SEEDED = ("model", "sampler", "train", "cluster", "synth")


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> dict:
        return {name: {k: v for k, v in dataclasses.asdict(getattr(self, name)).items()
                       if (name, k) not in HIDDEN}
                for name in SECTIONS}


def _field_types(cls: type) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def _convert(raw, hint, where: str):
    if not isinstance(raw, str):
        return raw
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional:
        if raw.strip().lower() in ("", "none", "null"):
            return None
        hint = next(a for a in args if a is not type(None))
    text = raw.strip()
    try:
        if hint is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(hint, '__name__', hint)}") from None


def build(values: dict[str, dict[str, object]]) -> RunConfig:
    """Validate a nested ``{section: {key: value}}`` mapping into a RunConfig."""
    parts = {}
    for name, cls in SECTIONS.items():
        given = dict(values.get(name, {}))
        types_ = _field_types(cls)
        kwargs = {}
        for key, raw in given.items():
            if key not in types_ or (name, key) in HIDDEN:
                raise ConfigError(f"unknown config key {name}.{key}")
            kwargs[key] = _convert(raw, types_[key], f"{name}.{key}")
        if name == "sampler":
            kwargs["max_length"] = parts["model"].max_length
        try:
            parts[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    unknown = set(values) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    return RunConfig(**parts)


def read_config_file(path: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def apply_overrides(values: dict[str, dict[str, object]], overrides: list[str]) -> None:
    for item in overrides:
        key, sep, val = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        values.setdefault(section, {})[name] = val


def load(path: str | None, overrides: list[str], seed: int | None = None) -> RunConfig:
    values: dict[str, dict[str, object]] = read_config_file(path) if path else {}
    if seed is not None:
        for section in SEEDED:
            values.setdefault(section, {})["seed"] = str(seed)
    apply_overrides(values, overrides)
    return build(values)

