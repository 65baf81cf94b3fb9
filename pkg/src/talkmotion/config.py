"""Run configuration: one TOML document covering every stage.

Each section maps onto a module-level config dataclass, so defaults live
in exactly one place. Parsing is strict: unknown sections or keys and
values of the wrong type are rejected with the offending name.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dpse import DpseConfig
from .exceptions import ConfigurationError
from .io import DEFAULT_FPS
from .kel import KeyframePolicy
from .keypredictor import KeyPredictorConfig
from .metrics import BeatConfig
from .motiongen import DEFAULT_RESOLUTIONS, LossWeights, NoiseSchedule


@dataclass(frozen=True)
class KeyPredictorTraining:
    learning_rate: float = 1e-4
    warmup_steps: int = 0
    weight_decay: float = 0.01
    steps: int = 1000
    batch_size: int = 32
    threshold: float = 0.5


@dataclass(frozen=True)
class GeneratorConfig:
    dim: int = 512
    layers: int = 2
    heads: int = 8
    resolutions: tuple = DEFAULT_RESOLUTIONS
    learning_rate: float = 1e-4
    warmup_steps: int = 0
    weight_decay: float = 0.01
    steps: int = 1000


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    frame_rate: float = DEFAULT_FPS
    out_dir: str = "run"
    plots: bool = False


SECTIONS = {
    "run": RunSettings,
    "dpse": DpseConfig,
    "keyframes": KeyframePolicy,
    "keypredictor": KeyPredictorConfig,
    "keypredictor_training": KeyPredictorTraining,
    "generator": GeneratorConfig,
    "noise": NoiseSchedule,
    "loss": LossWeights,
    "beat": BeatConfig,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    dpse: DpseConfig = field(default_factory=DpseConfig)
    keyframes: KeyframePolicy = field(default_factory=KeyframePolicy)
    keypredictor: KeyPredictorConfig = field(default_factory=KeyPredictorConfig)
    keypredictor_training: KeyPredictorTraining = field(default_factory=KeyPredictorTraining)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)
    loss: LossWeights = field(default_factory=LossWeights)
    beat: BeatConfig = field(default_factory=BeatConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = sorted(set(doc) - set(SECTIONS))
        if unknown:
            raise ConfigurationError(f"unknown config section(s): {', '.join(unknown)}")
        parts = {}
        for name, kind in SECTIONS.items():
            body = doc.get(name, {})
            if not isinstance(body, dict):
                raise ConfigurationError(f"[{name}] must be a table")
            parts[name] = _build_section(name, kind, body)
        return cls(**parts)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: _to_toml(getattr(sec, f.name))
                         for f in dataclasses.fields(sec)
                         if getattr(sec, f.name) is not None}
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``section.key=value`` strings; values are parsed as TOML literals."""
        doc = self.to_dict()
        for a in assignments:
            key, sep, raw = a.partition("=")
            section, dot, name = key.strip().partition(".")
            if not sep or not dot:
                raise ConfigurationError(f"override must look like section.key=value, got {a!r}")
            try:
                parsed = tomllib.loads(f"v = {raw.strip()}")["v"]
            except tomllib.TOMLDecodeError:
                parsed = raw.strip()
            doc.setdefault(section, {})[name] = parsed
        return RunConfig.from_dict(doc)


def _to_toml(v):
    if isinstance(v, tuple):
        return [_to_toml(x) for x in v]
    return v


def _to_tuple(v):
    if isinstance(v, list):
        return tuple(_to_tuple(x) for x in v)
    return v


def _coerce(where, default, v):
    if isinstance(default, bool):
        ok = isinstance(v, bool)
    elif isinstance(default, int):
        ok = isinstance(v, int) and not isinstance(v, bool)
    elif isinstance(default, float) or default is None:
        ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        v = float(v) if ok else v
    elif isinstance(default, str):
        ok = isinstance(v, str)
    elif isinstance(default, tuple):
        ok = isinstance(v, list)
        v = _to_tuple(v) if ok else v
    else:
        ok = True
    if not ok:
        raise ConfigurationError(f"{where}: expected {type(default).__name__}, got {v!r}")
    return v


def _build_section(name, kind, body):
    fields = {f.name: f for f in dataclasses.fields(kind)}
    unknown = sorted(set(body) - set(fields))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kwargs = {}
    for key, v in body.items():
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kwargs[key] = _coerce(f"{name}.{key}", default, v)
    return kind(**kwargs)


def loads(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"invalid config: {e}") from None
    return RunConfig.from_dict(doc)


def load(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: invalid config: {e}") from None
    return RunConfig.from_dict(doc)


def dump(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(cfg.to_toml())
