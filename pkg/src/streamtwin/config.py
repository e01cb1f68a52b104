"""Typed INI configuration.

Every section maps onto one dataclass; values are parsed by the type of the
field's default, and unknown sections or keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .agent.ddpg import AgentConfig
from .catalog import CatalogSpec
from .env import EnvConfig
from .playback import DepartureModel
from .pqoe import POPULATION_PRIOR, PqoeParams
from .radio import ChannelModel, ComputeModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    episodes: int = 1500
    seeds: tuple = (0, 1, 2)
    schemes: tuple = ("DCTRA", "CTRA", "RR", "PF", "JRAT")
    eval_episodes: int = 30
    trace_episodes: int = 1
    catalog_seed: int = 0
    jrat_increments: int = 12
    checkpoint_every: int = 100
    twin_csv: str = ""


@dataclass(frozen=True)
class RunConfig:
    catalog: CatalogSpec = field(default_factory=CatalogSpec)
    channel: ChannelModel = field(default_factory=ChannelModel)
    compute: ComputeModel = field(default_factory=ComputeModel)
    env: EnvConfig = field(default_factory=EnvConfig)
    departure: DepartureModel = field(default_factory=DepartureModel)
    prior: PqoeParams = POPULATION_PRIOR
    agent: AgentConfig = field(default_factory=AgentConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def env_config(self) -> EnvConfig:
        """Environment settings with the departure model and prior folded in."""
        return dataclasses.replace(self.env, departure=self.departure, prior=self.prior)


SECTIONS = tuple(f.name for f in dataclasses.fields(RunConfig))
_NESTED = {"departure", "prior"}  # EnvConfig fields configured in their own sections


def _parse_scalar(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def parse_value(text: str, default):
    if isinstance(default, tuple):
        items = [x for x in text.split(",") if x.strip()]
        like = default[0] if default else ""
        return tuple(_parse_scalar(x, like) for x in items)
    return _parse_scalar(text, default)


def format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _section_fields(name: str, obj):
    for f in dataclasses.fields(obj):
        if name == "env" and f.name in _NESTED:
            continue
        yield f.name, getattr(obj, f.name)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read an INI file (or nothing) on top of the defaults.

    ``overrides`` maps ``"section.key"`` to a string value and is applied last.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, str(value))

    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")

    base = RunConfig()
    built = {}
    for sec in SECTIONS:
        obj = getattr(base, sec)
        if not parser.has_section(sec):
            built[sec] = obj
            continue
        defaults = dict(_section_fields(sec, obj))
        changes = {}
        for key, text in parser.items(sec):
            if key not in defaults:
                raise ConfigError(f"unknown key [{sec}] {key}")
            try:
                changes[key] = parse_value(text, defaults[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for [{sec}] {key}: {exc}") from None
        try:
            built[sec] = dataclasses.replace(obj, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{sec}]: {exc}") from None
    cfg = RunConfig(**built)
    try:
        cfg.catalog.validate()
    except ValueError as exc:
        raise ConfigError(f"[catalog]: {exc}") from None
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Effective configuration as INI text; ``load_config`` round-trips it."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for sec in SECTIONS:
        parser.add_section(sec)
        for key, value in _section_fields(sec, getattr(cfg, sec)):
            parser.set(sec, key, format_value(value))
    from io import StringIO
    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_dict(cfg: RunConfig) -> dict:
    return {sec: {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in _section_fields(sec, getattr(cfg, sec))}
            for sec in SECTIONS}
