"""Layered run configuration: defaults < TOML file < command-line flags.

Each TOML table maps onto one frozen config dataclass. Unknown tables or keys and
values the dataclass rejects raise ConfigError carrying the offending line number.
"""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import FilterConfig, RadioConfig
from .env import EnvConfig
from .metrics import RateConfig
from .ppo.model import PpoConfig
from .protocol import A3Config, HoTiming, ProtocolConfig, RlfConfig
from .scenarios import ScenarioConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = f"{source or '<config>'}:{line}: " if line is not None else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class IoConfig:
    out: str = "out"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    a3: A3Config = field(default_factory=A3Config)
    rlf: RlfConfig = field(default_factory=RlfConfig)
    timing: HoTiming = field(default_factory=HoTiming)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    metrics: RateConfig = field(default_factory=RateConfig)
    io: IoConfig = field(default_factory=IoConfig)

    @property
    def protocol(self) -> ProtocolConfig:
        return ProtocolConfig(self.a3, self.rlf, self.timing)

    def snapshot(self) -> dict:
        """Plain-data view of the configuration for embedding in outputs.

        The output location is left out so reruns into another directory match byte for byte.
        """
        doc = dataclasses.asdict(self)
        del doc["io"]
        return doc


SECTIONS = [f.name for f in fields(RunConfig) if f.name != "seed"]


def _line_of(text: str, section: str | None, key: str | None = None) -> int | None:
    """1-based line of ``[section]`` or of ``key`` inside it, found by a plain scan."""
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        head = re.match(r"^\[\s*([A-Za-z0-9_.-]+)\s*\]", line)
        if head:
            current = head.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return i
    return None


def _build(cls, values: dict, text: str, section: str, source: str | None):
    known = {f.name: f for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in [{section}]", _line_of(text, section, key), source)
    kwargs = {}
    for key, value in values.items():
        default = getattr(cls(), key)
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be true or false", _line_of(text, section, key), source)
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        first = next(iter(values), None)
        line = _line_of(text, section, first) if first else _line_of(text, section)
        raise ConfigError(f"[{section}] {exc}", line, source) from exc


def parse_config(text: str, source: str | None = None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", int(m.group(1)) if m else None, source) from exc
    parts = {}
    for name, value in doc.items():
        if name == "seed":
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError("seed must be a non-negative integer", _line_of(text, None, "seed"), source)
            parts["seed"] = value
            continue
        if name not in SECTIONS:
            raise ConfigError(f"unknown section '{name}'", _line_of(text, name) or _line_of(text, None, name), source)
        if not isinstance(value, dict):
            raise ConfigError(f"'{name}' must be a table", _line_of(text, None, name), source)
        cls = type(getattr(RunConfig(), name))
        parts[name] = _build(cls, value, text, name, source)
    return RunConfig(**parts)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from exc
    return parse_config(text, str(path))


def with_overrides(cfg: RunConfig, *, seed: int | None = None, out: str | None = None,
                   a3: dict | None = None, ppo: dict | None = None) -> RunConfig:
    """Apply command-line overrides on top of a loaded config."""
    try:
        if seed is not None:
            if seed < 0:
                raise ValueError("seed must be >= 0")
            cfg = replace(cfg, seed=seed)
        if out is not None:
            cfg = replace(cfg, io=IoConfig(out))
        if a3:
            cfg = replace(cfg, a3=replace(cfg.a3, **a3))
        if ppo:
            cfg = replace(cfg, ppo=replace(cfg.ppo, **ppo))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"command-line override: {exc}") from exc
    return cfg
