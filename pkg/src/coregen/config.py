"""Flat ``key=value`` run configuration with a closed schema.

Precedence, lowest to highest: built-in defaults, the config file, then
command-line ``--set key=value`` overrides (later overrides win).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable

from .checkpoint import content_hash
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig(TrainConfig):
    max_len: int = 50
    beam_width: int = 1
    top_n: int = 30000
    lead_k: int = 20

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def dumps(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in sorted(asdict(self).items()))

    def hash(self) -> str:
        return content_hash(self.dumps())


SCHEMA = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = SCHEMA[key]
    try:
        if kind in (int, "int"):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None


def parse_assignments(lines: Iterable[str], source: str = "config") -> dict:
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source} line {lineno}: expected key=value")
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(SCHEMA))}")
        values[key] = _convert(key, raw.strip())
    return values


def load_config(path=None, overrides: Iterable[str] = ()) -> RunConfig:
    values = {}
    if path is not None:
        values.update(parse_assignments(Path(path).read_text(encoding="utf-8").splitlines(), str(path)))
    values.update(parse_assignments(overrides, "--set"))
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
