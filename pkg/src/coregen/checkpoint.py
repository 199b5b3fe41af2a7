"""Binary checkpoint format.

Layout (all integers little-endian uint32)::

    b"CORE" | version | len | config text (UTF-8 key=value lines)
    | entry count | per entry: len | name | rank | dims... | float64 LE data
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .ndmath import Tensor

MAGIC = b"CORE"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated, or incompatible checkpoint."""


def content_hash(text: str | bytes) -> str:
    data = text.encode("utf-8") if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


def dumps_config(config: Mapping[str, str]) -> str:
    return "".join(f"{k}={config[k]}\n" for k in sorted(config))


def loads_config(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointError(f"bad config line {line!r}")
            out[key.strip()] = value.strip()
    return out


def encode_checkpoint(params: Mapping[str, Tensor], config: Mapping[str, str],
                      version: int = VERSION) -> bytes:
    parts = [MAGIC, struct.pack("<I", version)]
    conf = dumps_config(config).encode("utf-8")
    parts += [struct.pack("<I", len(conf)), conf, struct.pack("<I", len(params))]
    for name in sorted(params):
        data = np.asarray(params[name].data, dtype="<f8")
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<I", data.ndim)]
        parts += [struct.pack("<I", d) for d in data.shape]
        parts.append(data.tobytes())
    return b"".join(parts)


def save_checkpoint(path, params: Mapping[str, Tensor], config: Mapping[str, str]) -> None:
    Path(path).write_bytes(encode_checkpoint(params, config))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at byte offset {self.pos}: "
                                  f"need {n} bytes for {what}, {len(self.buf) - self.pos} left")
        out = self.buf[self.pos: self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def decode_checkpoint(buf: bytes) -> tuple[dict[str, Tensor], dict[str, str]]:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    conf_len = r.u32("config length")
    config = loads_config(r.take(conf_len, "config").decode("utf-8"))
    params = {}
    for _ in range(r.u32("entry count")):
        name = r.take(r.u32("name length"), "name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        shape = tuple(r.u32(f"dims of {name}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(r.take(8 * count, f"data of {name}"), dtype="<f8").reshape(shape)
        params[name] = Tensor(data.astype(np.float64), name=name)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after byte offset {r.pos}")
    return params, config


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict[str, str]]:
    return decode_checkpoint(Path(path).read_bytes())
