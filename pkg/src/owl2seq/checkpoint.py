"""Versioned binary checkpoints: magic, config echo, vocab tables, tensors.

Layout (all integers little-endian unsigned 32-bit, strings UTF-8 with a
length prefix):

    magic "OWL2SEQ\\0" | version | config block | vocab tables | tensors

Each vocab table is a name plus its entries in index order; each tensor is
a name, rows, cols and rows*cols little-endian float64 values in row-major
order. One-dimensional arrays are stored as a single row. Loading a file
with a different version fails; truncated or mangled files never yield a
partial model.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "CheckpointVersionError",
    "checkpoint_save",
    "checkpoint_load",
]

MAGIC = b"OWL2SEQ\x00"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    """The file is not a readable checkpoint (bad magic, truncation, garbage)."""


class CheckpointVersionError(CheckpointError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"checkpoint format version {found}, this build reads {expected}")
        self.found = found
        self.expected = expected


@dataclass
class Checkpoint:
    config: dict = field(default_factory=dict)
    vocab_tables: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def checkpoint_save(path, ckpt: Checkpoint) -> None:
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    config_text = "\n".join(f"{k}={v}" for k, v in sorted(ckpt.config.items()))
    chunks.append(_pack_str(config_text))
    chunks.append(struct.pack("<I", len(ckpt.vocab_tables)))
    for name in sorted(ckpt.vocab_tables):
        entries = ckpt.vocab_tables[name]
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", len(entries)))
        for entry in entries:
            chunks.append(_pack_str(entry))
    chunks.append(struct.pack("<I", len(ckpt.tensors)))
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name], dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"tensor {name!r} has {arr.ndim} dimensions, expected 1 or 2")
        rows, cols = arr.shape
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(arr.astype("<f8").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.data)


def checkpoint_load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(version, FORMAT_VERSION)
    config = {}
    config_text = r.string()
    for line in config_text.splitlines():
        if line:
            key, _, value = line.partition("=")
            config[key] = value
    vocab_tables = {}
    for _ in range(r.u32()):
        name = r.string()
        count = r.u32()
        vocab_tables[name] = tuple(r.string() for _ in range(count))
    tensors = {}
    for _ in range(r.u32()):
        name = r.string()
        rows, cols = struct.unpack("<II", r.take(8))
        raw = r.take(rows * cols * 8)
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
    if not r.done():
        raise CheckpointError(f"{len(r.data) - r.pos} trailing bytes after checkpoint payload")
    return Checkpoint(config=config, vocab_tables=vocab_tables, tensors=tensors)
