"""``BDSM`` checkpoint files.

Layout (all integers little-endian u32)::

    b"BDSM" | version | config_len | config JSON (utf-8, config_len bytes)
    | n_tensors | n_tensors x (ndim | dims... | float32 LE payload)

Parameters are stored in graph order, so a checkpoint can only be loaded
into a model with the same configuration.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..exceptions import FormatError
from .model import ModelConfig, build_bdss

MAGIC = b"BDSM"
VERSION = 1
_U32 = struct.Struct("<I")


def checkpoint_bytes(model, extra=None):
    meta = {"model": model.config.to_dict()}
    if extra:
        meta["extra"] = extra
    config = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = model.parameters()
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(config)), config, _U32.pack(len(params))]
    for p in params:
        chunks.append(_U32.pack(p.ndim))
        chunks.extend(_U32.pack(d) for d in p.shape)
        chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated checkpoint: need {n} bytes for {what}, {len(self.buf) - self.pos} left",
                self.pos,
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def parse_checkpoint(buf):
    """Return ``(config, list of float32 arrays, extra metadata)`` from raw bytes."""
    r = _Reader(bytes(buf))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (expected {VERSION})", 4)
    n = r.u32("config length")
    at = r.pos
    try:
        meta = json.loads(r.take(n, "config").decode("utf-8"))
        config = ModelConfig.from_dict(meta["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed model config: {exc}", at) from None
    count = r.u32("tensor count")
    arrays = []
    for i in range(count):
        ndim = r.u32(f"tensor {i} rank")
        if ndim > 8:
            raise FormatError(f"tensor {i} claims rank {ndim}", r.pos - 4)
        shape = tuple(r.u32(f"tensor {i} extent") for _ in range(ndim))
        size = int(np.prod(shape, dtype=np.int64))
        payload = r.take(4 * size, f"tensor {i} payload")
        arrays.append(np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32))
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after last tensor", r.pos)
    return config, arrays, meta.get("extra")


def model_from_bytes(buf, dtype=np.float32):
    config, arrays, _ = parse_checkpoint(buf)
    model = build_bdss(config, seed=0, dtype=dtype)
    params = model.parameters()
    if len(params) != len(arrays):
        raise FormatError(f"checkpoint holds {len(arrays)} tensors, config needs {len(params)}")
    for p, a in zip(params, arrays):
        if p.shape != a.shape:
            raise FormatError(f"{p.name}: expected shape {p.shape}, found {a.shape}")
        p.data = a.astype(dtype)
    return model


def save_checkpoint(model, path, extra=None):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model, extra))


def load_checkpoint(path, dtype=np.float32):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read(), dtype)
