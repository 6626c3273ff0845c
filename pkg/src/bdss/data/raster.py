"""Grayscale raster I/O: 8-bit binary PGM and the lossless ``BDSR`` float format."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from ..exceptions import FormatError

BDSR_MAGIC = b"BDSR"
BDSR_VERSION = 1
_HEADER = struct.Struct("<4sIII")
PROVENANCES = ("clean", "speckled", "despeckled")


@dataclass
class ImageRaster:
    """Row-major single-channel intensity image, nominally in [0, 1]."""

    values: np.ndarray
    provenance: str = "clean"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"raster must be 2-D, got shape {self.values.shape}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_array(image):
    return image.values if isinstance(image, ImageRaster) else np.asarray(image)


# -- BDSR ---------------------------------------------------------------------


def bdsr_bytes(values):
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {values.shape}")
    h, w = values.shape
    header = _HEADER.pack(BDSR_MAGIC, BDSR_VERSION, w, h)
    return header + np.ascontiguousarray(values, dtype="<f4").tobytes()


def parse_bdsr(buf):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated BDSR header ({len(buf)} of {_HEADER.size} bytes)", len(buf))
    magic, version, w, h = _HEADER.unpack_from(buf)
    if magic != BDSR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {BDSR_MAGIC!r}", 0)
    if version != BDSR_VERSION:
        raise FormatError(f"unsupported BDSR version {version}", 4)
    if w < 1 or h < 1:
        raise FormatError(f"invalid extent {w}x{h}", 8)
    need = _HEADER.size + 4 * w * h
    if len(buf) < need:
        raise FormatError(f"truncated payload: expected {need} bytes, file has {len(buf)}", len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload", need)
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(h, w).astype(np.float32)


# -- PGM ----------------------------------------------------------------------


def _pgm_header(buf):
    """Return (width, height, maxval, payload offset) of a binary PGM."""
    if buf[:2] != b"P5":
        raise FormatError(f"not a binary PGM: magic {bytes(buf[:2])!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(buf):
            raise FormatError("truncated PGM header", pos)
        ch = buf[pos : pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            if end < 0:
                raise FormatError("unterminated comment in PGM header", pos)
            pos = end + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(buf) and buf[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(buf[start:pos]))
        else:
            raise FormatError(f"unexpected byte {ch!r} in PGM header", pos)
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval", pos)
    w, h, maxval = fields
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise FormatError(f"invalid PGM geometry {w}x{h} maxval {maxval}", pos)
    return w, h, maxval, pos + 1


def parse_pgm(buf):
    w, h, maxval, offset = _pgm_header(buf)
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    need = offset + w * h * dtype.itemsize
    if len(buf) < need:
        raise FormatError(f"truncated PGM payload: expected {need} bytes, file has {len(buf)}", len(buf))
    pixels = np.frombuffer(buf, dtype=dtype, count=w * h, offset=offset).reshape(h, w)
    return (pixels.astype(np.float32) / np.float32(maxval)).astype(np.float32)


def pgm_bytes(values):
    """Clip to [0, 1] and quantize to 8 bits."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {values.shape}")
    h, w = values.shape
    pixels = np.rint(np.clip(np.nan_to_num(values), 0.0, 1.0) * 255.0).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


# -- dispatch -------------------------------------------------------------------


def _is_pgm_path(path):
    return os.fspath(path).lower().endswith((".pgm", ".pnm"))


def read_raster(path, provenance="clean"):
    """Load a PGM or BDSR file (chosen by magic bytes) as an :class:`ImageRaster`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] == BDSR_MAGIC:
        values = parse_bdsr(buf)
    elif buf[:2] == b"P5":
        values = parse_pgm(buf)
    else:
        raise FormatError(f"{os.fspath(path)}: unrecognised raster magic {buf[:4]!r}", 0)
    return ImageRaster(values, provenance)


def write_raster(raster, path):
    """Write ``.pgm`` as clipped 8-bit, anything else as lossless BDSR."""
    values = as_array(raster)
    data = pgm_bytes(values) if _is_pgm_path(path) else bdsr_bytes(values)
    with open(path, "wb") as fh:
        fh.write(data)
