"""IDX container and binary PGM export.

Only the unsigned-byte element type (code 0x08) is handled, which covers the
MNIST image/label files and every dataset this package writes.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UBYTE = 0x08


class IdxError(ValueError):
    pass


class TruncatedHeader(IdxError):
    pass


class UnsupportedTypeCode(IdxError):
    pass


class PayloadLengthMismatch(IdxError):
    pass


@dataclass(frozen=True)
class IdxTensor:
    dims: tuple[int, ...]
    data: bytes
    dtype: int = UBYTE

    def __post_init__(self):
        if not self.dims or len(self.dims) > 255:
            raise IdxError(f"bad axis count {len(self.dims)}")
        if any(d < 1 for d in self.dims):
            raise IdxError(f"axis lengths must be >= 1, got {self.dims}")
        if int(np.prod(self.dims, dtype=np.int64)) != len(self.data):
            raise PayloadLengthMismatch(
                f"dims {self.dims} need {np.prod(self.dims)} bytes, got {len(self.data)}"
            )

    @classmethod
    def from_array(cls, arr) -> "IdxTensor":
        arr = np.asarray(arr)
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise IdxError("values outside the unsigned-byte range")
            arr = arr.astype(np.uint8)
        return cls(dims=tuple(int(d) for d in arr.shape), data=arr.tobytes(order="C"))

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.dims)


def read_idx(buf: bytes) -> IdxTensor:
    buf = bytes(buf)
    if len(buf) < 4:
        raise TruncatedHeader("missing magic number")
    zero0, zero1, code, ndim = buf[:4]
    if zero0 or zero1:
        raise IdxError("magic number must start with two zero bytes")
    if code != UBYTE:
        raise UnsupportedTypeCode(f"type code 0x{code:02x} (only 0x08 supported)")
    if ndim == 0:
        raise IdxError("axis count must be >= 1")
    end = 4 + 4 * ndim
    if len(buf) < end:
        raise TruncatedHeader(f"header needs {end} bytes, got {len(buf)}")
    dims = struct.unpack(f">{ndim}I", buf[4:end])
    payload = buf[end:]
    expected = int(np.prod(dims, dtype=np.int64))
    if len(payload) != expected:
        raise PayloadLengthMismatch(f"expected {expected} payload bytes, got {len(payload)}")
    return IdxTensor(dims=tuple(dims), data=payload)


def write_idx(t: IdxTensor) -> bytes:
    header = bytes((0, 0, t.dtype, len(t.dims))) + struct.pack(f">{len(t.dims)}I", *t.dims)
    return header + t.data


def load_idx(path: str | os.PathLike) -> np.ndarray:
    return read_idx(Path(path).read_bytes()).to_array()


def save_idx(path: str | os.PathLike, arr) -> None:
    Path(path).write_bytes(write_idx(IdxTensor.from_array(arr)))


def write_pgm(img) -> bytes:
    """Encode a 2-D uint8 image as binary (P5) PGM."""
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def read_pgm(buf: bytes) -> np.ndarray:
    """Decode the P5 variant written by :func:`write_pgm` (comments not supported)."""
    buf = bytes(buf)
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(buf[start:pos])
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError("only maxval 255 supported")
    # exactly one whitespace byte separates the header from the raster
    payload = buf[pos + 1:]
    if len(payload) != w * h:
        raise ValueError("PGM payload length mismatch")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
