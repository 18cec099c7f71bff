"""Flat binary container for a JSON descriptor plus a list of float64 arrays.

Layout (all integers little-endian)::

    magic            ASCII bytes, e.g. b"DFNT1"
    u32 n            descriptor length in bytes
    n bytes          UTF-8 JSON descriptor
    u32 count        number of tensors
    count times:
        u32 rank
        rank x u64   extents
        prod x f64   values, row-major
"""

import json
import struct

import numpy as np

from .errors import FormatError


def encode(magic, descriptor, arrays):
    text = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [magic, struct.pack("<I", len(text)), text, struct.pack("<I", len(arrays))]
    for arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated {what} at byte offset {self.pos}: need {n} bytes, "
                f"{len(self.buf) - self.pos} left"
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(magic, buf):
    """Inverse of :func:`encode`; returns ``(descriptor, arrays)``."""
    r = _Reader(bytes(buf))
    head = r.take(len(magic), "magic")
    if head != magic:
        raise FormatError(f"bad magic {head!r} at byte offset 0, expected {magic!r}")
    (n,) = r.unpack("<I", "descriptor length")
    start = r.pos
    try:
        descriptor = json.loads(r.take(n, "descriptor").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable descriptor at byte offset {start}: {exc}") from None
    (count,) = r.unpack("<I", "tensor count")
    arrays = []
    for i in range(count):
        (rank,) = r.unpack("<I", f"rank of tensor {i}")
        shape = r.unpack(f"<{rank}Q", f"extents of tensor {i}")
        size = int(np.prod(shape)) if rank else 1
        raw = r.take(8 * size, f"values of tensor {i}")
        arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes at byte offset {r.pos}")
    return descriptor, arrays


def save(path, magic, descriptor, arrays):
    with open(path, "wb") as fh:
        fh.write(encode(magic, descriptor, arrays))


def load(path, magic):
    with open(path, "rb") as fh:
        return decode(magic, fh.read())
