"""File formats: the USBF tensor container, record sequences and PGM images.

Tensor layout (little-endian)::

    b"USBF" | u32 version | u32 ndim | ndim x u64 dims | float32 data, row-major

A record sequence is a u64 record count followed by that many tensors.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, UnsupportedVersion

MAGIC = b"USBF"
VERSION = 1
_HEAD = struct.Struct("<4sII")
_COUNT = struct.Struct("<Q")


def encode_tensor(array) -> bytes:
    a = np.asarray(array, dtype="<f4")
    dims = struct.pack(f"<{a.ndim}Q", *a.shape)
    return _HEAD.pack(MAGIC, VERSION, a.ndim) + dims + a.tobytes(order="C")


class _Cursor:
    def __init__(self, buf: bytes, offset: int = 0):
        self.buf = buf
        self.pos = offset

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {what}: need {n} bytes, "
                              f"{len(self.buf) - self.pos} left", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def tensor(self) -> np.ndarray:
        start = self.pos
        magic, version, ndim = _HEAD.unpack(self.take(_HEAD.size, "tensor header"))
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", start)
        if version != VERSION:
            raise UnsupportedVersion(f"unsupported container version {version}", start + 4)
        if ndim > 32:
            raise FormatError(f"implausible rank {ndim}", start + 8)
        dims = struct.unpack(f"<{ndim}Q", self.take(8 * ndim, "tensor dims"))
        count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        data = self.take(4 * count, "tensor data")
        return np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float32)

    def count(self) -> int:
        return _COUNT.unpack(self.take(_COUNT.size, "record count"))[0]


def decode_tensor(buf: bytes, offset: int = 0):
    """Decode one tensor at ``offset``; returns ``(array, next_offset)``."""
    cur = _Cursor(buf, offset)
    return cur.tensor(), cur.pos


def write_tensor(path, array):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf)
    out = cur.tensor()
    if cur.pos != len(buf):
        raise FormatError("trailing bytes after tensor", cur.pos)
    return out


def encode_records(arrays) -> bytes:
    arrays = list(arrays)
    return _COUNT.pack(len(arrays)) + b"".join(encode_tensor(a) for a in arrays)


def decode_records(buf: bytes, offset: int = 0):
    """Decode a record sequence; returns ``(list_of_arrays, next_offset)``."""
    cur = _Cursor(buf, offset)
    n = cur.count()
    out = [cur.tensor() for _ in range(n)]
    return out, cur.pos


def write_records(path, arrays):
    with open(path, "wb") as fh:
        fh.write(encode_records(arrays))


def read_records(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    out, pos = decode_records(buf)
    if pos != len(buf):
        raise FormatError("trailing bytes after record sequence", pos)
    return out


def write_pgm(path, image):
    """Binary 8-bit PGM of ``image`` (values in [0, 1], rows top to bottom)."""
    img = np.asarray(image, dtype=float)
    pix = np.clip(np.round(255.0 * img), 0, 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    parts = buf.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError("not a binary PGM", 0)
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    data = buf[len(buf) - w * h:]
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)
