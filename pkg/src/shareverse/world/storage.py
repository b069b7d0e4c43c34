"""Binary tensor files (.svt) and the clip dataset directory layout."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

SVT_MAGIC = b"SVTENSOR"
SVT_VERSION = 1
DTYPE_CODES = {np.dtype(np.uint8): 0, np.dtype(np.float32): 1, np.dtype(np.float64): 2}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


class DataError(Exception):
    """Base class for dataset and file-format failures."""


class DataIOError(DataError):
    pass


class BadMagicError(DataError):
    pass


class SizeMismatchError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


def encode_header(dtype, shape) -> bytes:
    dtype = np.dtype(dtype)
    if dtype not in DTYPE_CODES:
        raise TypeError(f"unsupported tensor dtype {dtype}")
    return (struct.pack("<BB", DTYPE_CODES[dtype], len(shape))
            + b"".join(struct.pack("<Q", int(n)) for n in shape))


def decode_header(buf: bytes, pos: int, what: str) -> tuple[np.dtype, tuple, int]:
    """Parse dtype/ndim/extents at ``pos``; returns (dtype, shape, new_pos)."""
    if len(buf) < pos + 2:
        raise SizeMismatchError(f"{what}: header truncated")
    code, ndim = struct.unpack_from("<BB", buf, pos)
    if code not in CODE_DTYPES:
        raise DataError(f"{what}: unknown dtype code {code}")
    pos += 2
    if len(buf) < pos + 8 * ndim:
        raise SizeMismatchError(f"{what}: extents truncated")
    shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
    return CODE_DTYPES[code], tuple(int(n) for n in shape), pos + 8 * ndim


def svt_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)  # ascontiguousarray would turn 0-d into 1-d
    if not arr.flags.c_contiguous:
        arr = arr.copy(order="C")
    data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    return SVT_MAGIC + struct.pack("<I", SVT_VERSION) + encode_header(arr.dtype, arr.shape) + data


def parse_svt(buf: bytes, what: str = "tensor") -> np.ndarray:
    if buf[:8] != SVT_MAGIC:
        raise BadMagicError(f"{what}: bad magic {buf[:8]!r}")
    if len(buf) < 12:
        raise SizeMismatchError(f"{what}: header truncated")
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != SVT_VERSION:
        raise DataError(f"{what}: unsupported version {version}")
    dtype, shape, pos = decode_header(buf, 12, what)
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    actual = len(buf) - pos
    if actual != expected:
        raise SizeMismatchError(
            f"{what}: size mismatch, expected {expected} data bytes, found {actual}")
    return np.frombuffer(buf, dtype=dtype.newbyteorder("<"), offset=pos).astype(dtype).reshape(shape)


def write_svt(path, arr: np.ndarray) -> None:
    try:
        Path(path).write_bytes(svt_bytes(arr))
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}") from e


def read_svt(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}") from e
    return parse_svt(buf, str(path))


def read_keyvalue(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}") from e
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: malformed line {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
