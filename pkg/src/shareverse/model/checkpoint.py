"""Checkpoint files: named tensors plus an echo of the config that produced them."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..config import Config, ConfigError, parse_config
from ..world.storage import (DataError, DataIOError, SizeMismatchError, decode_header,
                             encode_header)

CKPT_MAGIC = b"SVCKPT"
CKPT_VERSION = 1


class CheckpointMismatch(ConfigError):
    """Checkpoint config echo disagrees with the active configuration."""


def checkpoint_bytes(tensors: dict, config: Config) -> bytes:
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])  # ascontiguousarray would turn 0-d into 1-d
        if not arr.flags.c_contiguous:
            arr = arr.copy(order="C")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, encode_header(arr.dtype, arr.shape),
                  arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()]
    echo = config.to_text().encode("utf-8")
    parts += [struct.pack("<I", len(echo)), echo]
    return b"".join(parts)


def parse_checkpoint(buf: bytes, what: str = "checkpoint") -> tuple[dict, Config]:
    if buf[:6] != CKPT_MAGIC:
        raise DataError(f"{what}: bad magic {buf[:6]!r}")
    if len(buf) < 14:
        raise SizeMismatchError(f"{what}: header truncated")
    version, count = struct.unpack_from("<II", buf, 6)
    if version != CKPT_VERSION:
        raise DataError(f"{what}: unsupported checkpoint version {version}")
    pos, tensors = 14, {}
    for _ in range(count):
        if len(buf) < pos + 2:
            raise SizeMismatchError(f"{what}: truncated tensor entry")
        (n,) = struct.unpack_from("<H", buf, pos)
        name = buf[pos + 2:pos + 2 + n].decode("utf-8")
        dtype, shape, pos = decode_header(buf, pos + 2 + n, f"{what}:{name}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if len(buf) < pos + nbytes:
            raise SizeMismatchError(f"{what}:{name}: expected {nbytes} data bytes, "
                                    f"found {len(buf) - pos}")
        tensors[name] = np.frombuffer(buf, dtype.newbyteorder("<"), offset=pos,
                                      count=int(np.prod(shape))).astype(dtype).reshape(shape)
        pos += nbytes
    if len(buf) < pos + 4:
        raise SizeMismatchError(f"{what}: missing config echo")
    (n,) = struct.unpack_from("<I", buf, pos)
    if len(buf) != pos + 4 + n:
        raise SizeMismatchError(f"{what}: config echo expected {n} bytes, found {len(buf) - pos - 4}")
    config = parse_config(buf[pos + 4:].decode("utf-8"), f"{what} (config echo)")
    return tensors, config


def save_checkpoint_file(path, tensors: dict, config: Config) -> None:
    try:
        Path(path).write_bytes(checkpoint_bytes(tensors, config))
    except OSError as e:
        raise DataIOError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint_file(path, expect: Config | None = None, ignore=()) -> tuple[dict, Config]:
    """Read a checkpoint; if ``expect`` is given, refuse a differing config echo."""
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise DataIOError(f"cannot read checkpoint {path}: {e}") from e
    tensors, config = parse_checkpoint(buf, str(path))
    if expect is not None:
        bad = expect.diff(config, ignore=ignore)
        if bad:
            detail = ", ".join(f"{k} (checkpoint {config[k]!r}, active {expect[k]!r})" for k in bad)
            raise CheckpointMismatch(f"checkpoint {path} config mismatch: {detail}")
    return tensors, config
