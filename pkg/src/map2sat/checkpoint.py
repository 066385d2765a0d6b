"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   4 bytes  b"CGAN"
    version u32      currently 1
    step    u64      training steps completed
    rngblk  u32 len + payload; v1 payload is u64 base seed
    records repeated until 4 bytes before EOF:
        u16 name length, name (utf-8), u8 rank (always 4), u32 dims x rank,
        float32 little-endian payload (product of dims)
    crc32   u32      zlib CRC-32 of every preceding byte

Record names are namespaced: ``p/<param>`` for values, ``m/<param>`` and
``v/<param>`` for Adam moments, ``t/gen`` and ``t/disc`` for the step
counters (stored as 1x1x1x1 tensors; exact below 2**24).

The CRC is verified before any record is parsed, so a corrupted file
never yields partial state. Writes go through a temp file and rename.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"CGAN"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointIntegrityError(CheckpointError):
    """Truncated file or CRC mismatch."""


@dataclass
class Checkpoint:
    step: int
    seed: int
    tensors: dict[str, np.ndarray]


def _pack_record(name: str, arr: np.ndarray) -> bytes:
    if arr.ndim != 4:
        raise ValueError(f"record {name!r} must be rank 4, got {arr.ndim}")
    nb = name.encode("utf-8")
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<B", 4)
    head += struct.pack("<4I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return head + payload


def save_checkpoint(path: str | os.PathLike, step: int, seed: int,
                    tensors: dict[str, np.ndarray]) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += struct.pack("<Q", step)
    rng_payload = struct.pack("<Q", seed)
    blob += struct.pack("<I", len(rng_payload)) + rng_payload
    for name, arr in tensors.items():
        blob += _pack_record(name, arr)
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))

    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 4:
        raise CheckpointIntegrityError(f"{path}: truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointMagicError(f"{path}: bad magic {blob[:4]!r}")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    if len(blob) < 4 + 4 + 8 + 4 + 4:
        raise CheckpointIntegrityError(f"{path}: truncated checkpoint")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointIntegrityError(f"{path}: CRC mismatch, file is corrupted")

    off = 8
    step = struct.unpack_from("<Q", blob, off)[0]
    off += 8
    rng_len = struct.unpack_from("<I", blob, off)[0]
    off += 4
    if rng_len != 8:
        raise CheckpointIntegrityError(f"{path}: unexpected rng block length {rng_len}")
    seed = struct.unpack_from("<Q", blob, off)[0]
    off += rng_len

    end = len(blob) - 4
    tensors: dict[str, np.ndarray] = {}
    while off < end:
        try:
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            if rank != 4:
                raise CheckpointIntegrityError(f"{path}: record {name!r} rank {rank}")
            dims = struct.unpack_from("<4I", blob, off)
            off += 16
            count = int(np.prod(dims, dtype=np.int64))
            raw = blob[off:off + 4 * count]
            if len(raw) != 4 * count:
                raise CheckpointIntegrityError(f"{path}: record {name!r} truncated")
            off += 4 * count
        except struct.error as exc:
            raise CheckpointIntegrityError(f"{path}: malformed record ({exc})") from exc
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if off != end:
        raise CheckpointIntegrityError(f"{path}: trailing bytes after records")
    return Checkpoint(step=step, seed=seed, tensors=tensors)
