"""Binary checkpoints: a flat list of (name, shape, float64 array) records.

Layout (all integers little-endian)::

    b"MOLKAN\\x00\\x01"  magic + format version
    u32                 record count
    per record:
        u16 name length, utf-8 name
        u8 ndim, u64 * ndim shape
        f64 * prod(shape) row-major data
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MOLKAN\x00\x01"


class CheckpointError(ValueError):
    pass


def to_bytes(state: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(state))]
    for name, arr in state.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def from_bytes(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (count,) = take("<I")
    state = {}
    for _ in range(count):
        (n,) = take("<H")
        name = bytes(take(f"<{n}s")[0]).decode("utf-8")
        (ndim,) = take("<B")
        shape = take(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        if pos + 8 * size > len(buf):
            raise CheckpointError(f"truncated data for {name!r}")
        state[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes")
    return state


def save_checkpoint(module_or_state, path) -> Path:
    state = module_or_state if isinstance(module_or_state, dict) else module_or_state.state_dict()
    path = Path(path)
    path.write_bytes(to_bytes(state))
    return path


def load_checkpoint(path, module=None) -> dict[str, np.ndarray]:
    state = from_bytes(Path(path).read_bytes())
    if module is not None:
        module.load_state_dict(state)
    return state
