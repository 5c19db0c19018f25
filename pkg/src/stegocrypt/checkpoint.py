"""Bit-exact checkpoint serialization.

Layout: magic b"SGN1", little-endian u32 tensor count, then per tensor a
little-endian u16 name length, the UTF-8 name, a u8 rank, little-endian u32
extents, and the raw little-endian float32 values. A little-endian u64 step
counter closes the file. Optimizer moments ride along as extra tensors named
"adam.p.<param>" / "adam.q.<param>" and are skipped when a checkpoint is
loaded for inference only.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .network import ParameterSet
from .optim import AdamState

__all__ = ["serialize_checkpoint", "deserialize_checkpoint",
           "restore_parameters", "restore_adam_state"]

MAGIC = b"SGN1"


def _pack_tensor(name: str, data: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    arr = np.ascontiguousarray(data, dtype="<f4")
    parts = [struct.pack("<H", len(encoded)), encoded, struct.pack("<B", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(arr.tobytes())
    return b"".join(parts)


def serialize_checkpoint(params: ParameterSet, step: int = 0,
                         adam_state: AdamState | None = None) -> bytes:
    """Serialize parameters (and optionally Adam moments) to bytes."""
    entries = [(name, t.data) for name, t in params.items()]
    if adam_state is not None:
        entries += [(f"adam.p.{name}", adam_state.p[name]) for name in params.names()]
        entries += [(f"adam.q.{name}", adam_state.q[name]) for name in params.names()]
        step = adam_state.t
    blob = [MAGIC, struct.pack("<I", len(entries))]
    blob += [_pack_tensor(name, data) for name, data in entries]
    blob.append(struct.pack("<Q", step))
    return b"".join(blob)


def deserialize_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], int]:
    """Parse checkpoint bytes into an ordered name->float32 array map + step."""
    if data[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}, expected {MAGIC!r}")
    pos = 4
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            raw = data[pos:pos + 4 * n]
            if len(raw) < 4 * n:
                raise FormatError(f"truncated tensor {name!r} at byte {pos}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            pos += 4 * n
        (step,) = struct.unpack_from("<Q", data, pos)
        pos += 8
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint at byte {pos}: {exc}") from None
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after step counter")
    return tensors, step


def restore_parameters(params: ParameterSet, tensors: dict[str, np.ndarray]) -> None:
    """Copy stored values into an existing parameter set, shape-checked."""
    for name, tensor in params.items():
        if name not in tensors:
            raise FormatError(f"checkpoint is missing parameter {name!r}")
        stored = tensors[name]
        if stored.shape != tensor.data.shape:
            raise FormatError(f"parameter {name!r} has shape {stored.shape}, "
                              f"expected {tensor.data.shape}")
        tensor.data = stored.astype(tensor.data.dtype)


def restore_adam_state(state: AdamState, tensors: dict[str, np.ndarray], step: int) -> None:
    for name in list(state.p):
        p_key, q_key = f"adam.p.{name}", f"adam.q.{name}"
        if p_key not in tensors or q_key not in tensors:
            raise FormatError(f"checkpoint has no optimizer moments for {name!r}")
        state.p[name] = tensors[p_key].astype(state.p[name].dtype)
        state.q[name] = tensors[q_key].astype(state.q[name].dtype)
    state.t = step
