"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"USES"                       magic
    u16                           format version
    u32 + bytes                   JSON header: {"config": {...}, "train_state": {...} | null}
    u32                           tensor count
    per tensor:
        u16 + bytes               name (utf-8)
        u8                        dtype code (1 = float32, 2 = float64)
        u8                        ndim
        u32 * ndim                shape
        bytes                     payload, C order

Model parameters come first in creation order; optional extra tensors (the
optimizer moments saved for ``--resume``) follow under an ``optim.`` prefix.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from uses_se.config import UsesConfig
from uses_se.exceptions import CheckpointError, ConfigError
from uses_se.model.params import UsesModel, parameter_shapes
from uses_se.numerics.tensor import Array, Tensor
from uses_se.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"USES"
VERSION = 1
EXTRA_PREFIX = "optim."

_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    model: UsesModel
    train_state: dict[str, Any] | None = None
    extra: dict[str, Array] = field(default_factory=dict)


def _encode_tensor(name: str, data: Array) -> bytes:
    dtype = np.dtype(data.dtype).newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise CheckpointError(f"cannot store tensor '{name}' of dtype {data.dtype}")
    raw = name.encode("utf-8")
    header = struct.pack(f"<H{len(raw)}sBB", len(raw), raw, _DTYPE_CODES[dtype], data.ndim)
    dims = struct.pack(f"<{data.ndim}I", *data.shape)
    return header + dims + np.ascontiguousarray(data, dtype=dtype).tobytes()


def save_checkpoint(
    path: str | Path,
    model: UsesModel,
    train_state: dict[str, Any] | None = None,
    extra: dict[str, Array] | None = None,
) -> Path:
    """Write ``model`` (and optional trainer state) atomically to ``path``."""
    header = json.dumps(
        {"config": asdict(model.cfg), "train_state": train_state}, sort_keys=True
    ).encode("utf-8")
    tensors = [(name, t.data) for name, t in model.named_parameters()]
    tensors += [(EXTRA_PREFIX + name, arr) for name, arr in (extra or {}).items()]
    parts = [
        MAGIC,
        struct.pack("<HI", VERSION, len(header)),
        header,
        struct.pack("<I", len(tensors)),
    ]
    parts += [_encode_tensor(name, data) for name, data in tensors]
    out = atomic_write_bytes(path, b"".join(parts))
    logger.debug("saved checkpoint %s (%d tensors)", out, len(tensors))
    return out


class _Reader:
    def __init__(self, buf: bytes, path: Path) -> None:
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise CheckpointError(f"checkpoint {self.path} is truncated")
        chunk = self.buf[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path, expected: UsesConfig | None = None) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Args:
        path: Checkpoint file.
        expected: When given, the stored config must equal it.

    Raises:
        CheckpointError: On bad magic/version, truncation, or any mismatch
            between the stored config and the stored parameters.
    """
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    reader = _Reader(buf, path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path} is not a uses-se checkpoint (bad magic)")
    version, header_len = reader.unpack("<HI")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
        cfg = UsesConfig.from_dict(header["config"])
    except (ValueError, KeyError, ConfigError) as e:
        raise CheckpointError(f"checkpoint {path} has an invalid config record: {e}") from e
    if expected is not None and cfg != expected:
        raise CheckpointError(
            f"checkpoint config {asdict(cfg)} does not match expected {asdict(expected)}"
        )

    (count,) = reader.unpack("<I")
    tensors: dict[str, Array] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"tensor '{name}' has unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}I")
        dtype = _CODE_DTYPES[code]
        size = int(np.prod(shape)) * dtype.itemsize
        tensors[name] = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape).copy()
    if reader.pos != len(buf):
        raise CheckpointError(f"checkpoint {path} has {len(buf) - reader.pos} trailing bytes")

    params: dict[str, Tensor] = {}
    for name, shape, _ in parameter_shapes(cfg):
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing parameter '{name}'")
        data = tensors.pop(name)
        if data.shape != shape:
            raise CheckpointError(f"parameter '{name}' has shape {data.shape}, config needs {shape}")
        params[name] = Tensor(data.astype(data.dtype.newbyteorder("=")), requires_grad=True, name=name)
    extra = {k[len(EXTRA_PREFIX) :]: v for k, v in tensors.items() if k.startswith(EXTRA_PREFIX)}
    unexpected = sorted(k for k in tensors if not k.startswith(EXTRA_PREFIX))
    if unexpected:
        raise CheckpointError(f"checkpoint has unexpected parameter '{unexpected[0]}'")
    if len({t.dtype for t in params.values()}) > 1:
        raise CheckpointError("checkpoint mixes parameter dtypes")

    model = UsesModel(cfg)
    model.params.update(params)
    return Checkpoint(model, header.get("train_state"), extra)
