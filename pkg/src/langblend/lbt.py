"""LBT1: a tiny self-describing binary tensor file.

Layout, all little-endian:
    bytes 0..3   magic b"LBT1"
    u32          rank
    rank * u32   dimension sizes
    payload      float32 values, row-major, exactly prod(dims) of them
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, IoError, ParseError

MAGIC = b"LBT1"
_MAX_RANK = 8


def write_tensor(path: str | Path, array) -> None:
    """Serialize a numeric array as float32. Parent directory must exist."""
    if np.asarray(array).ndim == 0:
        raise InvalidArgumentError("write_tensor: rank-0 arrays are not representable")
    arr = np.ascontiguousarray(np.asarray(array), dtype=np.float32)
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(arr.tobytes(order="C"))
    except OSError as e:
        raise IoError(f"cannot write tensor file {path}: {e}") from e


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an LBT1 file back as a float32 row-major array."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read tensor file {path}: {e}") from e

    p = str(path)
    if len(blob) < 8:
        raise ParseError("truncated header", path=p)
    if blob[:4] != MAGIC:
        raise ParseError(f"bad magic {blob[:4]!r}", path=p)
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank == 0 or rank > _MAX_RANK:
        raise ParseError(f"unreasonable rank {rank}", path=p)
    if len(blob) < 8 + 4 * rank:
        raise ParseError("truncated dimension list", path=p)
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    count = 1
    for d in dims:
        count *= d
    expected = 8 + 4 * rank + 4 * count
    if len(blob) != expected:
        raise ParseError(
            f"payload size mismatch: expected {expected} bytes, got {len(blob)}", path=p
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=8 + 4 * rank, count=count)
    return flat.reshape(dims).astype(np.float32, copy=True)
