"""Reader/writer for the LSR1 raster format used by the imaging pipeline.

Independent implementation of the interchange format: magic ``LSR1``, dtype
code byte (0 = f32, 1 = u8), 3 pad bytes, nx/ny u32, cell_size and origin as
f64 (all little endian), row-major payload, optional JSON sidecar at
``<path>.json``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sB3xIIddd")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("uint8")}


@dataclass
class Raster:
    array: np.ndarray
    cell_size: float
    origin: tuple[float, float]
    meta: dict


def read_raster(path) -> Raster:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated LSR1 header")
    magic, code, nx, ny, cell, ox, oy = _HEADER.unpack_from(blob)
    if magic != b"LSR1":
        raise ValueError(f"{path}: not an LSR1 raster")
    dtype = _DTYPES.get(code)
    if dtype is None:
        raise ValueError(f"{path}: unknown dtype code {code}")
    if len(blob) != _HEADER.size + nx * ny * dtype.itemsize:
        raise ValueError(f"{path}: payload size mismatch")
    arr = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size).reshape(ny, nx).copy()
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return Raster(array=arr, cell_size=cell, origin=(ox, oy), meta=meta)


def write_raster(path, array: np.ndarray, cell_size: float,
                 origin: tuple[float, float], meta: dict | None = None) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(array)
    if arr.dtype == np.float32:
        code = 0
    elif arr.dtype == np.uint8:
        code = 1
    else:
        raise ValueError(f"LSR1 stores f32 or u8, got {arr.dtype}")
    ny, nx = arr.shape
    header = _HEADER.pack(b"LSR1", code, nx, ny, cell_size, origin[0], origin[1])
    path.write_bytes(header + arr.tobytes())
    if meta is not None:
        path.with_name(path.name + ".json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n")
