"""LSR1 binary raster format plus sinogram/velocity-map file helpers.

Layout (little endian): magic ``LSR1``, dtype code (0 = f32, 1 = u8), 3 pad
bytes, nx u32, ny u32, cell_size f64, origin_x f64, origin_y f64, then the
row-major payload. A structured-text sidecar ``<path>.json`` carries stage
metadata. Round trips are bit-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fdtd import Sinogram, Waveform
from .geometry import ArrayGeometry
from .grid import RasterGrid
from .phantom import VelocityMap

MAGIC = b"LSR1"
_HEADER = struct.Struct("<4sB3xIIddd")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("uint8")}
_CODES = {np.dtype("float32"): 0, np.dtype("uint8"): 1}


@dataclass
class RasterData:
    array: np.ndarray
    grid: RasterGrid
    meta: dict


def save_raster(path, array: np.ndarray, grid: RasterGrid,
                meta: dict | None = None) -> None:
    """Write an LSR1 raster (float32 or uint8) plus its JSON sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _CODES:
        raise FormatError(f"LSR1 stores f32 or u8 payloads, got {arr.dtype}")
    if arr.shape != grid.shape:
        raise FormatError(f"array shape {arr.shape} does not match grid {grid.shape}")
    header = _HEADER.pack(MAGIC, _CODES[arr.dtype], grid.nx, grid.ny,
                          grid.cell_size, grid.origin[0], grid.origin[1])
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    path.write_bytes(header + payload)
    sidecar = path.with_name(path.name + ".json")
    if meta is not None:
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    elif sidecar.exists():
        sidecar.unlink()


def load_raster(path) -> RasterData:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, code, nx, ny, cell, ox, oy = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dtype = _DTYPES[code]
    expect = _HEADER.size + nx * ny * dtype.itemsize
    if len(blob) != expect:
        raise FormatError(f"{path}: payload size {len(blob) - _HEADER.size} "
                          f"does not match header ({nx} x {ny} {dtype})")
    arr = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size).reshape(ny, nx)
    grid = RasterGrid(nx=nx, ny=ny, cell_size=cell, origin=(ox, oy))
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return RasterData(array=arr.copy(), grid=grid, meta=meta)


def to_u8(values: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] image to uint8 grayscale (1.0 -> 255)."""
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# sinograms / velocity maps on top of LSR1
# ---------------------------------------------------------------------------

def _geometry_meta(geom: ArrayGeometry) -> dict:
    return {"n_elements": geom.n_elements, "ring_radius": geom.ring_radius,
            "center": list(geom.center), "tx_rx_spacing": geom.tx_rx_spacing}


def _geometry_from_meta(meta: dict) -> ArrayGeometry:
    return ArrayGeometry(n_elements=int(meta["n_elements"]),
                         ring_radius=float(meta["ring_radius"]),
                         center=tuple(meta["center"]),
                         tx_rx_spacing=float(meta["tx_rx_spacing"]))


def save_sinogram(path, sino: Sinogram) -> None:
    """Sinogram as an (M, n_samples) f32 raster; timing/geometry in the sidecar."""
    grid = RasterGrid(nx=sino.data.shape[1], ny=sino.n_elements,
                      cell_size=sino.dt, origin=(sino.t0, 0.0))
    meta = {
        "stage": "sinogram",
        "dt": sino.dt,
        "t0": sino.t0,
        "scene_id": sino.scene_id,
        "calibrated": sino.calibrated,
        "geometry": _geometry_meta(sino.geometry),
    }
    if sino.waveform is not None:
        meta["waveform"] = {"kind": sino.waveform.kind, "f_c": sino.waveform.f_c,
                            "amplitude": sino.waveform.amplitude,
                            "delay": sino.waveform.nominal_delay()}
    save_raster(path, sino.data.astype(np.float32), grid, meta)


def load_sinogram(path) -> Sinogram:
    rd = load_raster(path)
    meta = rd.meta
    if meta.get("stage") != "sinogram":
        raise FormatError(f"{path}: not a sinogram raster")
    wf = None
    if "waveform" in meta:
        w = meta["waveform"]
        wf = Waveform(f_c=float(w["f_c"]), amplitude=float(w["amplitude"]),
                      delay=float(w["delay"]), kind=w["kind"])
    return Sinogram(data=rd.array.astype(float), dt=float(meta["dt"]),
                    t0=float(meta["t0"]), geometry=_geometry_from_meta(meta["geometry"]),
                    scene_id=meta.get("scene_id", ""),
                    calibrated=bool(meta.get("calibrated", False)), waveform=wf)


def save_velocity_map(path, vmap: VelocityMap, meta: dict | None = None) -> None:
    m = {"stage": "velocity_map", "eps_e": vmap.eps_e}
    if meta:
        m.update(meta)
    save_raster(path, vmap.speeds.astype(np.float32), vmap.grid, m)


def load_velocity_map(path) -> VelocityMap:
    rd = load_raster(path)
    if rd.meta.get("stage") != "velocity_map":
        raise FormatError(f"{path}: not a velocity-map raster")
    return VelocityMap(grid=rd.grid, speeds=rd.array.astype(float),
                       eps_e=float(rd.meta["eps_e"]))
