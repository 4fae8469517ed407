"""Time-domain backprojection onto the 256 x 256 image raster.

Each pixel sums, over all array elements, the calibrated trace sampled at that
pixel's two-way travel time. Times come either from straight-ray ToF at a
single effective permittivity or from per-element eikonal travel-time maps
(contour-guided imaging). Signed amplitudes are accumulated in element order;
no envelope detection is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import C0
from .eikonal import TravelTimeMap
from .errors import ShapeMismatchError
from .fdtd import Sinogram, Trace
from .geometry import ArrayGeometry
from .grid import IMAGE_SIZE, RasterGrid, image_grid


@dataclass
class BpImage:
    pixels: np.ndarray                   # (256, 256)
    grid: RasterGrid
    normalization: str = "raw"           # "raw" | "minmax"

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=float)
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"backprojected images are {IMAGE_SIZE} x {IMAGE_SIZE}, "
                             f"got {self.pixels.shape}")
        if self.pixels.shape != self.grid.shape:
            raise ValueError("pixel raster does not match grid shape")
        if self.normalization not in ("raw", "minmax"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def argmax_position(self) -> tuple[float, float]:
        iy, ix = np.unravel_index(int(np.argmax(self.pixels)), self.pixels.shape)
        return self.grid.cell_center(iy, ix)


def tof_two_way_time(tx, rx, r, eps_e: float) -> float:
    """Straight-ray two-way time (|T - r| + |R - r|) * sqrt(eps_e) / c."""
    if eps_e < 1.0:
        raise ValueError("eps_e must be >= 1")
    d = np.hypot(tx[0] - r[0], tx[1] - r[1]) + np.hypot(rx[0] - r[0], rx[1] - r[1])
    return float(d * np.sqrt(eps_e) / C0)


def interpolate_sample(trace: Trace, t) -> np.ndarray | float:
    """Linear interpolation of the trace at time(s) ``t``; 0 outside the record."""
    times = np.asarray(t, dtype=float)
    out = _sample_trace(trace.samples, trace.dt, trace.t0, np.atleast_1d(times))
    return float(out[0]) if times.ndim == 0 else out.reshape(times.shape)


def _sample_trace(samples: np.ndarray, dt: float, t0: float,
                  t: np.ndarray) -> np.ndarray:
    """Vectorized linear interpolation with zero fill outside [t0, t_end]."""
    n = len(samples)
    pos = (t.ravel() - t0) / dt
    k = np.floor(pos).astype(np.int64)
    frac = pos - k
    valid = (pos >= 0.0) & (pos <= n - 1)
    k = np.clip(k, 0, n - 2)
    vals = samples[k] * (1.0 - frac) + samples[k + 1] * frac
    # the last node is exactly representable by the k = n-2 bracket
    return np.where(valid, vals, 0.0)


def backproject_tof(sino: Sinogram, geom: ArrayGeometry, eps_e: float,
                    grid: RasterGrid | None = None) -> BpImage:
    """Homogeneous-medium backprojection at effective permittivity ``eps_e``."""
    if eps_e < 1.0:
        raise ValueError("eps_e must be >= 1")
    if geom.n_elements != sino.n_elements:
        raise ShapeMismatchError("geometry element count differs from sinogram")
    grid = grid or image_grid()
    X, Y = grid.centers()
    slown = np.sqrt(eps_e) / C0
    acc = np.zeros(grid.shape)
    for i in range(sino.n_elements):
        tx = geom.tx_position(i)
        rx = geom.rx_position(i)
        t = (np.hypot(X - tx[0], Y - tx[1]) + np.hypot(X - rx[0], Y - rx[1])) * slown
        acc += _sample_trace(sino.data[i], sino.dt, sino.t0, t.ravel()).reshape(grid.shape)
    return BpImage(pixels=acc, grid=grid, normalization="raw")


def backproject_cgli(sino: Sinogram, ttmaps: list[TravelTimeMap],
                     grid: RasterGrid | None = None) -> BpImage:
    """Backprojection with per-element two-way eikonal travel-time maps."""
    if len(ttmaps) != sino.n_elements:
        raise ShapeMismatchError(
            f"{len(ttmaps)} travel-time maps for {sino.n_elements} elements")
    grid = grid or image_grid()
    acc = np.zeros(grid.shape)
    for i, tt in enumerate(ttmaps):
        if tt.grid != grid:
            raise ShapeMismatchError(f"travel-time map {i} not on the image grid")
        acc += _sample_trace(sino.data[i], sino.dt, sino.t0,
                             tt.times.ravel()).reshape(grid.shape)
    return BpImage(pixels=acc, grid=grid, normalization="raw")


def normalize_minmax(img: BpImage) -> BpImage:
    """Affine rescale to [0, 1]; a constant image maps to all zeros."""
    lo = float(img.pixels.min())
    hi = float(img.pixels.max())
    if hi == lo:
        pixels = np.zeros_like(img.pixels)
    else:
        pixels = (img.pixels - lo) / (hi - lo)
    return BpImage(pixels=pixels, grid=img.grid, normalization="minmax")
