"""Raster geometry shared by tissue maps, velocity maps and images.

Arrays are indexed ``[iy, ix]`` (row = y). Cell ``(iy, ix)`` has its center at
``origin + ((ix + 0.5) * cell_size, (iy + 0.5) * cell_size)``; ``origin`` is the
lower-left corner of the covered domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCENE_EXTENT = 0.20  # m, side length of the standard square scene domain
IMAGE_SIZE = 256     # pixels per side of the standard output image


@dataclass(frozen=True)
class RasterGrid:
    nx: int
    ny: int
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0 or self.cell_size <= 0:
            raise ValueError("grid dimensions and cell size must be positive")

    @classmethod
    def square(cls, n: int, extent: float = SCENE_EXTENT,
               center: tuple[float, float] = (0.0, 0.0)) -> "RasterGrid":
        """Square grid of ``n`` x ``n`` cells covering ``extent`` x ``extent`` m."""
        h = extent / n
        return cls(nx=n, ny=n, cell_size=h,
                   origin=(center[0] - extent / 2.0, center[1] - extent / 2.0))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def width(self) -> float:
        return self.nx * self.cell_size

    @property
    def height(self) -> float:
        return self.ny * self.cell_size

    def xs(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_size

    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_size

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) meshgrids of cell-center coordinates, shape ``(ny, nx)``."""
        return np.meshgrid(self.xs(), self.ys())

    def contains(self, x: float, y: float) -> bool:
        x0, y0 = self.origin
        return x0 <= x <= x0 + self.width and y0 <= y <= y0 + self.height

    def nearest_cell(self, x: float, y: float) -> tuple[int, int]:
        """Index ``(iy, ix)`` of the cell whose center is closest to ``(x, y)``."""
        ix = int(np.clip(np.floor((x - self.origin[0]) / self.cell_size), 0, self.nx - 1))
        iy = int(np.clip(np.floor((y - self.origin[1]) / self.cell_size), 0, self.ny - 1))
        return iy, ix

    def cell_center(self, iy: int, ix: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.cell_size,
                self.origin[1] + (iy + 0.5) * self.cell_size)

    def is_square_scene(self, extent: float = SCENE_EXTENT, rtol: float = 1e-9) -> bool:
        return (np.isclose(self.width, extent, rtol=rtol)
                and np.isclose(self.height, extent, rtol=rtol))


def scene_grid(cell_size: float = 1e-3) -> RasterGrid:
    """Standard centered simulation grid covering the 20 cm scene."""
    n = int(round(SCENE_EXTENT / cell_size))
    if not np.isclose(n * cell_size, SCENE_EXTENT, rtol=1e-9):
        raise ValueError(f"cell size {cell_size} does not tile the {SCENE_EXTENT} m scene")
    return RasterGrid.square(n, SCENE_EXTENT)


def image_grid() -> RasterGrid:
    """Standard 256 x 256 output grid (0.78125 mm pixels over the 20 cm scene)."""
    return RasterGrid.square(IMAGE_SIZE, SCENE_EXTENT)
