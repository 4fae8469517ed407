"""Circular monostatic array geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import RasterGrid


@dataclass(frozen=True)
class ArrayGeometry:
    """M transceiver elements equally spaced on a ring, covering 360 degrees.

    Element ``i`` sits at angle ``2*pi*i/M``; its transmitter and receiver are
    offset by ``d/2`` on either side along the ring tangent.
    """

    n_elements: int
    ring_radius: float                    # m
    center: tuple[float, float] = (0.0, 0.0)
    tx_rx_spacing: float = 4e-3           # m, tangential TX-RX separation

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("need at least one element")
        if self.ring_radius <= 0:
            raise ValueError("ring radius must be positive")
        if self.tx_rx_spacing < 0:
            raise ValueError("TX-RX spacing must be >= 0")

    def angle(self, i: int) -> float:
        return 2.0 * np.pi * i / self.n_elements

    def element_position(self, i: int) -> tuple[float, float]:
        a = self.angle(i)
        return (self.center[0] + self.ring_radius * np.cos(a),
                self.center[1] + self.ring_radius * np.sin(a))

    def tx_position(self, i: int) -> tuple[float, float]:
        a = self.angle(i)
        ex, ey = self.element_position(i)
        # tangent (-sin, cos); TX trails, RX leads
        return (ex + 0.5 * self.tx_rx_spacing * np.sin(a),
                ey - 0.5 * self.tx_rx_spacing * np.cos(a))

    def rx_position(self, i: int) -> tuple[float, float]:
        a = self.angle(i)
        ex, ey = self.element_position(i)
        return (ex - 0.5 * self.tx_rx_spacing * np.sin(a),
                ey + 0.5 * self.tx_rx_spacing * np.cos(a))

    def validate_inside(self, grid: RasterGrid, clearance: float = 0.0) -> None:
        """Every TX/RX must sit inside ``grid`` with at least ``clearance`` margin."""
        x0, y0 = grid.origin
        x1, y1 = x0 + grid.width, y0 + grid.height
        for i in range(self.n_elements):
            for x, y in (self.tx_position(i), self.rx_position(i)):
                if not (x0 + clearance <= x <= x1 - clearance
                        and y0 + clearance <= y <= y1 - clearance):
                    raise ValueError(
                        f"element {i} at ({x:.4f}, {y:.4f}) m violates the "
                        f"{clearance * 1e3:.1f} mm boundary clearance")
