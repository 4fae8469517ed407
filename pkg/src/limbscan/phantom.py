"""Layered limb phantoms, surface contours, and contour-derived velocity maps.

A phantom is a stack of concentric (slightly elliptical) tissue layers on the
20 cm scene grid: bone, muscle, fat, skin, air, with an optional circular
body-fluid inclusion embedded in the fat layer. The surface contour is traced
from the air/skin boundary and drives a two-valued wave-speed map: ``c`` in
air, ``c / sqrt(eps_e)`` inside the limb.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from skimage import measure

from .constants import C0
from .errors import (
    DegenerateContourError,
    EmptySceneError,
    SpecGeometryError,
)
from .grid import RasterGrid


class TissueLabel(enum.IntEnum):
    AIR = 0
    SKIN = 1
    FAT = 2
    MUSCLE = 3
    BONE = 4
    FLUID = 5
    PEC = 6  # calibration scenes only


@dataclass(frozen=True)
class DielectricProps:
    eps_r: float   # relative permittivity, >= 1 for non-PEC media
    sigma: float   # conductivity, S/m

    def __post_init__(self):
        if self.eps_r < 1.0:
            raise ValueError(f"eps_r must be >= 1, got {self.eps_r}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


# Single-frequency (1.5 GHz) properties with representative tissue contrasts.
# Body fluid is deliberately the most polarizable tissue so it contrasts
# against the fat layer it sits in. Values are overridable per scene file.
TISSUE_PROPERTIES: dict[TissueLabel, DielectricProps] = {
    TissueLabel.AIR: DielectricProps(eps_r=1.0, sigma=0.0),
    TissueLabel.SKIN: DielectricProps(eps_r=39.0, sigma=0.90),
    TissueLabel.FAT: DielectricProps(eps_r=5.3, sigma=0.05),
    TissueLabel.MUSCLE: DielectricProps(eps_r=54.0, sigma=1.20),
    TissueLabel.BONE: DielectricProps(eps_r=12.0, sigma=0.16),
    TissueLabel.FLUID: DielectricProps(eps_r=69.0, sigma=1.60),
}


def tissue_properties(label: TissueLabel) -> DielectricProps:
    """Dielectric properties of a tissue. PEC has no finite properties."""
    if label == TissueLabel.PEC:
        raise ValueError("PEC is not a dielectric; handled specially by the solver")
    return TISSUE_PROPERTIES[TissueLabel(label)]


# ---------------------------------------------------------------------------
# Phantom specification
# ---------------------------------------------------------------------------

N_BASE_PHANTOMS = 10

# Per-base-id nominal dimensions (m): outer radius, fat thickness, bone radius.
# ids 0-4 are upper-limb profiles, 5-9 lower-limb; skin is 1.5 mm throughout
# and the remainder between bone and fat is muscle.
_BASE_DIMENSIONS = {
    0: ("upper", 40e-3, 9.0e-3, 10e-3),
    1: ("upper", 44e-3, 10.5e-3, 11e-3),
    2: ("upper", 48e-3, 12.0e-3, 12e-3),
    3: ("upper", 52e-3, 13.0e-3, 12e-3),
    4: ("upper", 55e-3, 14.0e-3, 12e-3),
    5: ("lower", 28e-3, 7.5e-3, 8e-3),
    6: ("lower", 31e-3, 8.0e-3, 8e-3),
    7: ("lower", 34e-3, 8.5e-3, 9e-3),
    8: ("lower", 37e-3, 9.0e-3, 10e-3),
    9: ("lower", 40e-3, 10.0e-3, 10e-3),
}

_SKIN_THICKNESS = 1.5e-3
_ARRAY_CLEARANCE = 20e-3  # limb must leave this much room to the ring/boundary


def axis_ratio(base_id: int) -> float:
    """Cross-section ellipticity of a base phantom, fixed by its id (0.85-1.0)."""
    r = np.random.default_rng(0x11B5 + base_id)
    return 0.85 + 0.15 * float(r.random())


@dataclass
class PhantomSpec:
    base_id: int
    limb_kind: str                       # "upper" | "lower"
    outer_radius: float                  # m, skin outer boundary (long axis)
    layer_thicknesses: dict[TissueLabel, float] = field(default_factory=dict)
    fluid_radius: float = 0.0            # m, 0 means no inclusion
    fluid_angle: float = 0.0             # rad, angular position of the inclusion
    fluid_depth: float = 0.0             # m, radial offset of its center into the fat layer
    center: tuple[float, float] = (0.0, 0.0)
    rng_seed: int = 0

    @classmethod
    def from_base(cls, base_id: int, fluid_radius: float = 0.0,
                  fluid_angle: float = 0.0, fluid_depth: float = 0.0,
                  rng_seed: int = 0) -> "PhantomSpec":
        kind, outer, fat, bone = _BASE_DIMENSIONS[base_id]
        return cls(
            base_id=base_id, limb_kind=kind, outer_radius=outer,
            layer_thicknesses={TissueLabel.SKIN: _SKIN_THICKNESS,
                               TissueLabel.FAT: fat,
                               TissueLabel.BONE: bone},
            fluid_radius=fluid_radius, fluid_angle=fluid_angle,
            fluid_depth=fluid_depth, rng_seed=rng_seed,
        )

    # Nominal layer boundaries measured on the long axis (m).
    @property
    def skin_outer(self) -> float:
        return self.outer_radius

    @property
    def fat_outer(self) -> float:
        return self.outer_radius - self.layer_thicknesses[TissueLabel.SKIN]

    @property
    def fat_inner(self) -> float:
        return self.fat_outer - self.layer_thicknesses[TissueLabel.FAT]

    @property
    def bone_radius(self) -> float:
        return self.layer_thicknesses[TissueLabel.BONE]

    @property
    def axis_ratio(self) -> float:
        return axis_ratio(self.base_id)

    def fluid_center(self) -> tuple[float, float]:
        """Center of the fluid disc in scene coordinates."""
        rho = self.fat_outer - self.fluid_depth
        return (self.center[0] + rho * np.cos(self.fluid_angle),
                self.center[1] + rho * self.axis_ratio * np.sin(self.fluid_angle))

    def nominal_radius(self, x, y):
        """Elliptical radial coordinate: equals ``outer_radius`` on the surface."""
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        return np.sqrt(dx * dx + (dy / self.axis_ratio) ** 2)

    def validate(self, grid: RasterGrid | None = None) -> None:
        if not (0 <= self.base_id < N_BASE_PHANTOMS):
            raise SpecGeometryError(f"base_id {self.base_id} outside [0, {N_BASE_PHANTOMS - 1}]")
        if self.limb_kind not in ("upper", "lower"):
            raise SpecGeometryError(f"unknown limb kind {self.limb_kind!r}")
        for lbl in (TissueLabel.SKIN, TissueLabel.FAT, TissueLabel.BONE):
            if self.layer_thicknesses.get(lbl, 0.0) <= 0.0:
                raise SpecGeometryError(f"missing or non-positive thickness for {lbl.name}")
        if not (self.bone_radius < self.fat_inner < self.fat_outer < self.skin_outer):
            raise SpecGeometryError(
                "layer radii must nest strictly: bone < muscle/fat boundary "
                f"< fat/skin boundary < outer (got {self.bone_radius:.4g}, "
                f"{self.fat_inner:.4g}, {self.fat_outer:.4g}, {self.skin_outer:.4g})")
        if self.fluid_radius < 0.0:
            raise SpecGeometryError("fluid_radius must be >= 0")
        if self.fluid_radius > 0.0:
            # The disc boundary must stay strictly inside the fat annulus.
            theta = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
            cx, cy = self.fluid_center()
            bx = cx + self.fluid_radius * np.cos(theta)
            by = cy + self.fluid_radius * np.sin(theta)
            rho = self.nominal_radius(bx, by)
            if rho.max() >= self.fat_outer or rho.min() <= self.fat_inner:
                raise SpecGeometryError(
                    f"fluid disc (r={self.fluid_radius * 1e3:.2f} mm at angle "
                    f"{self.fluid_angle:.2f}) leaves the fat annulus")
        if grid is not None:
            half = min(grid.width, grid.height) / 2.0
            if self.outer_radius + _ARRAY_CLEARANCE > half:
                raise SpecGeometryError(
                    f"outer radius {self.outer_radius:.3f} m plus array clearance "
                    f"exceeds the {grid.width:.2f} m domain")


@dataclass
class TissueMap:
    grid: RasterGrid
    labels: np.ndarray                   # (ny, nx) uint8 of TissueLabel values
    props: dict[TissueLabel, DielectricProps]

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.labels.shape != self.grid.shape:
            raise ValueError("label raster does not match grid shape")
        present = set(np.unique(self.labels).tolist())
        known = {int(l) for l in TissueLabel}
        if not present <= known:
            raise ValueError(f"unknown tissue codes present: {sorted(present - known)}")
        missing = {TissueLabel(p) for p in present
                   if p != TissueLabel.PEC and TissueLabel(p) not in self.props}
        if missing:
            raise ValueError(f"props missing for labels: {sorted(l.name for l in missing)}")

    def eps_r(self) -> np.ndarray:
        """Per-cell relative permittivity (PEC cells report 1; see pec_mask)."""
        out = np.ones(self.grid.shape)
        for lbl, p in self.props.items():
            out[self.labels == lbl] = p.eps_r
        out[self.labels == TissueLabel.PEC] = 1.0
        return out

    def sigma(self) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        for lbl, p in self.props.items():
            out[self.labels == lbl] = p.sigma
        out[self.labels == TissueLabel.PEC] = 0.0
        return out

    def pec_mask(self) -> np.ndarray:
        return self.labels == TissueLabel.PEC

    def non_air_mask(self) -> np.ndarray:
        return self.labels != TissueLabel.AIR


def build_phantom(spec: PhantomSpec, grid: RasterGrid) -> TissueMap:
    """Rasterize a layered limb phantom onto ``grid``.

    Cells are classified by their center: concentric elliptical shells in the
    order air / skin / fat / muscle / bone, then the fluid disc (if any)
    overwrites fat cells only. Deterministic for a fixed spec.
    """
    spec.validate(grid)
    X, Y = grid.centers()
    rho = spec.nominal_radius(X, Y)

    labels = np.full(grid.shape, TissueLabel.AIR, dtype=np.uint8)
    labels[rho <= spec.skin_outer] = TissueLabel.SKIN
    labels[rho <= spec.fat_outer] = TissueLabel.FAT
    labels[rho <= spec.fat_inner] = TissueLabel.MUSCLE
    labels[rho <= spec.bone_radius] = TissueLabel.BONE

    if spec.fluid_radius > 0.0:
        cx, cy = spec.fluid_center()
        in_disc = (X - cx) ** 2 + (Y - cy) ** 2 <= spec.fluid_radius ** 2
        labels[in_disc & (labels == TissueLabel.FAT)] = TissueLabel.FLUID

    return TissueMap(grid=grid, labels=labels, props=dict(TISSUE_PROPERTIES))


def pec_cylinder_scene(radius: float, grid: RasterGrid,
                       center: tuple[float, float] = (0.0, 0.0)) -> TissueMap:
    """Air scene with a centered PEC cylinder (time-axis calibration target)."""
    if radius <= 0:
        raise SpecGeometryError("PEC cylinder radius must be positive")
    X, Y = grid.centers()
    labels = np.full(grid.shape, TissueLabel.AIR, dtype=np.uint8)
    labels[(X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius ** 2] = TissueLabel.PEC
    return TissueMap(grid=grid, labels=labels, props=dict(TISSUE_PROPERTIES))


def free_space_scene(grid: RasterGrid) -> TissueMap:
    labels = np.full(grid.shape, TissueLabel.AIR, dtype=np.uint8)
    return TissueMap(grid=grid, labels=labels, props=dict(TISSUE_PROPERTIES))


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------

@dataclass
class Contour:
    """Closed simple polygon (CCW) tracing the limb surface; vertices in m."""

    vertices: np.ndarray                 # (n, 2) of (x, y), last != first

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (n, 2)")
        if len(self.vertices) < 16:
            raise ValueError("contour needs at least 16 vertices")

    def __len__(self) -> int:
        return len(self.vertices)

    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def is_ccw(self) -> bool:
        return self.signed_area() > 0.0

    def centroid(self) -> tuple[float, float]:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * np.sum(cross)
        cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a)
        cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a)
        return float(cx), float(cy)

    def is_simple(self) -> bool:
        return len(_self_intersecting_vertices(self.vertices)) == 0

    def contains(self, x, y) -> np.ndarray:
        """Nonzero-winding point-in-polygon test, vectorized over points."""
        return points_in_polygon(self.vertices, x, y)


def points_in_polygon(vertices: np.ndarray, x, y) -> np.ndarray:
    """Nonzero-winding membership of points in a closed polygon.

    Crossing-based winding number: for each directed edge, count +1/-1 when the
    edge crosses the upward ray from the point. Points exactly on a horizontal
    edge follow the half-open convention.
    """
    px = np.asarray(x, dtype=float)
    py = np.asarray(y, dtype=float)
    x0 = vertices[:, 0]
    y0 = vertices[:, 1]
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)

    winding = np.zeros(px.shape, dtype=np.int32)
    for k in range(len(vertices)):
        ya, yb = y0[k], y1[k]
        if ya == yb:
            continue
        # half-open span so shared vertices are counted once
        span = (py >= min(ya, yb)) & (py < max(ya, yb))
        if not span.any():
            continue
        t = (py - ya) / (yb - ya)
        xc = x0[k] + t * (x1[k] - x0[k])
        crosses = span & (xc > px)
        winding += np.where(crosses, 1 if yb > ya else -1, 0)
    return winding != 0


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def _self_intersecting_vertices(vertices: np.ndarray) -> set[int]:
    """Vertex indices involved in any crossing pair of polygon edges."""
    n = len(vertices)
    bad: set[int] = set()
    segs = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    boxes = np.array([[min(a[0], b[0]), max(a[0], b[0]),
                       min(a[1], b[1]), max(a[1], b[1])] for a, b in segs])
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # adjacent around the wrap
            if (boxes[i, 1] < boxes[j, 0] or boxes[j, 1] < boxes[i, 0]
                    or boxes[i, 3] < boxes[j, 2] or boxes[j, 3] < boxes[i, 2]):
                continue
            if _segments_properly_intersect(*segs[i], *segs[j]):
                bad.update({i, (i + 1) % n, j, (j + 1) % n})
    return bad


def extract_contour(tissue_map: TissueMap, n_vertices: int = 64) -> Contour:
    """Trace the air/limb boundary and resample it to ``n_vertices``.

    Marching squares at the 0.5 level of the non-air occupancy mask; the
    longest closed curve is kept, oriented CCW, and resampled uniformly by
    arc length.
    """
    if n_vertices < 16:
        raise ValueError("n_vertices must be >= 16")
    mask = tissue_map.non_air_mask()
    if not mask.any():
        raise EmptySceneError("no non-air cells in scene")

    curves = measure.find_contours(mask.astype(float), 0.5)
    if not curves:
        raise EmptySceneError("occupancy mask produced no boundary")
    curve = max(curves, key=len)
    if np.allclose(curve[0], curve[-1]):
        curve = curve[:-1]

    g = tissue_map.grid
    xy = np.column_stack([
        g.origin[0] + (curve[:, 1] + 0.5) * g.cell_size,
        g.origin[1] + (curve[:, 0] + 0.5) * g.cell_size,
    ])
    contour = Contour(vertices=resample_closed(xy, n_vertices))
    if not contour.is_ccw():
        contour = Contour(vertices=contour.vertices[::-1].copy())
    return contour


def resample_closed(vertices: np.ndarray, n: int) -> np.ndarray:
    """Resample a closed polyline to ``n`` vertices equally spaced by arc length."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        raise ValueError("degenerate polyline")
    targets = np.arange(n) * total / n
    return np.column_stack([
        np.interp(targets, s, closed[:, 0]),
        np.interp(targets, s, closed[:, 1]),
    ])


def perturb_contour(contour: Contour, sigma: float, max_dev: float,
                    seed: int, max_retries: int = 50) -> Contour:
    """Displace each vertex radially by truncated-Gaussian noise.

    Noise is i.i.d. N(0, sigma) truncated to [-max_dev, +max_dev], applied
    along the unit ray from the polygon centroid. Vertices on crossing edges
    are redrawn until the polygon is simple again (up to ``max_retries``).
    """
    if sigma <= 0 or max_dev <= 0:
        raise ValueError("sigma and max_dev must be positive")
    rng = np.random.default_rng(seed)
    verts = contour.vertices.copy()
    cx, cy = contour.centroid()
    radial = verts - [cx, cy]
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)

    bound = max_dev / sigma
    noise = stats.truncnorm.rvs(-bound, bound, scale=sigma,
                                size=len(verts), random_state=rng)
    out = verts + noise[:, None] * radial
    for _ in range(max_retries):
        bad = _self_intersecting_vertices(out)
        if not bad:
            return Contour(vertices=out)
        idx = np.array(sorted(bad))
        redraw = stats.truncnorm.rvs(-bound, bound, scale=sigma,
                                     size=len(idx), random_state=rng)
        out[idx] = verts[idx] + redraw[:, None] * radial[idx]
    raise DegenerateContourError(
        f"could not restore a simple polygon after {max_retries} retries")


# ---------------------------------------------------------------------------
# Velocity maps
# ---------------------------------------------------------------------------

@dataclass
class VelocityMap:
    grid: RasterGrid
    speeds: np.ndarray                   # (ny, nx) m/s
    eps_e: float

    def __post_init__(self):
        self.speeds = np.ascontiguousarray(self.speeds, dtype=float)
        if self.speeds.shape != self.grid.shape:
            raise ValueError("speed raster does not match grid shape")


def rasterize_velocity_map(contour: Contour, eps_e: float,
                           grid: RasterGrid) -> VelocityMap:
    """Two-valued speed map: ``c/sqrt(eps_e)`` inside the contour, ``c`` outside.

    Cell membership is decided at the cell center with the nonzero winding
    rule, so boundary cells belong to whichever side their center falls on.
    """
    if eps_e < 1.0:
        raise ValueError("eps_e must be >= 1")
    X, Y = grid.centers()
    inside = points_in_polygon(contour.vertices, X, Y)
    speeds = np.where(inside, C0 / np.sqrt(eps_e), C0)
    return VelocityMap(grid=grid, speeds=speeds, eps_e=eps_e)
