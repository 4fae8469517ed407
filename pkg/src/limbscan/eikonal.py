"""Fast-marching first-arrival solver on heterogeneous 2-D speed maps.

Solves |grad tau| = 1/v(r) with tau(source) = 0 by upwind marching: cells move
through far -> close -> known states ordered by a lexicographic min-heap, and
each neighbor update minimizes the arrival time over triangle stencils whose
base edges connect consecutive cells of the 8-ring and of the 16-cell ring at
Chebyshev radius 2, with travel time interpolated linearly along the base
edge (locally planar wavefronts). Leg costs through heterogeneous cells use
exact line integrals of the per-cell slowness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NonpositiveSpeedError, ShapeMismatchError, SourceOutOfDomainError
from .geometry import ArrayGeometry
from .grid import RasterGrid
from .phantom import VelocityMap

FAR, CLOSE, KNOWN = 0, 1, 2
SEED_RADIUS_CELLS = 3  # cells within this index radius get exact analytic times

# Ring offsets (di, dj), consecutive entries are king-adjacent so consecutive
# pairs form valid stencil base edges of length h.
_RING8 = np.array([(0, 1), (1, 1), (1, 0), (1, -1),
                   (0, -1), (-1, -1), (-1, 0), (-1, 1)], dtype=np.int64)
_RING16 = np.array([(0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (2, -1), (2, -2),
                    (1, -2), (0, -2), (-1, -2), (-2, -2), (-2, -1), (-2, 0),
                    (-2, 1), (-2, 2), (-1, 2)], dtype=np.int64)

# offset (di+2, dj+2) -> index within its ring, -1 if not on a ring
_RING_INDEX = np.full((5, 5), -1, dtype=np.int64)
for _k, (_di, _dj) in enumerate(_RING8):
    _RING_INDEX[_di + 2, _dj + 2] = _k
for _k, (_di, _dj) in enumerate(_RING16):
    _RING_INDEX[_di + 2, _dj + 2] = _k


@dataclass
class TravelTimeMap:
    grid: RasterGrid
    times: np.ndarray                    # (ny, nx) seconds
    source: tuple[float, float]          # (x, y) m

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=float)
        if self.times.shape != self.grid.shape:
            raise ValueError("travel-time raster does not match grid shape")


# ---------------------------------------------------------------------------
# numba kernels (positions in origin-relative physical units; cell (iy, ix)
# spans [ix*h, (ix+1)*h) x [iy*h, (iy+1)*h) with its center at (+.5h, +.5h))
# ---------------------------------------------------------------------------

@njit(cache=True)
def _heap_less(ht, hy, hx, a, b):
    if ht[a] != ht[b]:
        return ht[a] < ht[b]
    if hy[a] != hy[b]:
        return hy[a] < hy[b]
    return hx[a] < hx[b]


@njit(cache=True)
def _heap_push(ht, hy, hx, size, t, iy, ix):
    k = size
    ht[k] = t
    hy[k] = iy
    hx[k] = ix
    while k > 0:
        parent = (k - 1) // 2
        if _heap_less(ht, hy, hx, k, parent):
            ht[k], ht[parent] = ht[parent], ht[k]
            hy[k], hy[parent] = hy[parent], hy[k]
            hx[k], hx[parent] = hx[parent], hx[k]
            k = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(ht, hy, hx, size):
    t, iy, ix = ht[0], hy[0], hx[0]
    size -= 1
    ht[0], hy[0], hx[0] = ht[size], hy[size], hx[size]
    k = 0
    while True:
        left = 2 * k + 1
        if left >= size:
            break
        smallest = left
        right = left + 1
        if right < size and _heap_less(ht, hy, hx, right, left):
            smallest = right
        if _heap_less(ht, hy, hx, smallest, k):
            ht[k], ht[smallest] = ht[smallest], ht[k]
            hy[k], hy[smallest] = hy[smallest], hy[k]
            hx[k], hx[smallest] = hx[smallest], hx[k]
            k = smallest
        else:
            break
    return t, iy, ix, size


@njit(cache=True)
def _seg_slowness(sl, x0, y0, x1, y1, h):
    """Line integral of per-cell slowness from (x0,y0) to (x1,y1)."""
    ny, nx = sl.shape
    dx = x1 - x0
    dy = y1 - y0
    length = np.sqrt(dx * dx + dy * dy)
    if length == 0.0:
        return 0.0
    ix = min(max(int(x0 / h), 0), nx - 1)
    iy = min(max(int(y0 / h), 0), ny - 1)
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    # parametric distance to the next x/y cell boundary, in t in [0, 1]
    if dx != 0.0:
        t_dx = abs(h / dx)
        nxb = (ix + 1) * h if dx > 0 else ix * h
        t_mx = (nxb - x0) / dx
    else:
        t_dx = np.inf
        t_mx = np.inf
    if dy != 0.0:
        t_dy = abs(h / dy)
        nyb = (iy + 1) * h if dy > 0 else iy * h
        t_my = (nyb - y0) / dy
    else:
        t_dy = np.inf
        t_my = np.inf
    total = 0.0
    t = 0.0
    while t < 1.0:
        if t_mx < t_my:
            t_next = min(t_mx, 1.0)
            total += (t_next - t) * sl[iy, ix]
            t = t_next
            t_mx += t_dx
            ix += step_x
            if ix < 0 or ix >= nx:
                break
        else:
            t_next = min(t_my, 1.0)
            total += (t_next - t) * sl[iy, ix]
            t = t_next
            t_my += t_dy
            iy += step_y
            if iy < 0 or iy >= ny:
                break
    return total * length


@njit(cache=True)
def _triangle_uniform(ta, tb, ax, ay, bx, by, s):
    """Min time over the edge A-B into the origin with uniform slowness s."""
    ex = bx - ax
    ey = by - ay
    u = tb - ta
    p = ax * ax + ay * ay
    q = ex * ex + ey * ey
    m = ax * ex + ay * ey
    best = ta + s * np.sqrt(p)                       # lam = 0
    cand = tb + s * np.sqrt(p + 2.0 * m + q)         # lam = 1
    if cand < best:
        best = cand
    g = s * s * q - u * u
    if g > 0.0:
        a2 = q * g
        a1 = 2.0 * m * g
        a0 = s * s * m * m - u * u * p
        disc = a1 * a1 - 4.0 * a2 * a0
        if disc > 0.0 and a2 != 0.0:
            rt = np.sqrt(disc)
            for sign in (-1.0, 1.0):
                lam = (-a1 + sign * rt) / (2.0 * a2)
                if 0.0 < lam < 1.0:
                    d = np.sqrt(p + 2.0 * lam * m + lam * lam * q)
                    cand = ta + lam * u + s * d
                    if cand < best:
                        best = cand
    return best


@njit(cache=True)
def _triangle_sampled(sl, tau_a, tau_b, nx_pos, ny_pos, axp, ayp, bxp, byp, h):
    """Min time over the edge A-B into N with line-integral leg costs.

    Positions are absolute; 17-point search on the interpolation parameter is
    ample because the minimum is flat (second derivative ~ h * slowness).
    """
    best = np.inf
    u = tau_b - tau_a
    for k in range(17):
        lam = k / 16.0
        px = axp + lam * (bxp - axp)
        py = ayp + lam * (byp - ayp)
        cand = tau_a + lam * u + _seg_slowness(sl, nx_pos, ny_pos, px, py, h)
        if cand < best:
            best = cand
    return best


@njit(cache=True)
def _march(sl, h, src_x, src_y, ring8, ring16, ring_index):
    """Fast-marching sweep; returns (times, pop-order times).

    ``sl`` is slowness per cell, ``h`` cell size, source position in
    origin-relative coordinates.
    """
    ny, nx = sl.shape
    n = ny * nx
    times = np.full((ny, nx), np.inf)
    state = np.zeros((ny, nx), dtype=np.uint8)
    pop_times = np.empty(n)

    cap = 30 * n + 64
    ht = np.empty(cap)
    hy = np.empty(cap, dtype=np.int64)
    hx = np.empty(cap, dtype=np.int64)
    size = 0

    # uniformity flags: fast closed-form stencils are valid only where every
    # cell a stencil leg can cross shares one slowness value
    uni3 = np.zeros((ny, nx), dtype=np.uint8)
    uni5 = np.zeros((ny, nx), dtype=np.uint8)
    for iy in range(ny):
        for ix in range(nx):
            v0 = sl[iy, ix]
            ok3 = True
            ok5 = True
            for di in range(-2, 3):
                for dj in range(-2, 3):
                    jy = iy + di
                    jx = ix + dj
                    if jy < 0 or jy >= ny or jx < 0 or jx >= nx:
                        continue
                    if sl[jy, jx] != v0:
                        ok5 = False
                        if abs(di) <= 1 and abs(dj) <= 1:
                            ok3 = False
            uni3[iy, ix] = 1 if ok3 else 0
            uni5[iy, ix] = 1 if ok5 else 0

    # seed a disc of exact analytic times around the (snapped) source cell
    isx = min(max(int(src_x / h), 0), nx - 1)
    isy = min(max(int(src_y / h), 0), ny - 1)
    s_src = sl[isy, isx]
    r2 = SEED_RADIUS_CELLS * SEED_RADIUS_CELLS
    for di in range(-SEED_RADIUS_CELLS, SEED_RADIUS_CELLS + 1):
        for dj in range(-SEED_RADIUS_CELLS, SEED_RADIUS_CELLS + 1):
            if di * di + dj * dj > r2:
                continue
            iy = isy + di
            ix = isx + dj
            if iy < 0 or iy >= ny or ix < 0 or ix >= nx:
                continue
            cx = (ix + 0.5) * h
            cy = (iy + 0.5) * h
            t = s_src * np.sqrt((cx - src_x) ** 2 + (cy - src_y) ** 2)
            times[iy, ix] = t
            state[iy, ix] = CLOSE
            size = _heap_push(ht, hy, hx, size, t, iy, ix)

    n_done = 0
    while size > 0:
        t, iy, ix, size = _heap_pop(ht, hy, hx, size)
        if state[iy, ix] == KNOWN:
            continue
        state[iy, ix] = KNOWN
        times[iy, ix] = t
        pop_times[n_done] = t
        n_done += 1

        xp = (ix + 0.5) * h
        yp = (iy + 0.5) * h

        # scatter: re-evaluate every stencil that gained (iy, ix) as a vertex
        for di in range(-2, 3):
            for dj in range(-2, 3):
                if di == 0 and dj == 0:
                    continue
                ring_idx = ring_index[di + 2, dj + 2]
                if ring_idx < 0:
                    continue
                ny_i = iy - di          # neighbor N such that N + (di,dj) = X
                nx_i = ix - dj
                if ny_i < 0 or ny_i >= ny or nx_i < 0 or nx_i >= nx:
                    continue
                if state[ny_i, nx_i] == KNOWN:
                    continue
                npx = (nx_i + 0.5) * h
                npy = (ny_i + 0.5) * h
                on_r8 = max(abs(di), abs(dj)) == 1
                ring = ring8 if on_r8 else ring16
                nring = 8 if on_r8 else 16
                uniform = uni3[ny_i, nx_i] if on_r8 else uni5[ny_i, nx_i]

                best = times[ny_i, nx_i]
                if on_r8:
                    # one-point update through the just-finalized cell
                    if uniform:
                        cand = t + sl[ny_i, nx_i] * np.sqrt(
                            (xp - npx) ** 2 + (yp - npy) ** 2)
                    else:
                        cand = t + _seg_slowness(sl, npx, npy, xp, yp, h)
                    if cand < best:
                        best = cand
                # triangles pairing X with its ring-adjacent partners
                for delta in (-1, 1):
                    pidx = (ring_idx + delta) % nring
                    pdi = ring[pidx, 0]
                    pdj = ring[pidx, 1]
                    py_i = ny_i + pdi
                    px_i = nx_i + pdj
                    if py_i < 0 or py_i >= ny or px_i < 0 or px_i >= nx:
                        continue
                    if state[py_i, px_i] != KNOWN:
                        continue
                    ppx = (px_i + 0.5) * h
                    ppy = (py_i + 0.5) * h
                    tp = times[py_i, px_i]
                    if uniform:
                        cand = _triangle_uniform(
                            t, tp, xp - npx, yp - npy, ppx - npx, ppy - npy,
                            sl[ny_i, nx_i])
                    else:
                        cand = _triangle_sampled(
                            sl, t, tp, npx, npy, xp, yp, ppx, ppy, h)
                    if cand < best:
                        best = cand
                if best < times[ny_i, nx_i]:
                    times[ny_i, nx_i] = best
                    state[ny_i, nx_i] = CLOSE
                    size = _heap_push(ht, hy, hx, size, best, ny_i, nx_i)

    return times, pop_times[:n_done]


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def solve_travel_time(vmap: VelocityMap, source: tuple[float, float],
                      return_order: bool = False):
    """First-arrival travel-time map from ``source`` through ``vmap``.

    Sub-cell source positions are honored by seeding exact analytic times in a
    3-cell disc around the snapped source cell. With ``return_order`` the
    finalized times are also returned in the order cells became known (they
    are non-decreasing; used by the monotonicity checks).
    """
    g = vmap.grid
    if not g.contains(source[0], source[1]):
        raise SourceOutOfDomainError(f"source {source} outside grid extent")
    speeds = vmap.speeds
    if not np.all(np.isfinite(speeds)) or np.any(speeds <= 0.0):
        raise NonpositiveSpeedError("all speeds must be positive and finite")

    sl = np.ascontiguousarray(1.0 / speeds)
    times, order = _march(sl, g.cell_size,
                          source[0] - g.origin[0], source[1] - g.origin[1],
                          _RING8, _RING16, _RING_INDEX)
    tt = TravelTimeMap(grid=g, times=times, source=(float(source[0]), float(source[1])))
    if return_order:
        return tt, order
    return tt


def two_way_time(tau_tx: TravelTimeMap, tau_rx: TravelTimeMap) -> TravelTimeMap:
    """Cell-wise sum of TX and RX one-way maps."""
    if tau_tx.grid != tau_rx.grid:
        raise ShapeMismatchError("travel-time maps live on different grids")
    return TravelTimeMap(grid=tau_tx.grid, times=tau_tx.times + tau_rx.times,
                         source=tau_tx.source)


def solve_all_elements(vmap: VelocityMap, geom: ArrayGeometry) -> list[TravelTimeMap]:
    """Two-way travel-time map per array element (2M one-way solves).

    TX and RX solves are cached by position, so co-located elements (d = 0)
    cost a single solve.
    """
    cache: dict[tuple[float, float], TravelTimeMap] = {}

    def solve(pos: tuple[float, float]) -> TravelTimeMap:
        key = (round(pos[0], 12), round(pos[1], 12))
        if key not in cache:
            cache[key] = solve_travel_time(vmap, pos)
        return cache[key]

    out = []
    for i in range(geom.n_elements):
        tx = solve(geom.tx_position(i))
        rx = solve(geom.rx_position(i))
        out.append(two_way_time(tx, rx))
    return out
