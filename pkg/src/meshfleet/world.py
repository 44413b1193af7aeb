"""Ground-truth arena: static geometry, raycasting, and coverage scoring.

The arena is rasterized once into an immutable boolean occupancy grid.
Cell (ix, iy) spans [ix*res, (ix+1)*res) x [iy*res, (iy+1)*res) in world
meters; boundary cells are always occupied so every ray terminates.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_WIDTH_M = 50.0
DEFAULT_HEIGHT_M = 36.0
DEFAULT_RESOLUTION_M = 0.1


class WorldError(Exception):
    pass


@dataclass
class Obstacle:
    kind: str                       # boulder | crater | wall
    center: tuple[float, float]
    radius: float = 0.0             # boulder / crater
    extent: tuple[float, float] = (0.0, 0.0)   # wall: (width, height)
    rim_width: float = 0.2          # crater rim thickness

    def bounds(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        if self.kind in ("boulder", "crater"):
            r = self.radius
            return cx - r, cy - r, cx + r, cy + r
        if self.kind == "wall":
            w, h = self.extent
            return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
        raise WorldError(f"unknown obstacle kind {self.kind!r}")


@dataclass
class ArenaSpec:
    width_m: float = DEFAULT_WIDTH_M
    height_m: float = DEFAULT_HEIGHT_M
    resolution_m: float = DEFAULT_RESOLUTION_M
    obstacles: list[Obstacle] = field(default_factory=list)


class GroundTruthGrid:
    """Immutable rasterized arena. occupied[ix, iy] is True for obstacle cells."""

    def __init__(self, spec: ArenaSpec, occupied: np.ndarray):
        self.width_m = spec.width_m
        self.height_m = spec.height_m
        self.resolution = spec.resolution_m
        self.nx, self.ny = occupied.shape
        occupied.setflags(write=False)
        self.occupied = occupied

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(x / self.resolution), int(y / self.resolution)

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width_m and 0.0 <= y < self.height_m

    def is_occupied(self, x: float, y: float) -> bool:
        if not self.in_bounds(x, y):
            return True
        ix, iy = self.cell_of(x, y)
        return bool(self.occupied[ix, iy])

    def free_mask(self) -> np.ndarray:
        return ~self.occupied


def load_world(spec: ArenaSpec) -> GroundTruthGrid:
    """Rasterize an arena spec into a ground-truth grid.

    Boulders render as occupied disks, walls as occupied rectangles, and
    craters as an occupied rim annulus with a free interior floor.
    """
    if spec.width_m <= 0 or spec.height_m <= 0 or spec.resolution_m <= 0:
        raise WorldError("arena dimensions and resolution must be positive")
    res = spec.resolution_m
    nx = math.ceil(spec.width_m / res)
    ny = math.ceil(spec.height_m / res)
    occ = np.zeros((nx, ny), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True

    # cell-center coordinate grids, used for analytic point-in-shape tests
    xs = (np.arange(nx) + 0.5) * res
    ys = (np.arange(ny) + 0.5) * res
    cx_grid, cy_grid = np.meshgrid(xs, ys, indexing="ij")

    for ob in spec.obstacles:
        x0, y0, x1, y1 = ob.bounds()
        if x0 < 0 or y0 < 0 or x1 > spec.width_m or y1 > spec.height_m:
            raise WorldError(f"obstacle {ob.kind} at {ob.center} extends outside the arena")
        cx, cy = ob.center
        if ob.kind == "boulder":
            d2 = (cx_grid - cx) ** 2 + (cy_grid - cy) ** 2
            occ |= d2 <= ob.radius ** 2
        elif ob.kind == "crater":
            d2 = (cx_grid - cx) ** 2 + (cy_grid - cy) ** 2
            inner = max(ob.radius - ob.rim_width, 0.0)
            occ |= (d2 <= ob.radius ** 2) & (d2 >= inner ** 2)
        elif ob.kind == "wall":
            w, h = ob.extent
            occ |= ((np.abs(cx_grid - cx) <= w / 2) &
                    (np.abs(cy_grid - cy) <= h / 2))
        else:
            raise WorldError(f"unknown obstacle kind {ob.kind!r}")
    return GroundTruthGrid(spec, occ)


def raycast(grid: GroundTruthGrid, origin: tuple[float, float], bearing: float,
            max_range: float) -> Optional[float]:
    """Distance from origin to the first occupied cell along the bearing.

    Returns None when nothing is hit within max_range. The origin must be
    inside the arena and in a free cell.
    """
    ox, oy = origin
    if not grid.in_bounds(ox, oy):
        raise WorldError(f"raycast origin {origin} outside arena")
    if grid.is_occupied(ox, oy):
        raise WorldError(f"raycast origin {origin} inside an occupied cell")
    hits = raycast_many(grid, origin, np.array([bearing]), max_range)
    d = hits[0]
    return None if math.isinf(d) else float(d)


def raycast_many(grid: GroundTruthGrid, origin: tuple[float, float],
                 bearings: np.ndarray, max_range: float) -> np.ndarray:
    """Vectorized raycast: one distance per bearing, inf when nothing is hit.

    Marches all rays at half-resolution steps and picks the first occupied
    sample per ray; the error is bounded by half a cell.
    """
    ox, oy = origin
    res = grid.resolution
    step = res * 0.5
    n_steps = int(max_range / step) + 1
    ts = (np.arange(1, n_steps + 1) * step)            # (S,)
    dx = np.cos(bearings)[:, None] * ts[None, :]       # (B, S)
    dy = np.sin(bearings)[:, None] * ts[None, :]
    px = ox + dx
    py = oy + dy
    ix = np.clip((px / res).astype(np.int64), 0, grid.nx - 1)
    iy = np.clip((py / res).astype(np.int64), 0, grid.ny - 1)
    occ = grid.occupied[ix, iy]
    # out-of-bounds samples count as occupied (boundary cells already are,
    # but clipping could otherwise alias interior cells)
    oob = (px < 0) | (py < 0) | (px >= grid.width_m) | (py >= grid.height_m)
    occ |= oob
    first = np.argmax(occ, axis=1)
    any_hit = occ[np.arange(len(bearings)), first]
    dist = ts[first]
    out = np.where(any_hit, dist, np.inf)
    out[out > max_range] = np.inf
    return out


def coverage_fraction(merged, truth: GroundTruthGrid,
                      known_epsilon: float = 0.1) -> float:
    """Fraction of ground-truth free cells marked known in a merged map.

    A merged cell counts as known when its log-odds deviates from the
    unknown prior (zero) by more than known_epsilon. The merged grid must
    be registered in the world frame and share the truth resolution.
    """
    if abs(merged.resolution - truth.resolution) > 1e-12:
        raise WorldError(
            f"resolution mismatch: merged {merged.resolution} vs truth {truth.resolution}")
    free = truth.free_mask()
    n_free = int(free.sum())
    if n_free == 0:
        return 0.0
    fx, fy = np.nonzero(free)
    # world coords of free cell centers -> merged grid indices
    px = (fx + 0.5) * truth.resolution
    py = (fy + 0.5) * truth.resolution
    known = merged.known_at_world(px, py, known_epsilon)
    return float(known.sum()) / n_free
