"""Shared helpers: synthetic worlds and analytically rasterized map pairs."""

import math

import numpy as np
import pytest

from meshfleet.geometry import Pose2, se2_apply, se2_inverse
from meshfleet.mapping import OccupancyGrid


def rasterize_map(frame_tf: Pose2, rects, disks, known_center, known_radius,
                  res: float = 0.1, n: int = 300) -> OccupancyGrid:
    """Analytic map of world geometry as seen from a rotated/shifted frame.

    frame_tf maps world coords into the map's frame. Cells inside the
    known disk get free/occupied log-odds; everything else stays at the
    unknown prior. Rasterizing per frame (instead of resampling one
    raster) mimics two rovers mapping the same scene independently.
    """
    g = OccupancyGrid(resolution=res, nx=n, ny=n)
    xs = (np.arange(n) + 0.5) * res
    cx, cy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([cx.ravel(), cy.ravel()])
    inv = se2_inverse(frame_tf)
    wpts = se2_apply(inv, pts)
    occ = np.zeros(len(wpts), dtype=bool)
    for (x0, y0, x1, y1) in rects:
        occ |= ((wpts[:, 0] >= x0) & (wpts[:, 0] <= x1)
                & (wpts[:, 1] >= y0) & (wpts[:, 1] <= y1))
    for (dx, dy, r) in disks:
        occ |= (wpts[:, 0] - dx) ** 2 + (wpts[:, 1] - dy) ** 2 <= r * r
    kx, ky = known_center
    known = (wpts[:, 0] - kx) ** 2 + (wpts[:, 1] - ky) ** 2 <= known_radius ** 2
    vals = np.zeros(len(wpts))
    vals[known] = -2.0
    vals[known & occ] = 2.0
    g.cells = vals.reshape(n, n)
    return g


def random_scene(rng: np.random.Generator, n_rects=(5, 9), n_disks=3):
    rects = []
    for _ in range(int(rng.integers(*n_rects))):
        x, y = rng.uniform(4, 25, 2)
        w, h = rng.uniform(0.6, 2.5, 2)
        rects.append((x, y, x + w, y + h))
    disks = [(x, y, r) for x, y, r in zip(rng.uniform(4, 25, n_disks),
                                          rng.uniform(4, 25, n_disks),
                                          rng.uniform(0.3, 1.0, n_disks))]
    return rects, disks


def random_frame(rng: np.random.Generator, max_rot_deg=30.0, max_shift=3.0,
                 center=(14.5, 14.5)) -> Pose2:
    """Random SE(2) frame rotating about the scene center, then shifting.

    Rotating about the origin would sweep the scene out of the second
    grid's extent; rotating about the center keeps both views co-visible,
    like two rovers surveying the same neighborhood with different
    headings.
    """
    theta = rng.uniform(-math.radians(max_rot_deg), math.radians(max_rot_deg))
    tx, ty = rng.uniform(-max_shift, max_shift, 2)
    cx, cy = center
    c, s = math.cos(theta), math.sin(theta)
    return Pose2(cx + tx - (c * cx - s * cy),
                 cy + ty - (s * cx + c * cy),
                 theta)


@pytest.fixture
def scene_rng():
    return np.random.default_rng(20230)
