"""Per-rover log-odds occupancy mapping and lander-side map merging.

Local maps are built in each rover's odometric frame by additive log-odds
updates along sensor beams. Merging matches corner features between maps,
estimates a rigid SE(2) transform by random-sample consensus, gates the
result on a minimum known-area overlap, and fuses the grids by summing
resampled log-odds.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import Pose2, se2_apply, se2_inverse, wrap_angle
from .kernel import RngStream

L_MAX_DEFAULT = 6.0
HIT_INC = 0.85
FREE_DEC = 0.4
TRINARY_THRESHOLD = 0.4
# log-odds assigned when reconstructing a grid from its trinary wire form
DECODE_OCCUPIED = HIT_INC
DECODE_FREE = -FREE_DEC


class MergeError(Exception):
    pass


class InsufficientFeatures(MergeError):
    pass


class InsufficientOverlap(MergeError):
    def __init__(self, ratio: float, threshold: float):
        super().__init__(f"overlap ratio {ratio:.3f} below threshold {threshold:.2f}")
        self.ratio = ratio
        self.threshold = threshold


class NoConsensus(MergeError):
    pass


class OccupancyGrid:
    """Log-odds occupancy grid; unknown prior is 0, values clamp to +-l_max.

    `origin` is the pose of the corner of cell (0, 0) in the grid's frame;
    cells[ix, iy] covers origin + ([ix, ix+1) x [iy, iy+1)) * resolution
    (for origin.theta == 0). The grid grows on demand when updates land
    outside the current extent.
    """

    GROW_CHUNK = 64

    def __init__(self, resolution: float = 0.1, origin: Pose2 = Pose2(0.0, 0.0, 0.0),
                 nx: int = 16, ny: int = 16, l_max: float = L_MAX_DEFAULT):
        self.resolution = resolution
        self.origin = origin
        self.l_max = l_max
        self.cells = np.zeros((nx, ny), dtype=np.float64)
        self.version = 0

    @property
    def nx(self) -> int:
        return self.cells.shape[0]

    @property
    def ny(self) -> int:
        return self.cells.shape[1]

    def copy(self) -> "OccupancyGrid":
        g = OccupancyGrid(self.resolution, self.origin, 1, 1, self.l_max)
        g.cells = self.cells.copy()
        g.version = self.version
        return g

    # -- frame <-> cell mapping -------------------------------------------

    def frame_to_cell(self, px, py):
        """Frame coords -> fractional cell indices (no bounds check)."""
        inv = se2_inverse(self.origin)
        c, s = math.cos(inv.theta), math.sin(inv.theta)
        gx = (c * np.asarray(px) - s * np.asarray(py) + inv.x) / self.resolution
        gy = (s * np.asarray(px) + c * np.asarray(py) + inv.y) / self.resolution
        return gx, gy

    def cell_center(self, ix, iy):
        """Cell indices -> frame coords of the cell center."""
        lx = (np.asarray(ix) + 0.5) * self.resolution
        ly = (np.asarray(iy) + 0.5) * self.resolution
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        return (c * lx - s * ly + self.origin.x,
                s * lx + c * ly + self.origin.y)

    def ensure_contains(self, px: np.ndarray, py: np.ndarray) -> None:
        """Grow the grid so all frame points fall inside (theta-0 grids only)."""
        if abs(self.origin.theta) > 1e-12:
            raise MergeError("only axis-aligned grids grow on demand")
        gx, gy = self.frame_to_cell(px, py)
        min_gx, max_gx = math.floor(gx.min()), math.floor(gx.max())
        min_gy, max_gy = math.floor(gy.min()), math.floor(gy.max())
        pad_lo_x = max(0, -min_gx)
        pad_lo_y = max(0, -min_gy)
        pad_hi_x = max(0, max_gx - (self.nx - 1))
        pad_hi_y = max(0, max_gy - (self.ny - 1))
        if not (pad_lo_x or pad_lo_y or pad_hi_x or pad_hi_y):
            return
        chunk = self.GROW_CHUNK
        pad_lo_x = math.ceil(pad_lo_x / chunk) * chunk if pad_lo_x else 0
        pad_lo_y = math.ceil(pad_lo_y / chunk) * chunk if pad_lo_y else 0
        pad_hi_x = math.ceil(pad_hi_x / chunk) * chunk if pad_hi_x else 0
        pad_hi_y = math.ceil(pad_hi_y / chunk) * chunk if pad_hi_y else 0
        new = np.zeros((self.nx + pad_lo_x + pad_hi_x,
                        self.ny + pad_lo_y + pad_hi_y), dtype=self.cells.dtype)
        new[pad_lo_x:pad_lo_x + self.nx, pad_lo_y:pad_lo_y + self.ny] = self.cells
        self.cells = new
        self.origin = Pose2(self.origin.x - pad_lo_x * self.resolution,
                            self.origin.y - pad_lo_y * self.resolution,
                            self.origin.theta)

    # -- classification ----------------------------------------------------

    def known_mask(self, threshold: float = TRINARY_THRESHOLD) -> np.ndarray:
        return np.abs(self.cells) >= threshold

    def occupied_mask(self, threshold: float = TRINARY_THRESHOLD) -> np.ndarray:
        return self.cells >= threshold

    def free_mask(self, threshold: float = TRINARY_THRESHOLD) -> np.ndarray:
        return self.cells <= -threshold

    def known_at_world(self, px: np.ndarray, py: np.ndarray,
                       epsilon: float = 0.1) -> np.ndarray:
        """True per point when the covering cell deviates from the prior."""
        gx, gy = self.frame_to_cell(px, py)
        ix = np.floor(gx).astype(np.int64)
        iy = np.floor(gy).astype(np.int64)
        inside = (ix >= 0) & (iy >= 0) & (ix < self.nx) & (iy < self.ny)
        out = np.zeros(len(ix), dtype=bool)
        out[inside] = np.abs(self.cells[ix[inside], iy[inside]]) > epsilon
        return out


@dataclass
class Scan:
    """One range-scanner sweep: bearings relative to the sensor heading."""
    angles: np.ndarray            # beam bearings, radians, relative to pose theta
    ranges: np.ndarray            # meters; inf marks a censored (no-return) beam
    max_range: float              # effective censoring range for this sweep


@dataclass
class GridFeature:
    position: tuple[float, float]   # meters, in the map frame
    descriptor: np.ndarray          # 64 binary values (8x8 oriented patch)


@dataclass
class MergeTransform:
    transform: Pose2            # maps frame B points into frame A
    overlap_ratio: float
    inlier_count: int


@dataclass
class MergeParams:
    overlap_threshold: float = 0.20
    min_inliers: int = 10
    ransac_iters: int = 400
    inlier_tol_cells: float = 2.0
    match_max_hamming: int = 14
    match_candidates: int = 12


def integrate_scan(grid: OccupancyGrid, pose: Pose2, scan: Scan,
                   hit_inc: float = HIT_INC, free_dec: float = FREE_DEC) -> OccupancyGrid:
    """Fuse one sweep into the grid at the given (odometric) pose.

    Cells crossed by a beam are decremented once per beam; the terminal
    cell of a returning beam is incremented. Censored beams clear free
    space out to the sweep's effective range. Values clamp to +-l_max.
    """
    res = grid.resolution
    bearings = pose.theta + scan.angles
    hit = np.isfinite(scan.ranges)
    reach = np.where(hit, scan.ranges, scan.max_range)
    if not len(reach):
        return grid

    max_reach = float(reach.max())
    corners_t = np.array([0.0, max_reach])
    span_x = pose.x + np.concatenate([np.cos(bearings) * r for r in corners_t])
    span_y = pose.y + np.concatenate([np.sin(bearings) * r for r in corners_t])
    grid.ensure_contains(span_x, span_y)

    step = res * 0.5
    n_steps = int(max_reach / step) + 1
    ts = np.arange(1, n_steps + 1) * step                      # (S,)
    px = pose.x + np.cos(bearings)[:, None] * ts[None, :]      # (B, S)
    py = pose.y + np.sin(bearings)[:, None] * ts[None, :]
    gx, gy = grid.frame_to_cell(px, py)
    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    valid = ts[None, :] < reach[:, None]                       # stop short of the hit
    lin = ix * grid.ny + iy
    # a ray leaves a cell for good, so duplicates are consecutive
    dup = np.zeros_like(valid)
    dup[:, 1:] = lin[:, 1:] == lin[:, :-1]
    take = valid & ~dup

    hit_r = np.where(hit, scan.ranges, 0.0)
    hx = pose.x + np.cos(bearings) * hit_r
    hy = pose.y + np.sin(bearings) * hit_r
    hgx, hgy = grid.frame_to_cell(hx, hy)
    hix = np.floor(hgx).astype(np.int64)
    hiy = np.floor(hgy).astype(np.int64)
    hlin = hix * grid.ny + hiy
    # never decrement the cell that takes the hit increment
    take &= ~(hit[:, None] & (lin == hlin[:, None]))

    ncells = grid.nx * grid.ny
    free_counts = np.bincount(lin[take], minlength=ncells)
    updates = free_counts.astype(np.float64) * -free_dec
    if hit.any():
        hit_counts = np.bincount(hlin[hit], minlength=ncells)
        updates += hit_counts.astype(np.float64) * hit_inc
    grid.cells += updates.reshape(grid.nx, grid.ny)
    np.clip(grid.cells, -grid.l_max, grid.l_max, out=grid.cells)
    grid.version += 1
    return grid


# -- feature extraction ----------------------------------------------------

_PATCH_N = 8
_PATCH_STEP_CELLS = 1.5
_ORIENT_RADIUS_CELLS = 5


def extract_features(grid: OccupancyGrid, max_features: int = 400) -> list[GridFeature]:
    """Corner-like features of the thresholded occupancy image.

    Harris response over the occupied mask selects corner cells; each gets
    an 8x8 binary occupancy patch sampled in a canonical orientation (the
    local occupied-mass direction), so descriptors survive map rotation.
    Output order is deterministic: by descending corner response.
    """
    occ = grid.occupied_mask().astype(np.float64)
    if not occ.any():
        return []
    smoothed = ndimage.gaussian_filter(occ, sigma=1.0)
    gx = ndimage.sobel(smoothed, axis=0)
    gy = ndimage.sobel(smoothed, axis=1)
    ixx = ndimage.gaussian_filter(gx * gx, sigma=1.5)
    iyy = ndimage.gaussian_filter(gy * gy, sigma=1.5)
    ixy = ndimage.gaussian_filter(gx * gy, sigma=1.5)
    response = ixx * iyy - ixy ** 2 - 0.04 * (ixx + iyy) ** 2
    peak = response.max()
    if peak <= 0:
        return []
    local_max = ndimage.maximum_filter(response, size=3)
    known = grid.known_mask()
    candidates = (response >= 0.05 * peak) & (response == local_max) & known
    cidx = np.argwhere(candidates)
    if not len(cidx):
        return []
    scores = response[candidates]
    order = np.lexsort((cidx[:, 1], cidx[:, 0], -scores))
    cidx = cidx[order][:max_features]

    occ_bool = occ > 0.5
    feats = []
    for ix, iy in cidx:
        desc = _oriented_patch(occ_bool, int(ix), int(iy))
        if desc is None:
            continue
        dx, dy = _subpixel_offset(response, int(ix), int(iy))
        px, py = grid.cell_center(ix + dx, iy + dy)
        feats.append(GridFeature((float(px), float(py)), desc))
    return feats


def _subpixel_offset(response: np.ndarray, ix: int, iy: int) -> tuple[float, float]:
    """Quadratic peak interpolation of the corner response, +-0.5 cell.

    Rasterization shifts blob corners by up to a cell between two maps of
    the same scene; interpolating the smooth response surface makes the
    localization consistent enough for sub-cell transform recovery.
    """
    if not (0 < ix < response.shape[0] - 1 and 0 < iy < response.shape[1] - 1):
        return 0.0, 0.0
    r = response[ix - 1:ix + 2, iy - 1:iy + 2]
    gx = (r[2, 1] - r[0, 1]) / 2.0
    gy = (r[1, 2] - r[1, 0]) / 2.0
    hxx = r[2, 1] - 2.0 * r[1, 1] + r[0, 1]
    hyy = r[1, 2] - 2.0 * r[1, 1] + r[1, 0]
    hxy = (r[2, 2] - r[2, 0] - r[0, 2] + r[0, 0]) / 4.0
    det = hxx * hyy - hxy * hxy
    if abs(det) < 1e-18:
        return 0.0, 0.0
    dx = -(hyy * gx - hxy * gy) / det
    dy = -(hxx * gy - hxy * gx) / det
    if abs(dx) > 0.5 or abs(dy) > 0.5:
        return 0.0, 0.0
    return float(dx), float(dy)


def _oriented_patch(occ: np.ndarray, ix: int, iy: int) -> Optional[np.ndarray]:
    r = _ORIENT_RADIUS_CELLS
    x0, x1 = max(0, ix - r), min(occ.shape[0], ix + r + 1)
    y0, y1 = max(0, iy - r), min(occ.shape[1], iy + r + 1)
    win = occ[x0:x1, y0:y1]
    wx, wy = np.nonzero(win)
    if len(wx) < 3:
        return None
    mx = float(np.mean(wx + x0 - ix))
    my = float(np.mean(wy + y0 - iy))
    if mx * mx + my * my < 1e-9:
        return None
    theta = math.atan2(my, mx)
    c, s = math.cos(theta), math.sin(theta)
    offsets = (np.arange(_PATCH_N) - (_PATCH_N - 1) / 2.0) * _PATCH_STEP_CELLS
    u, v = np.meshgrid(offsets, offsets, indexing="ij")
    sx = np.rint(ix + c * u - s * v).astype(np.int64)
    sy = np.rint(iy + s * u + c * v).astype(np.int64)
    inside = (sx >= 0) & (sy >= 0) & (sx < occ.shape[0]) & (sy < occ.shape[1])
    patch = np.zeros(u.shape, dtype=np.uint8)
    patch[inside] = occ[sx[inside], sy[inside]]
    return patch.reshape(-1)


# -- transform estimation ---------------------------------------------------

def _match_descriptors(fa: list[GridFeature], fb: list[GridFeature],
                       params: MergeParams) -> list[tuple[int, int]]:
    """All feature pairs within the Hamming gate, capped per A feature.

    Occupancy corners are often locally ambiguous (every boulder looks
    alike), so matching keeps every plausible candidate and leaves the
    disambiguation to the consensus stage.
    """
    da = np.stack([f.descriptor for f in fa]).astype(np.int16)
    db = np.stack([f.descriptor for f in fb]).astype(np.int16)
    # pairwise Hamming distances (descriptors are 64 binary values)
    dists = np.abs(da[:, None, :] - db[None, :, :]).sum(axis=2)
    pairs = []
    cap = params.match_candidates
    for i in range(len(fa)):
        row = dists[i]
        order = np.argsort(row, kind="stable")
        kept = 0
        for j in order:
            if row[j] > params.match_max_hamming or kept >= cap:
                break
            pairs.append((i, int(j)))
            kept += 1
    return pairs


def _fit_rigid(pa: np.ndarray, pb: np.ndarray) -> Pose2:
    """Least-squares SE(2) transform mapping points pb onto pa."""
    ca = pa.mean(axis=0)
    cb = pb.mean(axis=0)
    a = pa - ca
    b = pb - cb
    sxx = float(np.dot(b[:, 0], a[:, 0]) + np.dot(b[:, 1], a[:, 1]))
    sxy = float(np.dot(b[:, 0], a[:, 1]) - np.dot(b[:, 1], a[:, 0]))
    theta = math.atan2(sxy, sxx)
    c, s = math.cos(theta), math.sin(theta)
    tx = ca[0] - (c * cb[0] - s * cb[1])
    ty = ca[1] - (s * cb[0] + c * cb[1])
    return Pose2(tx, ty, theta)


def _boundary_points(grid: OccupancyGrid) -> np.ndarray:
    """Centers of occupied cells that border a non-occupied cell."""
    occ = grid.occupied_mask()
    interior = ndimage.binary_erosion(occ, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool))
    bx, by = np.nonzero(occ & ~interior)
    px, py = grid.cell_center(bx, by)
    return np.column_stack([px, py])


def _icp_refine(map_a: OccupancyGrid, map_b: OccupancyGrid, tf: Pose2,
                iters: int = 15, max_pair_dist_cells: float = 2.0) -> Pose2:
    """Polish a near-correct transform by aligning occupancy boundaries.

    Trimmed point-to-point alignment of obstacle outline cells; pairs
    farther than the trim radius are ignored, so a good initial guess only
    tightens and never re-associates across structures. Outlines are used
    instead of filled interiors because interior lattices of two rasters
    lock onto each other rather than onto the shapes.
    """
    from scipy.spatial import cKDTree

    pts_a = _boundary_points(map_a)
    pts_b = _boundary_points(map_b)
    if len(pts_a) < 10 or len(pts_b) < 10:
        return tf
    tree = cKDTree(pts_a)
    radius = max_pair_dist_cells * map_a.resolution
    for _ in range(iters):
        moved = se2_apply(tf, pts_b)
        dist, idx = tree.query(moved, distance_upper_bound=radius)
        keep = np.isfinite(dist)
        if int(keep.sum()) < 10:
            return tf
        new_tf = _fit_rigid(pts_a[idx[keep]], pts_b[keep])
        if (abs(new_tf.x - tf.x) < 1e-6 and abs(new_tf.y - tf.y) < 1e-6
                and abs(wrap_angle(new_tf.theta - tf.theta)) < 1e-7):
            tf = new_tf
            break
        tf = new_tf
    return tf


def _known_cell_centers(grid: OccupancyGrid) -> np.ndarray:
    kx, ky = np.nonzero(grid.known_mask())
    px, py = grid.cell_center(kx, ky)
    return np.column_stack([px, py])


def overlap_ratio(map_a: OccupancyGrid, map_b: OccupancyGrid, tf: Pose2) -> float:
    """|known(B->A) intersect known(A)| / min(|known(A)|, |known(B)|)."""
    known_a = int(map_a.known_mask().sum())
    known_b = int(map_b.known_mask().sum())
    if known_a == 0 or known_b == 0:
        return 0.0
    pts_b = _known_cell_centers(map_b)
    moved = se2_apply(tf, pts_b)
    hits = map_a.known_at_world(moved[:, 0], moved[:, 1],
                                epsilon=TRINARY_THRESHOLD - 1e-9)
    return float(hits.sum()) / min(known_a, known_b)


def match_and_estimate(map_a: OccupancyGrid, map_b: OccupancyGrid,
                       rng: Optional[RngStream] = None,
                       params: Optional[MergeParams] = None,
                       features_a: Optional[list[GridFeature]] = None) -> MergeTransform:
    """Estimate the SE(2) transform placing map B into map A's frame.

    Pipeline: corner features -> Hamming descriptor matching -> 2-point
    random-sample rigid fits scored by inlier count -> least-squares
    refinement over inliers. The result is accepted only when the inlier
    count and the known-area overlap ratio clear their thresholds.
    Callers merging repeatedly against the same reference can pass its
    features to skip re-extraction.
    """
    params = params or MergeParams()
    rng = rng or RngStream(0, "merge-default")
    fa = features_a if features_a is not None else extract_features(map_a)
    fb = extract_features(map_b)
    if len(fa) < 2 or len(fb) < 2:
        raise InsufficientFeatures(f"{len(fa)} vs {len(fb)} features")
    pairs = _match_descriptors(fa, fb, params)
    if len(pairs) < params.min_inliers:
        raise InsufficientFeatures(f"only {len(pairs)} descriptor matches")

    pa = np.array([fa[i].position for i, _ in pairs])
    pb = np.array([fb[j].position for _, j in pairs])
    tol = params.inlier_tol_cells * map_a.resolution
    n = len(pairs)

    # rigid motion preserves pairwise distances: precompute, per match pair,
    # which other pairs could share a transform with it, and sample the
    # second consensus point only from those
    dist_a = np.linalg.norm(pa[:, None, :] - pa[None, :, :], axis=2)
    dist_b = np.linalg.norm(pb[:, None, :] - pb[None, :, :], axis=2)
    compatible = ((np.abs(dist_a - dist_b) < tol) &
                  (dist_a >= 4 * map_a.resolution))
    compat_lists = [np.nonzero(compatible[i])[0] for i in range(n)]

    best_inliers: Optional[np.ndarray] = None
    best_count = 0
    for _ in range(params.ransac_iters):
        i1 = rng.randint(0, n)
        cands = compat_lists[i1]
        if not len(cands):
            continue
        i2 = int(cands[rng.randint(0, len(cands))])
        tf = _fit_rigid(pa[[i1, i2]], pb[[i1, i2]])
        moved = se2_apply(tf, pb)
        err = np.linalg.norm(moved - pa, axis=1)
        inliers = err < tol
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < params.min_inliers:
        raise NoConsensus(f"best consensus {best_count} < {params.min_inliers}")

    inliers = best_inliers
    tf = _fit_rigid(pa[inliers], pb[inliers])
    for _ in range(3):
        moved = se2_apply(tf, pb)
        err = np.linalg.norm(moved - pa, axis=1)
        inliers = err < tol
        if int(inliers.sum()) < params.min_inliers:
            break
        tf = _fit_rigid(pa[inliers], pb[inliers])
    # tightening pass: drop borderline mismatches when enough support remains
    moved = se2_apply(tf, pb)
    err = np.linalg.norm(moved - pa, axis=1)
    tight = err < 0.6 * tol
    if int(tight.sum()) >= params.min_inliers:
        inliers = tight
        tf = _fit_rigid(pa[inliers], pb[inliers])
    inlier_count = int(inliers.sum())
    # dense polish: feature corners carry raster bias, the full occupied
    # structure averages it out
    tf = _icp_refine(map_a, map_b, tf)
    if inlier_count < params.min_inliers:
        raise NoConsensus(f"refined consensus {inlier_count} < {params.min_inliers}")

    ratio = overlap_ratio(map_a, map_b, tf)
    if ratio < params.overlap_threshold:
        raise InsufficientOverlap(ratio, params.overlap_threshold)
    return MergeTransform(tf, ratio, inlier_count)


def merge(template: OccupancyGrid,
          placements: list[tuple[OccupancyGrid, Optional[Pose2]]]) -> OccupancyGrid:
    """Fuse local maps into a copy of the template grid.

    Each placement's non-prior cells are resampled through its transform
    (identity when None, the unanchored fallback) and their log-odds summed
    into the output, then clamped.
    """
    out = template.copy()
    for local, tf in placements:
        lx, ly = np.nonzero(local.cells != 0.0)
        if not len(lx):
            continue
        vals = local.cells[lx, ly]
        px, py = local.cell_center(lx, ly)
        pts = np.column_stack([px, py])
        if tf is not None:
            pts = se2_apply(tf, pts)
        out.ensure_contains(pts[:, 0], pts[:, 1])
        gx, gy = out.frame_to_cell(pts[:, 0], pts[:, 1])
        ix = np.floor(gx).astype(np.int64)
        iy = np.floor(gy).astype(np.int64)
        inside = (ix >= 0) & (iy >= 0) & (ix < out.nx) & (iy < out.ny)
        np.add.at(out.cells, (ix[inside], iy[inside]), vals[inside])
    np.clip(out.cells, -out.l_max, out.l_max, out=out.cells)
    out.version += 1
    return out


# -- wire format -------------------------------------------------------------

def encode_grid(grid: OccupancyGrid) -> dict:
    """Trinary run-length wire form: {header fields, rle}.

    Cells are classified at +-0.4 log-odds into u/f/o, serialized row-major
    (iy outer, ix inner) as concatenated "<count><symbol>" tokens.
    """
    occ = grid.occupied_mask()
    free = grid.free_mask()
    sym = np.full(grid.cells.shape, "u", dtype="U1")
    sym[occ] = "o"
    sym[free] = "f"
    flat = sym.T.reshape(-1)  # iy outer, ix inner
    tokens = []
    if len(flat):
        change = np.nonzero(flat[1:] != flat[:-1])[0] + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [len(flat)]])
        for s, e in zip(starts, ends):
            tokens.append(f"{e - s}{flat[s]}")
    return {
        "width": grid.nx,
        "height": grid.ny,
        "resolution": grid.resolution,
        "origin": [grid.origin.x, grid.origin.y, grid.origin.theta],
        "rle": "".join(tokens),
    }


def decode_grid(msg: dict) -> OccupancyGrid:
    """Rebuild a grid from its wire form with representative log-odds."""
    nx, ny = int(msg["width"]), int(msg["height"])
    grid = OccupancyGrid(resolution=float(msg["resolution"]),
                         origin=Pose2(*msg["origin"]), nx=nx, ny=ny)
    flat = np.zeros(nx * ny, dtype=np.float64)
    pos = 0
    count_chars = []
    for ch in msg["rle"]:
        if ch.isdigit():
            count_chars.append(ch)
            continue
        if not count_chars:
            raise ValueError("malformed rle: symbol without count")
        count = int("".join(count_chars))
        count_chars = []
        if ch == "o":
            flat[pos:pos + count] = DECODE_OCCUPIED
        elif ch == "f":
            flat[pos:pos + count] = DECODE_FREE
        elif ch != "u":
            raise ValueError(f"malformed rle: unknown symbol {ch!r}")
        pos += count
    if count_chars or pos != nx * ny:
        raise ValueError(f"malformed rle: covers {pos} of {nx * ny} cells")
    grid.cells = flat.reshape(ny, nx).T.copy()
    return grid
