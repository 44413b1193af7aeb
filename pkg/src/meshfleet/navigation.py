"""Waypoint autonomy over the rover's local map: inflated-grid A*, a
pure-pursuit style follower, and replan/failure reporting.

Unknown space is traversable at a cost penalty (exploration requires it);
occupied cells are inflated by the rover radius and never entered.
"""

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import Pose2, wrap_angle
from .mapping import OccupancyGrid, TRINARY_THRESHOLD

ROVER_RADIUS_DEFAULT = 0.25
UNKNOWN_COST_MULT = 2.0
LOOKAHEAD_M = 0.5
GOAL_TOLERANCE_M = 0.3
PATH_DEVIATION_M = 1.0
OMEGA_MAX = 1.0

SQRT2 = math.sqrt(2.0)


class NoPath(Exception):
    pass


@dataclass
class Waypoint:
    target: tuple[float, float]
    tolerance: float = GOAL_TOLERANCE_M


@dataclass
class PlannedPath:
    cells: list[tuple[int, int]]
    points: np.ndarray            # (N,2) frame coords of cell centers
    length_m: float
    cost: float
    planned_at: float = 0.0


@dataclass
class DriveCommand:
    v: float
    omega: float
    goal_reached: bool = False
    replan_needed: bool = False


def _cost_layers(grid: OccupancyGrid, rover_radius: float):
    """(blocked mask, per-cell multiplier) with obstacle inflation."""
    occ = grid.occupied_mask()
    inflate_cells = int(math.ceil(rover_radius / grid.resolution))
    if inflate_cells > 0 and occ.any():
        yy, xx = np.ogrid[-inflate_cells:inflate_cells + 1,
                          -inflate_cells:inflate_cells + 1]
        disk = (xx * xx + yy * yy) <= inflate_cells * inflate_cells
        blocked = ndimage.binary_dilation(occ, structure=disk)
    else:
        blocked = occ
    unknown = np.abs(grid.cells) < TRINARY_THRESHOLD
    mult = np.where(unknown, UNKNOWN_COST_MULT, 1.0)
    return blocked, mult


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return (dx + dy) + (SQRT2 - 2.0) * min(dx, dy)


_NEIGHBORS = [(-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2),
              (0, -1, 1.0), (0, 1, 1.0),
              (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2)]


def plan(grid: OccupancyGrid, start: tuple[float, float], goal: tuple[float, float],
         rover_radius: float = ROVER_RADIUS_DEFAULT) -> PlannedPath:
    """A* over the inflated local grid; raises NoPath when unreachable.

    Step cost is step length times the destination cell's multiplier
    (1 for free, 2 for unknown); the octile heuristic is admissible under
    that model, so returned paths are cost-optimal. A goal beyond the
    mapped extent grows the grid first: exploration goals routinely point
    into unknown space.
    """
    grid.ensure_contains(np.array([start[0], goal[0]]),
                         np.array([start[1], goal[1]]))
    blocked, mult = _cost_layers(grid, rover_radius)
    res = grid.resolution

    def to_cell(p) -> tuple[int, int]:
        gx, gy = grid.frame_to_cell(np.array([p[0]]), np.array([p[1]]))
        return int(math.floor(gx[0])), int(math.floor(gy[0]))

    start_c = to_cell(start)
    goal_c = to_cell(goal)
    nx, ny = blocked.shape
    if blocked[start_c]:
        raise NoPath("start is inside an inflated obstacle")
    if blocked[goal_c]:
        raise NoPath("goal is inside an inflated obstacle")

    open_heap = [(0.0, 0, start_c)]
    g_score = {start_c: 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    push_count = 0
    while open_heap:
        _, _, cur = heapq.heappop(open_heap)
        if cur == goal_c:
            cells = [cur]
            while cells[-1] in came:
                cells.append(came[cells[-1]])
            cells.reverse()
            px, py = grid.cell_center(np.array([c[0] for c in cells]),
                                      np.array([c[1] for c in cells]))
            pts = np.column_stack([px, py])
            length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()) if len(pts) > 1 else 0.0
            return PlannedPath(cells, pts, length, g_score[cur] * res)
        base = g_score[cur]
        for dx, dy, step in _NEIGHBORS:
            nb = (cur[0] + dx, cur[1] + dy)
            if not (0 <= nb[0] < nx and 0 <= nb[1] < ny) or blocked[nb]:
                continue
            cand = base + step * mult[nb]
            if cand < g_score.get(nb, math.inf):
                g_score[nb] = cand
                came[nb] = cur
                push_count += 1
                heapq.heappush(open_heap, (cand + _octile(nb, goal_c), push_count, nb))
    raise NoPath("goal unreachable on the current map")


def follow(path: PlannedPath, pose: Pose2, v_max: float,
           lookahead: float = LOOKAHEAD_M,
           tolerance: float = GOAL_TOLERANCE_M) -> DriveCommand:
    """Steer toward a lookahead point on the path; zero command at the goal."""
    pts = path.points
    if not len(pts):
        return DriveCommand(0.0, 0.0, goal_reached=True)
    here = np.array([pose.x, pose.y])
    dist_to_goal = float(np.linalg.norm(pts[-1] - here))
    if dist_to_goal <= tolerance:
        return DriveCommand(0.0, 0.0, goal_reached=True)

    d = np.linalg.norm(pts - here, axis=1)
    nearest = int(np.argmin(d))
    if float(d[nearest]) > PATH_DEVIATION_M:
        return DriveCommand(0.0, 0.0, replan_needed=True)
    target_idx = nearest
    while (target_idx + 1 < len(pts)
           and float(np.linalg.norm(pts[target_idx] - here)) < lookahead):
        target_idx += 1
    target = pts[target_idx]
    heading_err = wrap_angle(math.atan2(target[1] - here[1],
                                        target[0] - here[0]) - pose.theta)
    omega = max(-OMEGA_MAX, min(OMEGA_MAX, 2.0 * heading_err))
    v = v_max * max(0.15, math.cos(heading_err)) if abs(heading_err) < math.pi / 2 else 0.0
    return DriveCommand(v, omega)


@dataclass
class Navigator:
    """Per-rover goal state machine feeding the control loop."""
    v_max: float
    rover_radius: float = ROVER_RADIUS_DEFAULT
    goal: Optional[Waypoint] = None
    path: Optional[PlannedPath] = None
    status: str = "idle"   # idle|planning|following|goal_reached|no_path|frame_unknown|replan
    status_log: list = field(default_factory=list)

    def set_goal(self, grid: OccupancyGrid, pose: Pose2, goal: Waypoint,
                 now: float) -> str:
        self.goal = goal
        try:
            self.path = plan(grid, (pose.x, pose.y), goal.target, self.rover_radius)
            self.path.planned_at = now
            self._set_status("following", now)
        except NoPath:
            self.path = None
            self.goal = None
            self._set_status("no_path", now)
        return self.status

    def cancel(self, now: float) -> None:
        self.goal = None
        self.path = None
        self._set_status("idle", now)

    def reject_frame_unknown(self, now: float) -> str:
        self._set_status("frame_unknown", now)
        return self.status

    def replan_on_obstacle(self, grid: OccupancyGrid, pose: Pose2, now: float) -> str:
        """Replan when a cell on the active path became blocked."""
        if self.path is None or self.goal is None:
            return self.status
        blocked, _ = _cost_layers(grid, self.rover_radius)
        nx, ny = blocked.shape
        on_path_blocked = any(
            0 <= cx < nx and 0 <= cy < ny and blocked[cx, cy]
            for cx, cy in self.path.cells)
        if not on_path_blocked:
            return self.status
        try:
            self.path = plan(grid, (pose.x, pose.y), self.goal.target, self.rover_radius)
            self.path.planned_at = now
            self._set_status("replan", now)
        except NoPath:
            self.path = None
            self.goal = None
            self._set_status("no_path", now)
        return self.status

    def control(self, grid: OccupancyGrid, pose: Pose2, now: float) -> DriveCommand:
        if self.path is None or self.goal is None:
            return DriveCommand(0.0, 0.0)
        cmd = follow(self.path, pose, self.v_max, tolerance=self.goal.tolerance)
        if cmd.goal_reached:
            self.goal = None
            self.path = None
            self._set_status("goal_reached", now)
        elif cmd.replan_needed:
            try:
                self.path = plan(grid, (pose.x, pose.y), self.goal.target,
                                 self.rover_radius)
                self.path.planned_at = now
                self._set_status("replan", now)
            except NoPath:
                self.goal = None
                self.path = None
                self._set_status("no_path", now)
        return cmd

    def _set_status(self, status: str, now: float) -> None:
        self.status = status
        self.status_log.append((now, status))
