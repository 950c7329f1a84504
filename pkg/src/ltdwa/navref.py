"""Global navigation path (A* + clearance-aware Douglas-Peucker) and the
per-frame reference path the local planner tracks."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    KinodynamicLimits,
    OccupancyGrid,
    PlannerParams,
    RobotState,
    wrap_angle,
)
from .distfield import build_grid_distance_transform
from .errors import EmptyPath, GoalOccupied, NoPath, StartOccupied

_SQRT2 = math.sqrt(2.0)

# Remaining-path distance (m) below which the reference switches to
# terminal docking (all poses on the path end, facing it from the robot).
DOCK_RANGE = 0.4


@dataclass(frozen=True)
class NavigationPath:
    """Polyline of (x, y, theta) with theta the tangent of the following
    segment (last point repeats the final segment direction)."""

    points: np.ndarray  # (P, 3)
    arc_lengths: np.ndarray  # (P,) cumulative, starts at 0

    @property
    def total_length(self) -> float:
        return float(self.arc_lengths[-1])

    @staticmethod
    def from_xy(xy) -> "NavigationPath":
        xy = np.asarray(xy, dtype=float)
        if xy.shape[0] < 2:
            raise EmptyPath("a navigation path needs at least 2 points")
        seg = np.diff(xy, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError("NavigationPath: duplicate consecutive points")
        theta = np.arctan2(seg[:, 1], seg[:, 0])
        pts = np.column_stack([xy, np.append(theta, theta[-1])])
        arcs = np.concatenate([[0.0], np.cumsum(seg_len)])
        return NavigationPath(pts, arcs)

    def point_at_arc(self, s: float) -> np.ndarray:
        """Pose at arc length s (clamped to [0, total])."""
        s = min(max(s, 0.0), self.total_length)
        idx = int(np.searchsorted(self.arc_lengths, s, side="right") - 1)
        idx = min(idx, len(self.arc_lengths) - 2)
        seg_len = self.arc_lengths[idx + 1] - self.arc_lengths[idx]
        t = (s - self.arc_lengths[idx]) / seg_len
        p0, p1 = self.points[idx, :2], self.points[idx + 1, :2]
        xy = p0 + t * (p1 - p0)
        return np.array([xy[0], xy[1], self.points[idx, 2]])

    def to_json_obj(self) -> list:
        return [[float(x), float(y), float(th)] for x, y, th in self.points]

    @staticmethod
    def from_json_obj(obj) -> "NavigationPath":
        pts = np.asarray(obj, dtype=float)
        return NavigationPath.from_xy(pts[:, :2])


@dataclass(frozen=True)
class ReferencePath:
    """N+1 reference poses plus remaining arc length to the nav endpoint."""

    poses: np.ndarray  # (N+1, 3)
    remaining: np.ndarray  # (N+1,) arc length to endpoint, non-increasing
    docking: bool = False  # terminal-approach mode (poses pinned on the end)


def straight_line_path(start, goal) -> NavigationPath:
    return NavigationPath.from_xy([start, goal])


def _astar_cells(blocked: np.ndarray, start, goal):
    """8-connected A* over cells; returns the cell path or None."""
    h, w = blocked.shape
    if blocked[start] or blocked[goal]:
        return None
    moves = [
        (-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
        (-1, -1, _SQRT2), (-1, 1, _SQRT2), (1, -1, _SQRT2), (1, 1, _SQRT2),
    ]

    def heuristic(cell):
        dr = abs(cell[0] - goal[0])
        dc = abs(cell[1] - goal[1])
        return (dr + dc) + (_SQRT2 - 2.0) * min(dr, dc)

    g = {start: 0.0}
    parent = {}
    counter = 0
    open_heap = [(heuristic(start), counter, start)]
    closed = set()
    while open_heap:
        _, _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        for dr, dc, cost in moves:
            nr, nc = cur[0] + dr, cur[1] + dc
            if not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc]:
                continue
            # No diagonal corner cutting through blocked cells.
            if dr != 0 and dc != 0 and (blocked[cur[0], nc] or blocked[nr, cur[1]]):
                continue
            cand = g[cur] + cost
            nxt = (nr, nc)
            if cand < g.get(nxt, math.inf):
                g[nxt] = cand
                parent[nxt] = cur
                counter += 1
                heapq.heappush(open_heap, (cand + heuristic(nxt), counter, nxt))
    return None


def _segment_clear(p0, p1, tree: cKDTree, clearance: float, step: float) -> bool:
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    n = max(int(math.ceil(length / step)), 1)
    t = np.linspace(0.0, 1.0, n + 1)
    pts = np.outer(1.0 - t, p0) + np.outer(t, p1)
    return bool(tree.query(pts)[0].min() > clearance)


def _simplify(points, tree, dp_epsilon, clearance, step):
    """Douglas-Peucker that also refuses shortcuts violating clearance."""
    if len(points) <= 2:
        return list(points)
    p0, p1 = points[0], points[-1]
    d = np.hypot(p1[0] - p0[0], p1[1] - p0[1])
    if d > 0:
        # Perpendicular distance to the chord.
        dev = np.abs(
            (p1[0] - p0[0]) * (p0[1] - points[:, 1])
            - (p0[0] - points[:, 0]) * (p1[1] - p0[1])
        ) / d
    else:
        dev = np.hypot(points[:, 0] - p0[0], points[:, 1] - p0[1])
    k = int(np.argmax(dev))
    if dev[k] <= dp_epsilon and (tree is None or _segment_clear(p0, p1, tree, clearance, step)):
        return [points[0], points[-1]]
    left = _simplify(points[: k + 1], tree, dp_epsilon, clearance, step)
    right = _simplify(points[k:], tree, dp_epsilon, clearance, step)
    return left[:-1] + right


def plan_global(
    grid: OccupancyGrid,
    start,
    goal,
    clearance: float | None = None,
    dp_epsilon: float | None = None,
) -> NavigationPath:
    """A* on the clearance-inflated grid, then Douglas-Peucker simplification.

    A* blocks cells whose EDT is within clearance plus half a cell diagonal,
    so every continuous point of the cell-center polyline keeps the requested
    clearance from occupied cell centers; simplification keeps that guarantee
    by re-checking each shortcut.
    """
    if clearance is None:
        clearance = 0.3 + 0.05
    if dp_epsilon is None:
        dp_epsilon = 2.0 * grid.resolution
    occupied = grid.occupied_centers()
    if occupied.shape[0] == 0:
        return straight_line_path(start, goal)
    tree = cKDTree(occupied)
    if tree.query(np.asarray(start, dtype=float))[0] <= clearance:
        raise StartOccupied(f"start {start} within clearance {clearance} of occupied cells")
    if tree.query(np.asarray(goal, dtype=float))[0] <= clearance:
        raise GoalOccupied(f"goal {goal} within clearance {clearance} of occupied cells")
    gdt = build_grid_distance_transform(grid)
    margin = grid.resolution * _SQRT2 / 2.0
    blocked = gdt.distances <= clearance + margin
    start_cell = grid.world_to_cell(*start)
    goal_cell = grid.world_to_cell(*goal)
    if not (grid.in_bounds(*start_cell) and grid.in_bounds(*goal_cell)):
        raise NoPath("start or goal outside the grid extent")
    cells = _astar_cells(blocked, start_cell, goal_cell)
    if cells is None:
        raise NoPath(f"no 8-connected path from {start} to {goal}")
    poly = [np.asarray(start, dtype=float)]
    for cell in cells[1:-1]:
        poly.append(np.array(grid.cell_center(*cell)))
    poly.append(np.asarray(goal, dtype=float))
    poly = np.array(poly)
    keep = [poly[0]]
    for p in poly[1:]:
        if np.hypot(*(p - keep[-1])) > 1e-12:
            keep.append(p)
    if len(keep) < 2:
        keep.append(poly[-1] + np.array([1e-9, 0.0]))
    simplified = _simplify(np.array(keep), tree, dp_epsilon, clearance, grid.resolution / 4.0)
    return NavigationPath.from_xy(np.array(simplified))


def _closest_on_polyline(nav: NavigationPath, x: float, y: float):
    """(arc_length, segment_index) of the closest polyline point; ties go to
    the smaller arc length."""
    p = np.array([x, y])
    a = nav.points[:-1, :2]
    b = nav.points[1:, :2]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", proj - p, proj - p)
    idx = int(np.argmin(d2))  # argmin takes the first minimum: smaller index
    arc = nav.arc_lengths[idx] + t[idx] * math.sqrt(seg_len2[idx])
    return float(arc), idx


def reference_path(
    nav: NavigationPath,
    robot: RobotState,
    params: PlannerParams,
    lim: KinodynamicLimits,
) -> ReferencePath:
    """Reference poses spaced dt * v_max * max(cos(heading gap), 0) along the
    navigation path, starting from the closest point to the robot."""
    if nav.points.shape[0] < 2:
        raise EmptyPath("reference_path needs a navigation path with >= 2 points")
    arc0, seg_idx = _closest_on_polyline(nav, robot.x, robot.y)
    poses = np.empty((params.n + 1, 3))
    remaining = np.empty(params.n + 1)
    end = nav.points[-1]
    dist_end = math.hypot(end[0] - robot.x, end[1] - robot.y)
    if nav.total_length - arc0 <= DOCK_RANGE:
        # Terminal docking: every reference pose sits on the path end and
        # faces it from the robot, so the final approach is pulled straight
        # onto the endpoint instead of dithering between the path tangent
        # and the endpoint bearing.
        bearing = (
            math.atan2(end[1] - robot.y, end[0] - robot.x)
            if dist_end > 1e-9
            else float(end[2])
        )
        poses[:, 0] = end[0]
        poses[:, 1] = end[1]
        poses[:, 2] = bearing
        remaining[:] = dist_end
        return ReferencePath(poses, remaining, docking=True)
    tangent = float(nav.points[seg_idx, 2])
    gap = wrap_angle(robot.theta - tangent)
    spacing = params.dt * lim.v_max * max(math.cos(gap), 0.0)
    for i in range(params.n + 1):
        s = min(arc0 + i * spacing, nav.total_length)
        poses[i] = nav.point_at_arc(s)
        remaining[i] = nav.total_length - s
        if s >= nav.total_length:
            # Poses pinned at the path end orient toward the endpoint from
            # the robot, so a laterally offset final approach is pulled onto
            # the goal instead of stalling beside it.
            dx = poses[i, 0] - robot.x
            dy = poses[i, 1] - robot.y
            if math.hypot(dx, dy) > 1e-9:
                poses[i, 2] = math.atan2(dy, dx)
    return ReferencePath(poses, remaining)
