"""Tests for global planning and the per-frame reference path."""

import heapq
import math

import numpy as np
import pytest

from ltdwa import (
    GoalOccupied,
    KinodynamicLimits,
    NavigationPath,
    OccupancyGrid,
    PlannerParams,
    RobotState,
    plan_global,
    reference_path,
    straight_line_path,
)
from ltdwa.errors import EmptyPath, NoPath, StartOccupied
from ltdwa.navref import DOCK_RANGE, _astar_cells

PARAMS = PlannerParams()
LIM = KinodynamicLimits()
SQRT2 = math.sqrt(2.0)


def dijkstra_oracle(blocked, start, goal):
    """Brute-force shortest 8-connected path length over free cells, with
    the same no-corner-cutting rule; None if disconnected."""
    h, w = blocked.shape
    if blocked[start] or blocked[goal]:
        return None
    dist = {start: 0.0}
    heap = [(0.0, start)]
    done = set()
    moves = [
        (-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
        (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2),
    ]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        if cur == goal:
            return d
        done.add(cur)
        for dr, dc, cost in moves:
            nr, nc = cur[0] + dr, cur[1] + dc
            if not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc]:
                continue
            if dr != 0 and dc != 0 and (blocked[cur[0], nc] or blocked[nr, cur[1]]):
                continue
            nd = d + cost
            if nd < dist.get((nr, nc), math.inf):
                dist[(nr, nc)] = nd
                heapq.heappush(heap, (nd, (nr, nc)))
    return None


def path_length(cells):
    total = 0.0
    for a, b in zip(cells, cells[1:]):
        total += math.hypot(a[0] - b[0], a[1] - b[1])
    return total


def wall_grid():
    """10 m x 10 m arena with a vertical wall leaving a gap at the top."""
    cells = np.zeros((50, 50), dtype=bool)
    cells[0:42, 25] = True
    return OccupancyGrid((0.0, 0.0), 0.2, cells)


class TestNavigationPath:
    def test_straight_line(self):
        nav = straight_line_path((0.0, 0.0), (5.0, 0.0))
        assert nav.total_length == pytest.approx(5.0)
        assert nav.points.shape == (2, 3)
        assert nav.points[0, 2] == pytest.approx(0.0)

    def test_arc_lengths_strictly_increase(self):
        nav = NavigationPath.from_xy([(0, 0), (1, 0), (1, 2), (3, 2)])
        assert np.all(np.diff(nav.arc_lengths) > 0)
        assert nav.total_length == pytest.approx(5.0)

    def test_interior_theta_is_next_segment_direction(self):
        nav = NavigationPath.from_xy([(0, 0), (1, 0), (1, 2)])
        assert nav.points[0, 2] == pytest.approx(0.0)
        assert nav.points[1, 2] == pytest.approx(math.pi / 2)
        assert nav.points[2, 2] == pytest.approx(math.pi / 2)

    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError):
            NavigationPath.from_xy([(0, 0), (0, 0), (1, 0)])

    def test_single_point_rejected(self):
        with pytest.raises(EmptyPath):
            NavigationPath.from_xy([(0, 0)])

    def test_point_at_arc_clamps(self):
        nav = straight_line_path((0.0, 0.0), (2.0, 0.0))
        assert nav.point_at_arc(-1.0)[0] == pytest.approx(0.0)
        assert nav.point_at_arc(99.0)[0] == pytest.approx(2.0)
        assert nav.point_at_arc(0.5)[0] == pytest.approx(0.5)

    def test_json_roundtrip(self):
        nav = NavigationPath.from_xy([(0, 0), (1, 0), (1, 2)])
        back = NavigationPath.from_json_obj(nav.to_json_obj())
        np.testing.assert_allclose(back.points, nav.points)


class TestPlanGlobal:
    def test_empty_grid_straight_path(self):
        grid = OccupancyGrid((0.0, 0.0), 0.2, np.zeros((50, 50), dtype=bool))
        nav = plan_global(grid, (0.0, 0.0), (5.0, 0.0))
        assert nav.points.shape[0] == 2
        assert nav.total_length == pytest.approx(5.0)

    def test_goal_occupied(self):
        grid = wall_grid()
        with pytest.raises(GoalOccupied):
            plan_global(grid, (1.0, 1.0), (5.1, 4.0))

    def test_start_occupied(self):
        grid = wall_grid()
        with pytest.raises(StartOccupied):
            plan_global(grid, (5.1, 4.0), (1.0, 1.0))

    def test_no_path_when_enclosed(self):
        cells = np.zeros((30, 30), dtype=bool)
        cells[10, 10:20] = True
        cells[20, 10:20] = True
        cells[10:21, 10] = True
        cells[10:21, 19] = True
        grid = OccupancyGrid((0.0, 0.0), 0.2, cells)
        with pytest.raises(NoPath):
            plan_global(grid, (3.0, 3.0), (1.0, 1.0))

    def test_astar_matches_dijkstra_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            blocked = rng.random((25, 25)) < 0.25
            start = (0, 0)
            goal = (24, 24)
            blocked[start] = blocked[goal] = False
            cells = _astar_cells(blocked, start, goal)
            oracle = dijkstra_oracle(blocked, start, goal)
            if oracle is None:
                assert cells is None
            else:
                assert cells is not None
                assert path_length(cells) == pytest.approx(oracle, abs=1e-9)

    def test_wall_detour_keeps_clearance(self):
        grid = wall_grid()
        clearance = 0.35
        nav = plan_global(grid, (2.0, 2.0), (8.0, 2.0), clearance=clearance)
        occupied = grid.occupied_centers()
        for s in np.linspace(0.0, nav.total_length, 400):
            p = nav.point_at_arc(s)[:2]
            d = np.min(np.hypot(occupied[:, 0] - p[0], occupied[:, 1] - p[1]))
            assert d > clearance - 1e-9

    def test_wall_detour_length_bracket(self):
        # The simplified path is no longer than the grid path it came from
        # and no shorter than the straight-line distance (which the wall
        # makes infeasible).
        grid = wall_grid()
        nav = plan_global(grid, (2.0, 2.0), (8.0, 2.0))
        straight = 6.0
        assert nav.total_length > straight
        assert nav.total_length < 20.0


class TestReferencePath:
    def test_aligned_straight_line(self):
        nav = straight_line_path((0.0, 0.0), (10.0, 0.0))
        robot = RobotState(0.0, 0.0, 0.0, 0.0, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        assert ref.poses.shape == (16, 3)
        for i in range(16):
            assert ref.poses[i, 0] == pytest.approx(0.2 * i, abs=1e-12)
            assert ref.poses[i, 1] == pytest.approx(0.0, abs=1e-12)
            assert ref.poses[i, 2] == pytest.approx(0.0, abs=1e-12)
            assert ref.remaining[i] == pytest.approx(10.0 - 0.2 * i)
        assert not ref.docking

    def test_misaligned_robot_is_stationary(self):
        nav = straight_line_path((0.0, 0.0), (10.0, 0.0))
        robot = RobotState(0.0, 0.0, math.pi / 2, 0.0, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        np.testing.assert_allclose(
            ref.poses, np.tile(ref.poses[0], (16, 1)), atol=1e-12
        )
        assert ref.remaining[0] == pytest.approx(10.0)

    def test_remaining_clamps_at_endpoint(self):
        nav = straight_line_path((0.0, 0.0), (2.0, 0.0))
        robot = RobotState(1.5, 0.0, 0.0, 0.0, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        assert not ref.docking
        expected = [0.5, 0.3, 0.1] + [0.0] * 13
        np.testing.assert_allclose(ref.remaining, expected, atol=1e-12)
        for i in range(3, 16):
            assert ref.poses[i, 0] == pytest.approx(2.0)

    def test_remaining_non_increasing(self):
        nav = NavigationPath.from_xy([(0, 0), (2, 0), (2, 1)])
        robot = RobotState(0.3, 0.1, 0.2, 0.5, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        assert np.all(np.diff(ref.remaining) <= 1e-12)
        assert np.all(ref.remaining >= 0.0)

    def test_closest_point_tie_goes_to_smaller_arc(self):
        # Robot equidistant from both legs of a right angle.
        nav = NavigationPath.from_xy([(0, 0), (2, 0), (2, 2)])
        robot = RobotState(1.0, 1.0, 0.0, 0.0, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        assert ref.poses[0, 0] == pytest.approx(1.0)
        assert ref.poses[0, 1] == pytest.approx(0.0)

    def test_poses_lie_on_polyline(self):
        nav = NavigationPath.from_xy([(0, 0), (1.5, 0.5), (3.0, 0.0), (4.0, 2.0)])
        robot = RobotState(0.2, 0.1, 0.3, 0.4, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        for pose in ref.poses:
            best = math.inf
            for a, b in zip(nav.points[:-1, :2], nav.points[1:, :2]):
                ab = b - a
                t = np.clip(np.dot(pose[:2] - a, ab) / np.dot(ab, ab), 0.0, 1.0)
                best = min(best, np.hypot(*(a + t * ab - pose[:2])))
            assert best < 1e-9

    def test_constant_spacing_until_clamp(self):
        nav = straight_line_path((0.0, 0.0), (10.0, 0.0))
        robot = RobotState(0.0, 0.0, 0.4, 0.0, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        spacing = 0.2 * math.cos(0.4)
        steps = np.diff(ref.poses[:, 0])
        np.testing.assert_allclose(steps, spacing, atol=1e-12)

    def test_docking_mode_near_endpoint(self):
        nav = straight_line_path((0.0, 0.0), (2.0, 0.0))
        robot = RobotState(2.0 - 0.5 * DOCK_RANGE, 0.1, 1.0, 0.0, 0.0)
        ref = reference_path(nav, robot, PARAMS, LIM)
        assert ref.docking
        dist = math.hypot(2.0 - robot.x, 0.0 - robot.y)
        bearing = math.atan2(-robot.y, 2.0 - robot.x)
        for i in range(16):
            assert ref.poses[i, 0] == pytest.approx(2.0)
            assert ref.poses[i, 1] == pytest.approx(0.0)
            assert ref.poses[i, 2] == pytest.approx(bearing)
            assert ref.remaining[i] == pytest.approx(dist)

    def test_short_path_rejected(self):
        nav = straight_line_path((0.0, 0.0), (1.0, 0.0))
        bad = NavigationPath(nav.points[:1], nav.arc_lengths[:1])
        with pytest.raises(EmptyPath):
            reference_path(bad, RobotState(0, 0, 0, 0, 0), PARAMS, LIM)
