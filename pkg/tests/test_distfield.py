"""Tests for the time-varying distance fields."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltdwa import (
    Agent,
    FrameOutOfRange,
    GridDistanceTransform,
    OccupancyGrid,
    PlannerParams,
    TimeVaryingDistanceFields,
    build_grid_distance_transform,
)

R = 0.3  # robot radius used throughout


def make_fields(agents, grid=None, time_varying=True, **overrides):
    params = PlannerParams(**overrides)
    return TimeVaryingDistanceFields(agents, grid, params, R, time_varying=time_varying)


class TestAgentField:
    def test_value_at_center_is_one(self):
        f = make_fields([Agent(1.0, 0.0, 0.0, 0.0, 0.3)])
        assert f.agent_value(0, 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_far_field_decays_to_zero(self):
        f = make_fields([Agent(1.0, 0.0, 0.0, 0.0, 0.3)])
        assert f.agent_value(0, 100.0, 100.0) < 1e-12

    def test_isotropic_hand_value(self):
        # sigma = (r + R + eta) / 3 = 0.3; at offset 0.3 the value is exp(-1/2)
        f = make_fields([Agent(1.0, 0.0, 0.0, 0.0, 0.3)])
        expected = math.exp(-0.5)
        assert f.agent_value(0, 1.3, 0.0) == pytest.approx(expected, rel=1e-9)
        assert expected == pytest.approx(0.60653, abs=5e-6)

    def test_propagated_center_behind_is_isotropic(self):
        # Unit frame spacing: after one frame the center moves to (1, 0).
        # Query (0.5, 0) sits behind the moving agent, so the narrow sigma
        # applies in both axes: exp(-0.25 / 0.18).
        f = make_fields([Agent(0.0, 0.0, 1.0, 0.0, 0.3)], dt=1.0)
        expected = math.exp(-0.25 / 0.18)
        assert f.agent_value(1, 0.5, 0.0) == pytest.approx(expected, rel=1e-9)
        assert expected == pytest.approx(0.2494, abs=5e-5)

    def test_elongated_ahead_of_motion(self):
        # Ahead of a moving agent the field decays slower than behind it.
        f = make_fields([Agent(0.0, 0.0, 1.0, 0.0, 0.3)])
        ahead = f.agent_value(0, 0.6, 0.0)
        behind = f.agent_value(0, -0.6, 0.0)
        assert ahead > behind

    def test_empty_agent_list_is_zero(self):
        f = make_fields([])
        assert f.agent_value(0, 0.0, 0.0) == 0.0
        assert f.value(3, 1.0, -2.0) == 0.0

    def test_max_over_agents(self):
        a1 = Agent(0.0, 0.0, 0.0, 0.0, 0.3)
        a2 = Agent(5.0, 0.0, 0.0, 0.0, 0.3)
        both = make_fields([a1, a2])
        solo1 = make_fields([a1])
        solo2 = make_fields([a2])
        for x in (-0.5, 0.0, 2.5, 5.0, 6.0):
            expected = max(solo1.agent_value(0, x, 0.0), solo2.agent_value(0, x, 0.0))
            assert both.agent_value(0, x, 0.0) == pytest.approx(expected, rel=1e-12)

    @given(
        vx=st.floats(-1.0, 1.0),
        vy=st.floats(-1.0, 1.0),
        x=st.floats(-3.0, 3.0),
        y=st.floats(-3.0, 3.0),
        i=st.integers(0, 15),
    )
    @settings(max_examples=60, deadline=None)
    def test_translation_covariance(self, vx, vy, x, y, i):
        # A constant-velocity agent's frame-i field equals its frame-0
        # field sampled at the back-propagated query point.
        moving = make_fields([Agent(0.0, 0.0, vx, vy, 0.3)])
        t = i * moving.params.dt
        vi = moving.agent_value(i, x, y)
        v0 = moving.agent_value(0, x - t * vx, y - t * vy)
        assert vi == pytest.approx(v0, abs=1e-12)

    @given(
        x=st.floats(-5.0, 5.0),
        y=st.floats(-5.0, 5.0),
        i=st.integers(0, 15),
    )
    @settings(max_examples=50, deadline=None)
    def test_bounded_in_unit_interval(self, x, y, i):
        f = make_fields([Agent(1.0, -0.5, 0.4, 0.3, 0.25), Agent(-2.0, 2.0, 0.0, 0.0, 0.4)])
        v = f.agent_value(i, x, y)
        assert 0.0 <= v <= 1.0


class TestGridDistanceTransform:
    def test_single_occupied_cell_center_is_zero(self):
        cells = np.zeros((5, 5), dtype=bool)
        cells[2, 2] = True
        gdt = build_grid_distance_transform(OccupancyGrid((0.0, 0.0), 1.0, cells))
        assert gdt.sample(2.5, 2.5) == pytest.approx(0.0, abs=1e-12)

    def test_empty_grid_is_infinite(self):
        gdt = build_grid_distance_transform(
            OccupancyGrid((0.0, 0.0), 1.0, np.zeros((4, 4), dtype=bool))
        )
        assert not gdt.has_occupied
        assert gdt.sample(1.0, 1.0) == math.inf

    def test_matches_brute_force_on_random_grids(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            cells = rng.random((50, 50)) < 0.05
            if not cells.any():
                cells[25, 25] = True
            grid = OccupancyGrid((-1.0, 2.0), 0.1, cells)
            gdt = build_grid_distance_transform(grid)
            occupied = grid.occupied_centers()
            rows, cols = np.nonzero(~cells)
            # Spot-check a deterministic subset of free cells against a
            # brute-force nearest-occupied-center scan.
            for r, c in zip(rows[::37], cols[::37]):
                cx, cy = grid.cell_center(r, c)
                brute = np.min(np.hypot(occupied[:, 0] - cx, occupied[:, 1] - cy))
                assert gdt.distances[r, c] == pytest.approx(brute, abs=1e-9)

    def test_lipschitz_between_neighbors(self):
        rng = np.random.default_rng(3)
        cells = rng.random((30, 30)) < 0.08
        cells[10, 10] = True
        grid = OccupancyGrid((0.0, 0.0), 0.5, cells)
        d = build_grid_distance_transform(grid).distances
        bound = grid.resolution * math.sqrt(2.0) + 1e-9
        assert np.max(np.abs(np.diff(d, axis=0))) <= bound
        assert np.max(np.abs(np.diff(d, axis=1))) <= bound

    def test_bilinear_sample_clamps_outside(self):
        cells = np.zeros((4, 4), dtype=bool)
        cells[0, 0] = True
        grid = OccupancyGrid((0.0, 0.0), 1.0, cells)
        gdt = build_grid_distance_transform(grid)
        corner = gdt.sample(3.5, 3.5)  # farthest in-grid cell center
        assert gdt.sample(100.0, 100.0) == pytest.approx(corner, abs=1e-12)


class TestGridField:
    @staticmethod
    def fields_with_distance(dist):
        """One-cell transform whose sampled distance equals ``dist``."""
        gdt = GridDistanceTransform(
            (0.0, 0.0), 1.0, np.full((2, 2), float(dist)), True
        )
        return make_fields([], grid=gdt)

    def test_inside_radius_saturates_to_eta_squared(self):
        f = self.fields_with_distance(0.2)
        assert f.grid_value(0.5, 0.5) == pytest.approx(0.09, abs=1e-12)

    def test_support_boundary(self):
        f = self.fields_with_distance(0.6)  # R + eta
        assert f.grid_value(0.5, 0.5) == 0.0
        assert self.fields_with_distance(2.0).grid_value(0.5, 0.5) == 0.0

    def test_quadratic_hand_value(self):
        f = self.fields_with_distance(0.45)
        assert f.grid_value(0.5, 0.5) == pytest.approx(0.0225, abs=1e-12)

    def test_time_invariant(self):
        cells = np.zeros((10, 10), dtype=bool)
        cells[4, 4] = True
        grid = OccupancyGrid((0.0, 0.0), 0.2, cells)
        f = make_fields([], grid=grid)
        v0 = f.value(0, 1.0, 1.0)
        for i in range(1, 16):
            assert f.value(i, 1.0, 1.0) == v0


class TestCombinedField:
    def test_agent_peak_composes_with_weight(self):
        f = make_fields([Agent(1.0, 0.0, 0.0, 0.0, 0.3)])
        assert f.value(0, 1.0, 0.0) == pytest.approx(600.0, rel=1e-12)

    def test_grid_branch_composes_with_weight(self):
        f = TestGridField.fields_with_distance(0.45)
        assert f.value(0, 0.5, 0.5) == pytest.approx(4.5, abs=1e-10)

    def test_empty_world_is_zero_everywhere(self):
        f = make_fields([])
        for i in range(16):
            assert f.value(i, -3.0, 7.0) == 0.0

    def test_frame_out_of_range(self):
        f = make_fields([Agent(0.0, 0.0, 0.0, 0.0, 0.3)])
        with pytest.raises(FrameOutOfRange):
            f.value(16, 0.0, 0.0)
        with pytest.raises(FrameOutOfRange):
            f.value(-1, 0.0, 0.0)

    @given(x=st.floats(-4.0, 4.0), y=st.floats(-4.0, 4.0), i=st.integers(0, 15))
    @settings(max_examples=50, deadline=None)
    def test_nonnegative_and_bounded(self, x, y, i):
        cells = np.zeros((8, 8), dtype=bool)
        cells[3, 3] = True
        grid = OccupancyGrid((-2.0, -2.0), 0.5, cells)
        f = make_fields([Agent(1.0, 1.0, 0.5, 0.0, 0.3)], grid=grid)
        v = f.value(i, x, y)
        cap = max(f.params.w_do, f.params.w_db * f.params.eta**2)
        assert 0.0 <= v <= cap + 1e-9


class TestGradient:
    def test_zero_at_isotropic_agent_center(self):
        f = make_fields([Agent(1.0, 2.0, 0.0, 0.0, 0.3)])
        gx, gy = f.gradient(0, 1.0, 2.0)
        assert gx == pytest.approx(0.0, abs=1e-12)
        assert gy == pytest.approx(0.0, abs=1e-12)

    def test_zero_in_empty_world(self):
        f = make_fields([])
        assert f.gradient(5, 1.0, 1.0) == (0.0, 0.0)

    @staticmethod
    def fd_gradient(f, i, x, y, h=1e-5):
        return (
            (f.value(i, x + h, y) - f.value(i, x - h, y)) / (2 * h),
            (f.value(i, x, y + h) - f.value(i, x, y - h)) / (2 * h),
        )

    def test_matches_finite_differences_near_agent(self):
        f = make_fields([Agent(0.0, 0.0, 0.6, 0.2, 0.3)])
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(60):
            x, y = rng.uniform(-1.5, 1.5, size=2)
            i = int(rng.integers(0, 16))
            # Skip the anisotropy seam (query aligned sideways to motion),
            # where the surface is only C0.
            cx, cy = f.agent_positions(i)[0]
            lx = (x - cx) * 0.6 + (y - cy) * 0.2
            if abs(lx) < 1e-2:
                continue
            ax, ay = f.gradient(i, x, y)
            nx, ny = self.fd_gradient(f, i, x, y)
            scale = max(1.0, abs(nx), abs(ny))
            assert abs(ax - nx) / scale < 1e-4
            assert abs(ay - ny) / scale < 1e-4
            checked += 1
        assert checked > 30

    def test_matches_finite_differences_on_grid_branch(self):
        cells = np.zeros((20, 20), dtype=bool)
        cells[10, 10] = True
        grid = OccupancyGrid((0.0, 0.0), 0.1, cells)
        f = make_fields([], grid=grid)
        # Points in the quadratic shell around the occupied cell, chosen
        # off the cell-center lattice lines where the bilinear surface
        # has kinks.
        for x, y in [(1.43, 1.08), (1.07, 1.44), (0.72, 1.09)]:
            ax, ay = f.gradient(0, x, y)
            nx, ny = self.fd_gradient(f, 0, x, y)
            scale = max(1.0, abs(nx), abs(ny))
            assert abs(ax - nx) / scale < 1e-3
            assert abs(ay - ny) / scale < 1e-3


class TestTraditionalMode:
    def test_moving_agent_is_frozen(self):
        f = make_fields([Agent(0.0, 0.0, 1.0, 0.0, 0.3)], time_varying=False)
        v0 = f.value(0, 0.4, 0.1)
        assert f.value(10, 0.4, 0.1) == v0

    def test_frozen_agent_is_isotropic(self):
        f = make_fields([Agent(0.0, 0.0, 1.0, 0.0, 0.3)], time_varying=False)
        assert f.agent_value(0, 0.6, 0.0) == pytest.approx(
            f.agent_value(0, -0.6, 0.0), rel=1e-12
        )
