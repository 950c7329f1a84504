import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltdwa.core import (
    Agent,
    ControlInput,
    KinodynamicLimits,
    OccupancyGrid,
    PlannerParams,
    RobotState,
    clamp_to_limits,
    dynamic_window,
    step_dynamics,
    wrap_angle,
)
from ltdwa.errors import ConfigError

LIM = KinodynamicLimits()


class TestWrapAngle:
    def test_identity_inside_range(self):
        assert wrap_angle(0.5) == 0.5
        assert wrap_angle(-3.0) == -3.0

    def test_pi_maps_to_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    @given(st.floats(-1000.0, 1000.0))
    def test_range_and_equivalence(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi + 1e-12
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


class TestStepDynamics:
    def test_straight_x(self):
        s = step_dynamics(RobotState(0, 0, 0, 1, 0), ControlInput(0, 0), 0.2)
        assert s.as_array() == pytest.approx([0.2, 0, 0, 1, 0])

    def test_straight_y(self):
        s = step_dynamics(RobotState(0, 0, math.pi / 2, 1, 0), ControlInput(0, 0), 0.2)
        assert s.as_array() == pytest.approx([0, 0.2, math.pi / 2, 1, 0], abs=1e-15)

    def test_one_euler_step_hand_value(self):
        # x += dt*v*cos(theta); y += dt*v*sin(theta); theta += dt*omega;
        # then v += dt*a_v, omega += dt*a_omega.
        s = step_dynamics(RobotState(0, 0, 0, 0.5, 0.5), ControlInput(1, -1), 0.2)
        assert s.as_array() == pytest.approx([0.1, 0, 0.1, 0.7, 0.3])

    def test_theta_always_wrapped(self):
        s = RobotState(0, 0, 3.0, 0, 1)
        for _ in range(40):
            s = step_dynamics(s, ControlInput(0, 0), 0.2)
            assert -math.pi < s.theta <= math.pi

    @given(
        st.floats(-5, 5), st.floats(-5, 5), st.floats(-10, 10),
        st.floats(0, 1), st.floats(-1, 1),
        st.floats(-1, 1), st.floats(-1, 1),
    )
    @settings(max_examples=200)
    def test_matches_independent_euler(self, x, y, th, v, om, av, aw):
        s = step_dynamics(RobotState(x, y, th, v, om), ControlInput(av, aw), 0.2)
        thw = wrap_angle(th)
        assert s.x == pytest.approx(x + 0.2 * v * math.cos(thw), abs=1e-12)
        assert s.y == pytest.approx(y + 0.2 * v * math.sin(thw), abs=1e-12)
        assert s.theta == pytest.approx(wrap_angle(thw + 0.2 * om), abs=1e-12)
        assert s.v == pytest.approx(v + 0.2 * av)
        assert s.omega == pytest.approx(om + 0.2 * aw)


class TestClampToLimits:
    def test_v_clamped(self):
        s = clamp_to_limits(RobotState(0, 0, 0, 1.2, 0), LIM)
        assert s.v == 1.0

    def test_identity_when_feasible(self):
        s0 = RobotState(1, 2, 0.3, 0.5, -0.5)
        assert clamp_to_limits(s0, LIM) == s0

    def test_omega_clamped(self):
        s = clamp_to_limits(RobotState(0, 0, 0, 0, -1.5), LIM)
        assert s.omega == -1.0


class TestDynamicWindow:
    def test_from_rest(self):
        box = dynamic_window(RobotState(0, 0, 0, 0, 0), LIM, 0.2)
        assert (box.v_lo, box.v_hi) == pytest.approx((0.0, 0.2))

    def test_at_v_max(self):
        box = dynamic_window(RobotState(0, 0, 0, 1, 0), LIM, 0.2)
        assert (box.v_lo, box.v_hi) == pytest.approx((0.8, 1.0))

    def test_omega_symmetric(self):
        box = dynamic_window(RobotState(0, 0, 0, 0, 0), LIM, 0.2)
        assert (box.omega_lo, box.omega_hi) == pytest.approx((-0.2, 0.2))

    def test_infeasible_velocity_collapses(self):
        # v above v_max: the window collapses onto the nearest bound.
        box = dynamic_window(RobotState(0, 0, 0, 1.5, 0), LIM, 0.2)
        assert box.v_lo == box.v_hi == 1.0
        assert box.clamped

    @given(st.floats(0, 1), st.floats(-1, 1))
    def test_window_inside_box(self, v, om):
        box = dynamic_window(RobotState(0, 0, 0, v, om), LIM, 0.2)
        assert LIM.v_min <= box.v_lo <= box.v_hi <= LIM.v_max
        assert LIM.omega_min <= box.omega_lo <= box.omega_hi <= LIM.omega_max


class TestPlannerParams:
    def test_defaults(self):
        p = PlannerParams()
        assert p.n == 15
        assert p.dt == 0.2
        assert p.w_do == 600.0
        assert p.w_db == 200.0
        assert p.eta == 0.3
        assert p.beta == 1.0
        assert p.v_samples == 8
        assert p.k_prime == 400
        assert p.w_voxels == 12
        assert p.gamma == 0.9
        assert p.w_c == 1.0
        assert p.w_no == 5.0
        assert p.w_na == 1.0
        assert p.w_nt == 0.5
        assert p.w_nv == 0.1
        assert p.w_omega == 0.1
        assert p.w_a_v == 0.1
        assert p.w_a_omega == 0.1

    def test_json_roundtrip(self, tmp_path):
        p = PlannerParams(n=10, gamma=0.8)
        f = tmp_path / "p.json"
        f.write_text(json.dumps(p.to_dict()))
        assert PlannerParams.from_json(f) == p

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            PlannerParams.from_dict({"n": 15, "bogus": 1})

    def test_invalid_values_rejected(self):
        with pytest.raises((ConfigError, ValueError)):
            PlannerParams.from_dict({"n": 0})
        with pytest.raises((ConfigError, ValueError)):
            PlannerParams.from_dict({"gamma": -0.1})


class TestKinodynamicLimits:
    def test_defaults_match_robot_platform(self):
        assert LIM.v_min == 0.0 and LIM.v_max == 1.0
        assert LIM.omega_min == -1.0 and LIM.omega_max == 1.0
        assert LIM.a_v_min == -1.0 and LIM.a_v_max == 1.0
        assert LIM.radius == 0.3
        assert LIM.sensing_range == 3.5

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            KinodynamicLimits(v_min=1.0, v_max=0.0)


class TestRobotState:
    def test_theta_wrapped_on_construction(self):
        s = RobotState(0, 0, 4.0, 0, 0)
        assert -math.pi < s.theta <= math.pi

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            RobotState(math.nan, 0, 0, 0, 0)

    def test_array_roundtrip(self):
        s = RobotState(1, 2, 0.5, 0.3, -0.2)
        assert RobotState.from_array(s.as_array()) == s


class TestOccupancyGrid:
    def test_world_cell_mapping(self):
        g = OccupancyGrid((1.0, 2.0), 0.5, np.zeros((4, 6), dtype=bool))
        assert g.world_to_cell(1.0, 2.0) == (0, 0)
        assert g.world_to_cell(1.6, 2.6) == (1, 1)

    def test_occupied_centers(self):
        cells = np.zeros((3, 3), dtype=bool)
        cells[1, 2] = True
        g = OccupancyGrid((0.0, 0.0), 1.0, cells)
        centers = g.occupied_centers()
        assert centers.shape == (1, 2)
        assert centers[0] == pytest.approx([2.5, 1.5])

    def test_file_roundtrip(self, tmp_path):
        cells = np.zeros((3, 4), dtype=bool)
        cells[0, 1] = True
        cells[2, 3] = True
        g = OccupancyGrid((-1.0, 0.5), 0.25, cells)
        f = tmp_path / "g.grid"
        g.to_file(f)
        g2 = OccupancyGrid.from_file(f)
        assert g2.origin == g.origin
        assert g2.resolution == g.resolution
        assert np.array_equal(g2.cells, g.cells)


class TestAgent:
    def test_fields(self):
        a = Agent(1, 2, 0.5, -0.5, 0.3)
        assert (a.x, a.y, a.vx, a.vy, a.r) == (1, 2, 0.5, -0.5, 0.3)
