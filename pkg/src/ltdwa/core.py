"""Domain types, differential-drive kinodynamics and shared parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    wrapped = np.mod(theta + np.pi, TWO_PI)
    wrapped = np.where(wrapped <= 0.0, wrapped + TWO_PI, wrapped)
    return wrapped - np.pi


def angle_diff(a: float, b: float) -> float:
    """Shortest signed difference a - b, in (-pi, pi]."""
    return wrap_angle(a - b)


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name}: non-finite field value {v!r}")


@dataclass(frozen=True)
class RobotState:
    """Planar state (x, y, theta, v, omega); theta kept in (-pi, pi]."""

    x: float
    y: float
    theta: float
    v: float
    omega: float

    def __post_init__(self):
        _check_finite("RobotState", self.x, self.y, self.theta, self.v, self.omega)
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.omega])

    @staticmethod
    def from_array(a) -> "RobotState":
        return RobotState(float(a[0]), float(a[1]), float(a[2]), float(a[3]), float(a[4]))


@dataclass(frozen=True)
class ControlInput:
    """Linear and angular acceleration command."""

    a_v: float
    a_omega: float

    def __post_init__(self):
        _check_finite("ControlInput", self.a_v, self.a_omega)


@dataclass(frozen=True)
class KinodynamicLimits:
    v_min: float = 0.0
    v_max: float = 1.0
    omega_min: float = -1.0
    omega_max: float = 1.0
    a_v_min: float = -1.0
    a_v_max: float = 1.0
    a_omega_min: float = -1.0
    a_omega_max: float = 1.0
    radius: float = 0.3
    sensing_range: float = 3.5

    def __post_init__(self):
        pairs = [
            (self.v_min, self.v_max),
            (self.omega_min, self.omega_max),
            (self.a_v_min, self.a_v_max),
            (self.a_omega_min, self.a_omega_max),
        ]
        if any(lo >= hi for lo, hi in pairs):
            raise ValueError("KinodynamicLimits: each min must be < max")
        if self.radius <= 0 or self.sensing_range <= 0:
            raise ValueError("KinodynamicLimits: radius and sensing_range must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.v_min,
                self.v_max,
                self.omega_min,
                self.omega_max,
                self.a_v_min,
                self.a_v_max,
                self.a_omega_min,
                self.a_omega_max,
            ]
        )


@dataclass(frozen=True)
class Agent:
    """Disc agent with a constant-velocity motion prior."""

    x: float
    y: float
    vx: float
    vy: float
    r: float

    def __post_init__(self):
        _check_finite("Agent", self.x, self.y, self.vx, self.vy, self.r)
        if self.r <= 0:
            raise ValueError("Agent: r must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy, self.r])


def agents_array(agents) -> np.ndarray:
    """Stack agents into an (A, 5) array of (x, y, vx, vy, r)."""
    if len(agents) == 0:
        return np.zeros((0, 5))
    return np.stack([a.as_array() for a in agents])


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy grid; ``origin`` is the world position of the
    lower-left corner of cell (0, 0); cells are indexed [row, col]."""

    origin: tuple
    resolution: float
    cells: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("OccupancyGrid: resolution must be > 0")
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=bool))

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def cell_center(self, row: int, col: int) -> tuple:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def occupied_centers(self) -> np.ndarray:
        """World coordinates of all occupied cell centers, shape (B, 2)."""
        rows, cols = np.nonzero(self.cells)
        xs = self.origin[0] + (cols + 0.5) * self.resolution
        ys = self.origin[1] + (rows + 0.5) * self.resolution
        return np.column_stack([xs, ys])

    def world_to_cell(self, x: float, y: float) -> tuple:
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        return row, col

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    # P2-style ASCII format: header "LTGRID", width, height, resolution,
    # origin_x, origin_y, then height rows of width 0/1 entries.
    @staticmethod
    def from_file(path) -> "OccupancyGrid":
        tokens = Path(path).read_text().split()
        if not tokens or tokens[0] != "LTGRID":
            raise ConfigError(f"{path}: missing LTGRID header")
        try:
            width, height = int(tokens[1]), int(tokens[2])
            resolution = float(tokens[3])
            origin = (float(tokens[4]), float(tokens[5]))
            data = np.array([int(t) for t in tokens[6 : 6 + width * height]])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}: malformed grid file: {exc}") from exc
        if data.size != width * height:
            raise ConfigError(f"{path}: expected {width * height} cells, got {data.size}")
        return OccupancyGrid(origin, resolution, data.reshape(height, width) != 0)

    def to_file(self, path) -> None:
        lines = [
            "LTGRID",
            f"{self.width} {self.height}",
            f"{self.resolution!r}",
            f"{self.origin[0]!r} {self.origin[1]!r}",
        ]
        for row in self.cells:
            lines.append(" ".join("1" if c else "0" for c in row))
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class PlannerParams:
    """All planner parameters, one source of truth.

    JSON field names match the symbol column used throughout the package
    (n, dt, w_do, ...); defaults are the experiment values.
    """

    n: int = 15
    dt: float = 0.2
    w_do: float = 600.0
    w_db: float = 200.0
    eta: float = 0.3
    beta: float = 1.0
    v_samples: int = 8
    k_prime: int = 400
    w_voxels: int = 12
    gamma: float = 0.9
    w_c: float = 1.0
    w_no: float = 5.0
    w_na: float = 1.0
    w_nt: float = 0.5
    w_nv: float = 0.1
    w_omega: float = 0.1
    w_a_v: float = 0.1
    w_a_omega: float = 0.1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("PlannerParams: n must be >= 1")
        if self.dt <= 0:
            raise ValueError("PlannerParams: dt must be > 0")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("PlannerParams: gamma must be in (0, 1]")
        if self.v_samples < 2 or self.w_voxels < 1 or self.k_prime < 1:
            raise ValueError("PlannerParams: v_samples >= 2, w_voxels >= 1, k_prime >= 1")
        weights = [
            self.w_do, self.w_db, self.w_c, self.w_no, self.w_na, self.w_nt,
            self.w_nv, self.w_omega, self.w_a_v, self.w_a_omega,
        ]
        if any(w < 0 for w in weights):
            raise ValueError("PlannerParams: weights must be >= 0")

    @staticmethod
    def from_json(path) -> "PlannerParams":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return PlannerParams.from_dict(data)

    @staticmethod
    def from_dict(data: dict) -> "PlannerParams":
        known = {f.name for f in fields(PlannerParams)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown planner parameter(s): {sorted(unknown)}")
        try:
            return PlannerParams(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, **kwargs) -> "PlannerParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class VelocityBox:
    """Reachable velocity window [v_lo, v_hi] x [omega_lo, omega_hi]."""

    v_lo: float
    v_hi: float
    omega_lo: float
    omega_hi: float
    clamped: bool = False

    def contains(self, v: float, omega: float, tol: float = 1e-12) -> bool:
        return (
            self.v_lo - tol <= v <= self.v_hi + tol
            and self.omega_lo - tol <= omega <= self.omega_hi + tol
        )


def step_dynamics(s: RobotState, u: ControlInput, dt: float) -> RobotState:
    """One explicit Euler step: pose advances with the current (v, omega),
    then velocities advance with the commanded accelerations."""
    if dt <= 0:
        raise ValueError("step_dynamics: dt must be > 0")
    return RobotState(
        x=s.x + dt * s.v * math.cos(s.theta),
        y=s.y + dt * s.v * math.sin(s.theta),
        theta=wrap_angle(s.theta + dt * s.omega),
        v=s.v + dt * u.a_v,
        omega=s.omega + dt * u.a_omega,
    )


def clamp_to_limits(s: RobotState, lim: KinodynamicLimits) -> RobotState:
    v = min(max(s.v, lim.v_min), lim.v_max)
    omega = min(max(s.omega, lim.omega_min), lim.omega_max)
    if v == s.v and omega == s.omega:
        return s
    return RobotState(s.x, s.y, s.theta, v, omega)


def dynamic_window(s: RobotState, lim: KinodynamicLimits, dt: float) -> VelocityBox:
    """Velocity box reachable within one step under acceleration limits,
    intersected with the absolute velocity box.

    A state outside the recoverable window yields an empty intersection;
    the window then collapses to the nearest feasible point and is flagged.
    """
    if dt <= 0:
        raise ValueError("dynamic_window: dt must be > 0")
    v_lo = max(lim.v_min, s.v + lim.a_v_min * dt)
    v_hi = min(lim.v_max, s.v + lim.a_v_max * dt)
    w_lo = max(lim.omega_min, s.omega + lim.a_omega_min * dt)
    w_hi = min(lim.omega_max, s.omega + lim.a_omega_max * dt)
    clamped = False
    if v_lo > v_hi:
        v_lo = v_hi = lim.v_min if s.v < lim.v_min else lim.v_max
        clamped = True
    if w_lo > w_hi:
        w_lo = w_hi = lim.omega_min if s.omega < lim.omega_min else lim.omega_max
        clamped = True
    return VelocityBox(v_lo, v_hi, w_lo, w_hi, clamped)
