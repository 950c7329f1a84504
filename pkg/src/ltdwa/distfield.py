"""Time-varying distance fields built from agents and the occupancy grid.

Frame i combines an agent Gaussian field (constant-velocity propagated,
elongated ahead of moving agents) with a quadratic occupancy proximity
field: d_i = max(w_do * d_i_agents, w_db * d_i_grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .core import OccupancyGrid, PlannerParams, agents_array
from .errors import FrameOutOfRange


@dataclass(frozen=True)
class GridDistanceTransform:
    """Exact Euclidean distance (meters) from each cell center to the
    nearest occupied cell center; +inf everywhere when nothing is occupied."""

    origin: tuple
    resolution: float
    distances: np.ndarray  # (H, W) float64, meters
    has_occupied: bool

    def sample(self, x, y):
        """Border-clamped bilinear sample at continuous world coordinates."""
        if not self.has_occupied:
            return np.inf if np.ndim(x) == 0 else np.full(np.shape(x), np.inf)
        return kernels.bilinear_sample(
            self.distances, self.origin[0], self.origin[1], self.resolution, x, y
        )

    def sample_gradient(self, x: float, y: float) -> tuple:
        """Gradient of the bilinear distance surface (0 in clamped directions)."""
        if not self.has_occupied:
            return (0.0, 0.0)
        h, w = self.distances.shape
        gx = (x - self.origin[0]) / self.resolution - 0.5
        gy = (y - self.origin[1]) / self.resolution - 0.5
        x_clamped = not (0.0 <= gx <= w - 1.0)
        y_clamped = not (0.0 <= gy <= h - 1.0)
        gx = min(max(gx, 0.0), w - 1.0)
        gy = min(max(gy, 0.0), h - 1.0)
        c0 = min(max(int(gx), 0), w - 2)
        r0 = min(max(int(gy), 0), h - 2)
        fx = gx - c0
        fy = gy - r0
        v00 = self.distances[r0, c0]
        v01 = self.distances[r0, c0 + 1]
        v10 = self.distances[r0 + 1, c0]
        v11 = self.distances[r0 + 1, c0 + 1]
        dx = ((v01 - v00) * (1.0 - fy) + (v11 - v10) * fy) / self.resolution
        dy = ((v10 - v00) * (1.0 - fx) + (v11 - v01) * fx) / self.resolution
        return (0.0 if x_clamped else dx, 0.0 if y_clamped else dy)


def build_grid_distance_transform(grid: OccupancyGrid) -> GridDistanceTransform:
    """Exact EDT to occupied cell centers via scipy's exact transform."""
    if not grid.cells.any():
        return GridDistanceTransform(
            grid.origin, grid.resolution, np.full(grid.cells.shape, np.inf), False
        )
    dist_cells = ndimage.distance_transform_edt(~grid.cells)
    return GridDistanceTransform(
        grid.origin, grid.resolution, dist_cells * grid.resolution, True
    )


class TimeVaryingDistanceFields:
    """Immutable N+1 frame field stack; evaluation is thread-safe."""

    def __init__(self, agents, grid, params: PlannerParams, robot_radius: float,
                 time_varying: bool = True):
        self.params = params
        self.robot_radius = robot_radius
        self.n = params.n
        self.time_varying = time_varying
        arr = agents if isinstance(agents, np.ndarray) else agents_array(agents)
        arr = np.asarray(arr, dtype=float).reshape(-1, 5)
        if not time_varying:
            # Traditional-field ablation: agents frozen at frame 0 as static
            # isotropic discs; the grid component is time-invariant anyway.
            arr = arr.copy()
            arr[:, 2:4] = 0.0
        self.agents = arr
        if grid is None:
            self.gdt = None
        elif isinstance(grid, GridDistanceTransform):
            self.gdt = grid
        else:
            self.gdt = build_grid_distance_transform(grid)

    @property
    def grid_ctx(self):
        """(edt, origin_x, origin_y, resolution) for the kernels, or None."""
        if self.gdt is None or not self.gdt.has_occupied:
            return None
        return (
            self.gdt.distances,
            self.gdt.origin[0],
            self.gdt.origin[1],
            self.gdt.resolution,
        )

    def _check_frame(self, i: int) -> None:
        if not (0 <= i <= self.n):
            raise FrameOutOfRange(f"frame {i} outside [0, {self.n}]")

    def frame_time(self, i: int) -> float:
        """Prediction time offset of frame i (0 for the traditional field)."""
        return i * self.params.dt if self.time_varying else 0.0

    def agent_positions(self, i: int) -> np.ndarray:
        """Constant-velocity agent centers at frame i, shape (A, 2)."""
        self._check_frame(i)
        t = self.frame_time(i)
        return self.agents[:, :2] + t * self.agents[:, 2:4]

    def agent_value(self, i: int, x, y):
        self._check_frame(i)
        return kernels.agent_gauss(
            self.agents, self.frame_time(i), x, y,
            self.params.eta, self.params.beta, self.robot_radius,
        )

    def grid_value(self, x, y):
        """(Relu(eta - Relu(dist - R)))^2; time-invariant."""
        if self.grid_ctx is None:
            return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
        dist = self.gdt.sample(x, y)
        delta = np.maximum(dist - self.robot_radius, 0.0)
        rest = np.maximum(self.params.eta - delta, 0.0)
        out = rest * rest
        return float(out) if np.ndim(out) == 0 else out

    def value(self, i: int, x, y):
        self._check_frame(i)
        return np.maximum(
            self.params.w_do * self.agent_value(i, x, y),
            self.params.w_db * self.grid_value(x, y),
        )

    def _agent_gradient(self, i: int, x: float, y: float) -> tuple:
        if self.agents.shape[0] == 0:
            return (0.0, 0.0)
        t = self.frame_time(i)
        best_val, best_grad = -1.0, (0.0, 0.0)
        eta, beta, R = self.params.eta, self.params.beta, self.robot_radius
        for a in self.agents:
            cx = a[0] + t * a[2]
            cy = a[1] + t * a[3]
            dx, dy = x - cx, y - cy
            sig_y = (a[4] + R + eta) / 3.0
            speed = math.hypot(a[2], a[3])
            if speed > 0.0:
                cphi, sphi = a[2] / speed, a[3] / speed
                lx = dx * cphi + dy * sphi
                ly = -dx * sphi + dy * cphi
                sig_x = sig_y + beta * speed / 3.0 if lx > 0.0 else sig_y
            else:
                cphi, sphi = 1.0, 0.0
                lx, ly = dx, dy
                sig_x = sig_y
            val = math.exp(-(lx * lx / (2 * sig_x**2) + ly * ly / (2 * sig_y**2)))
            if val > best_val:
                ex = lx / sig_x**2
                ey = ly / sig_y**2
                best_val = val
                best_grad = (
                    -val * (ex * cphi - ey * sphi),
                    -val * (ex * sphi + ey * cphi),
                )
        return best_grad

    def _grid_gradient(self, x: float, y: float) -> tuple:
        if self.grid_ctx is None:
            return (0.0, 0.0)
        dist = self.gdt.sample(x, y)
        delta = dist - self.robot_radius
        if delta <= 0.0 or delta >= self.params.eta:
            return (0.0, 0.0)
        gx, gy = self.gdt.sample_gradient(x, y)
        scale = -2.0 * (self.params.eta - delta)
        return (scale * gx, scale * gy)

    def gradient(self, i: int, x: float, y: float) -> tuple:
        """Analytic gradient of the active max branch; ties go to the
        agent branch so Jacobians are deterministic."""
        self._check_frame(i)
        va = self.params.w_do * self.agent_value(i, x, y)
        vb = self.params.w_db * self.grid_value(x, y)
        if va >= vb:
            gx, gy = self._agent_gradient(i, x, y)
            return (self.params.w_do * gx, self.params.w_do * gy)
        gx, gy = self._grid_gradient(x, y)
        return (self.params.w_db * gx, self.params.w_db * gy)
