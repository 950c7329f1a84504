"""Elastic-band MPC refinement: unary/binary residual edges over the state
sequence, a damped least-squares (Levenberg-Marquardt) solve, and the
feasibility projection that turns the optimum into an executable rollout.

Box constraints become soft one-sided quadratic hinges with a large fixed
weight; the exact dynamics are enforced the same way and restored exactly by
the post-solve projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ControlInput,
    KinodynamicLimits,
    PlannerParams,
    RobotState,
    wrap_angle,
    wrap_angle_array,
)
from .distfield import TimeVaryingDistanceFields
from .errors import LengthMismatch, SequenceTooShort
from .navref import ReferencePath

HARD_WEIGHT = 1e3  # soft-constraint weight for bounds and dynamics edges
_SQRT_HARD = math.sqrt(HARD_WEIGHT)


@dataclass(frozen=True)
class LmSettings:
    max_iterations: int = 50
    lambda0: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    residual_tol: float = 1e-6
    step_tol: float = 1e-8

    def __post_init__(self):
        if min(self.max_iterations, self.lambda0, self.lambda_up, self.lambda_down) <= 0:
            raise ValueError("LmSettings: all settings must be positive")
        if not (0 < self.residual_tol < 1 and 0 < self.step_tol < 1):
            raise ValueError("LmSettings: tolerances must be in (0, 1)")


@dataclass(frozen=True)
class OptimizedSequence:
    states: np.ndarray  # (N+1, 5), states[0] identical to the input anchor
    final_objective: float  # accepted total squared residual of the graph
    iterations: int
    converged: bool


def velocity_reference(remaining: float, lim: KinodynamicLimits) -> float:
    """Braking-distance speed profile min(v_max, sqrt(2 a_max eps))."""
    return min(lim.v_max, math.sqrt(2.0 * lim.a_v_max * max(remaining, 0.0)))


def objective(
    S: np.ndarray,
    fields: TimeVaryingDistanceFields,
    ref: ReferencePath,
    params: PlannerParams,
    lim: KinodynamicLimits,
) -> float:
    """Discounted sum of collision, navigation (incl. velocity reference)
    and jitter costs over frames 1..N."""
    S = np.asarray(S, dtype=float)
    if S.shape[0] != params.n + 1:
        raise LengthMismatch(f"expected {params.n + 1} states, got {S.shape[0]}")
    total = 0.0
    for i in range(1, params.n + 1):
        x, y, th, v, om = S[i]
        xp, yp, thp = ref.poses[i]
        c, s = math.cos(thp), math.sin(thp)
        lon = (x - xp) * c + (y - yp) * s
        lat = -(x - xp) * s + (y - yp) * c
        ang = 1.0 - math.cos(th - thp)
        vref = velocity_reference(float(ref.remaining[i]), lim)
        c_n = (
            params.w_no * lon * lon
            + params.w_na * lat * lat
            + params.w_nt * ang * ang
            + params.w_nv * (v - vref) ** 2
        )
        c_c = params.w_c * float(fields.value(i, x, y))
        dv = (v - S[i - 1, 3]) / params.dt
        dom = (om - S[i - 1, 4]) / params.dt
        c_j = params.w_omega * om * om + params.w_a_v * dv * dv + params.w_a_omega * dom * dom
        total += params.gamma**i * (c_c + c_n + c_j)
    return total


class _Edge:
    """Residual block touching one or two consecutive states.

    ``vars`` lists variable indices (0-based: variable k is state k+1);
    -1 denotes the fixed anchor s_0.
    """

    dim = 0

    def __init__(self, frame: int, variables):
        self.frame = frame
        self.vars = variables

    def residual_jacobian(self, S):
        raise NotImplementedError

    def smooth_at(self, S) -> bool:
        """False near known kinks, where finite-difference checks are skipped."""
        return True


class FieldEdge(_Edge):
    dim = 1

    def __init__(self, frame, graph):
        super().__init__(frame, (frame - 1,))
        self.g = graph
        self.scale = math.sqrt(graph.params.gamma**frame * graph.params.w_c)

    def residual_jacobian(self, S):
        i = self.frame
        x, y = S[i, 0], S[i, 1]
        d = float(self.g.fields.value(i, x, y))
        J = np.zeros((1, 5))
        if d <= 0.0 or self.scale == 0.0:
            return np.zeros(1), [J]
        r = self.scale * math.sqrt(d)
        gx, gy = self.g.fields.gradient(i, x, y)
        factor = self.scale / (2.0 * math.sqrt(d))
        J[0, 0] = factor * gx
        J[0, 1] = factor * gy
        return np.array([r]), [J]

    def smooth_at(self, S):
        i = self.frame
        f = self.g.fields
        x, y = S[i, 0], S[i, 1]
        va = f.params.w_do * float(f.agent_value(i, x, y))
        vb = f.params.w_db * float(f.grid_value(x, y))
        d = max(va, vb)
        if d < 1e-3:  # sqrt curvature blows up near zero
            return False
        if abs(va - vb) < 1e-3 * (1.0 + d):  # max-branch tie
            return False
        if va >= vb:
            # sigma_x branch switch of the leading agent at l_x = 0.
            t = f.frame_time(i)
            for a in f.agents:
                speed = math.hypot(a[2], a[3])
                if speed <= 0.0:
                    continue
                dx = x - (a[0] + t * a[2])
                dy = y - (a[1] + t * a[3])
                lx = (dx * a[2] + dy * a[3]) / speed
                if abs(lx) < 1e-3:
                    return False
        else:
            dist = f.gdt.sample(x, y)
            delta = dist - f.robot_radius
            if abs(delta) < 1e-3 or abs(delta - f.params.eta) < 1e-3:
                return False
            # Bilinear surface kinks on cell-center lines.
            for q, o in ((x, f.gdt.origin[0]), (y, f.gdt.origin[1])):
                frac = (q - o) / f.gdt.resolution - 0.5
                if abs(frac - round(frac)) < 1e-3:
                    return False
        return True


class NavEdge(_Edge):
    dim = 4

    def __init__(self, frame, graph):
        super().__init__(frame, (frame - 1,))
        self.g = graph
        p = graph.params
        gi = p.gamma**frame
        self.w = np.sqrt([gi * p.w_no, gi * p.w_na, gi * p.w_nt, gi * p.w_nv])
        self.pose = graph.ref.poses[frame]
        self.vref = velocity_reference(float(graph.ref.remaining[frame]), graph.lim)

    def residual_jacobian(self, S):
        i = self.frame
        x, y, th, v = S[i, 0], S[i, 1], S[i, 2], S[i, 3]
        xp, yp, thp = self.pose
        c, s = math.cos(thp), math.sin(thp)
        lon = (x - xp) * c + (y - yp) * s
        lat = -(x - xp) * s + (y - yp) * c
        ang = 1.0 - math.cos(th - thp)
        r = self.w * np.array([lon, lat, ang, v - self.vref])
        J = np.zeros((4, 5))
        J[0, 0] = self.w[0] * c
        J[0, 1] = self.w[0] * s
        J[1, 0] = -self.w[1] * s
        J[1, 1] = self.w[1] * c
        J[2, 2] = self.w[2] * math.sin(th - thp)
        J[3, 3] = self.w[3]
        return r, [J]


def _hinge(z: float) -> tuple:
    return (z, 1.0) if z > 0.0 else (0.0, 0.0)


class BoundEdge(_Edge):
    """Soft velocity-box hinges."""

    dim = 4

    def __init__(self, frame, graph):
        super().__init__(frame, (frame - 1,))
        self.lim = graph.lim

    def residual_jacobian(self, S):
        i = self.frame
        v, om = S[i, 3], S[i, 4]
        margins = [
            (v - self.lim.v_max, 3, 1.0),
            (self.lim.v_min - v, 3, -1.0),
            (om - self.lim.omega_max, 4, 1.0),
            (self.lim.omega_min - om, 4, -1.0),
        ]
        r = np.zeros(4)
        J = np.zeros((4, 5))
        for k, (z, col, sign) in enumerate(margins):
            val, act = _hinge(z)
            r[k] = _SQRT_HARD * val
            J[k, col] = _SQRT_HARD * act * sign
        return r, [J]

    def smooth_at(self, S):
        i = self.frame
        v, om = S[i, 3], S[i, 4]
        margins = [
            v - self.lim.v_max, self.lim.v_min - v,
            om - self.lim.omega_max, self.lim.omega_min - om,
        ]
        return all(abs(z) > 1e-3 for z in margins)


class ConsistencyEdge(_Edge):
    """Euler transition residual on (x, y, theta) using the earlier state's
    velocities."""

    dim = 3

    def __init__(self, frame, graph):
        super().__init__(frame, (frame - 2, frame - 1))
        self.dt = graph.params.dt

    def residual_jacobian(self, S):
        i = self.frame
        dt = self.dt
        x0, y0, th0, v0, om0 = S[i - 1]
        x1, y1, th1 = S[i, 0], S[i, 1], S[i, 2]
        c0, s0 = math.cos(th0), math.sin(th0)
        r = _SQRT_HARD * np.array(
            [
                x1 - x0 - dt * v0 * c0,
                y1 - y0 - dt * v0 * s0,
                wrap_angle(th1 - th0 - dt * om0),
            ]
        )
        J_prev = np.zeros((3, 5))
        J_prev[0, 0] = -_SQRT_HARD
        J_prev[0, 2] = _SQRT_HARD * dt * v0 * s0
        J_prev[0, 3] = -_SQRT_HARD * dt * c0
        J_prev[1, 1] = -_SQRT_HARD
        J_prev[1, 2] = -_SQRT_HARD * dt * v0 * c0
        J_prev[1, 3] = -_SQRT_HARD * dt * s0
        J_prev[2, 2] = -_SQRT_HARD
        J_prev[2, 4] = -_SQRT_HARD * dt
        J_cur = np.zeros((3, 5))
        J_cur[0, 0] = _SQRT_HARD
        J_cur[1, 1] = _SQRT_HARD
        J_cur[2, 2] = _SQRT_HARD
        return r, [J_prev, J_cur]

    def smooth_at(self, S):
        i = self.frame
        gap = S[i, 2] - S[i - 1, 2] - self.dt * S[i - 1, 4]
        return abs(abs(wrap_angle(gap)) - math.pi) > 1e-3


class JitterEdge(_Edge):
    dim = 3

    def __init__(self, frame, graph):
        super().__init__(frame, (frame - 2, frame - 1))
        p = graph.params
        gi = p.gamma**frame
        self.dt = p.dt
        self.w = np.sqrt([gi * p.w_omega, gi * p.w_a_v, gi * p.w_a_omega])

    def residual_jacobian(self, S):
        i = self.frame
        dt = self.dt
        v0, om0 = S[i - 1, 3], S[i - 1, 4]
        v1, om1 = S[i, 3], S[i, 4]
        r = self.w * np.array([om1, (v1 - v0) / dt, (om1 - om0) / dt])
        J_prev = np.zeros((3, 5))
        J_prev[1, 3] = -self.w[1] / dt
        J_prev[2, 4] = -self.w[2] / dt
        J_cur = np.zeros((3, 5))
        J_cur[0, 4] = self.w[0]
        J_cur[1, 3] = self.w[1] / dt
        J_cur[2, 4] = self.w[2] / dt
        return r, [J_prev, J_cur]


class AccelBoundEdge(_Edge):
    """Soft hinges on the finite-difference accelerations."""

    dim = 4

    def __init__(self, frame, graph):
        super().__init__(frame, (frame - 2, frame - 1))
        self.dt = graph.params.dt
        self.lim = graph.lim

    def _margins(self, S):
        i = self.frame
        a_v = (S[i, 3] - S[i - 1, 3]) / self.dt
        a_om = (S[i, 4] - S[i - 1, 4]) / self.dt
        return [
            (a_v - self.lim.a_v_max, 3, 1.0),
            (self.lim.a_v_min - a_v, 3, -1.0),
            (a_om - self.lim.a_omega_max, 4, 1.0),
            (self.lim.a_omega_min - a_om, 4, -1.0),
        ]

    def residual_jacobian(self, S):
        r = np.zeros(4)
        J_prev = np.zeros((4, 5))
        J_cur = np.zeros((4, 5))
        for k, (z, col, sign) in enumerate(self._margins(S)):
            val, act = _hinge(z)
            r[k] = _SQRT_HARD * val
            J_cur[k, col] = _SQRT_HARD * act * sign / self.dt
            J_prev[k, col] = -_SQRT_HARD * act * sign / self.dt
        return r, [J_prev, J_cur]

    def smooth_at(self, S):
        return all(abs(z) > 1e-3 for z, _, _ in self._margins(S))


class TrajectoryGraph:
    """Sparse least-squares problem over s_1..s_N with s_0 fixed."""

    def __init__(
        self,
        s0: np.ndarray,
        fields: TimeVaryingDistanceFields,
        ref: ReferencePath,
        lim: KinodynamicLimits,
        params: PlannerParams,
    ):
        self.s0 = np.asarray(s0, dtype=float).copy()
        self.fields = fields
        self.ref = ref
        self.lim = lim
        self.params = params
        self.n = params.n
        self.edges = []
        for i in range(1, self.n + 1):
            self.edges.append(FieldEdge(i, self))
            self.edges.append(NavEdge(i, self))
            self.edges.append(BoundEdge(i, self))
            self.edges.append(ConsistencyEdge(i, self))
            self.edges.append(JitterEdge(i, self))
            self.edges.append(AccelBoundEdge(i, self))
        self.residual_dim = sum(e.dim for e in self.edges)

    def full_states(self, q: np.ndarray) -> np.ndarray:
        S = np.empty((self.n + 1, 5))
        S[0] = self.s0
        S[1:] = q.reshape(self.n, 5)
        return S

    def pack(self, S: np.ndarray) -> np.ndarray:
        return np.asarray(S, dtype=float)[1:].reshape(-1).copy()

    def residuals(self, S: np.ndarray) -> np.ndarray:
        r = np.empty(self.residual_dim)
        off = 0
        for e in self.edges:
            r[off : off + e.dim] = e.residual_jacobian(S)[0]
            off += e.dim
        return r

    def residuals_jacobian(self, S: np.ndarray):
        r = np.empty(self.residual_dim)
        J = np.zeros((self.residual_dim, self.n * 5))
        off = 0
        for e in self.edges:
            ri, blocks = e.residual_jacobian(S)
            r[off : off + e.dim] = ri
            for var, block in zip(e.vars, blocks):
                if var >= 0:
                    J[off : off + e.dim, var * 5 : var * 5 + 5] = block
            off += e.dim
        return r, J

    def total_cost(self, S: np.ndarray) -> float:
        r = self.residuals(S)
        return float(r @ r)

    def hessian_block_structure(self) -> np.ndarray:
        """Boolean (N, N) matrix of structurally nonzero 5x5 Hessian blocks."""
        structure = np.zeros((self.n, self.n), dtype=bool)
        for e in self.edges:
            active = [v for v in e.vars if v >= 0]
            for a in active:
                for b in active:
                    structure[a, b] = True
        return structure


def build_graph(
    S_init: np.ndarray,
    fields: TimeVaryingDistanceFields,
    ref: ReferencePath,
    lim: KinodynamicLimits,
    params: PlannerParams,
) -> TrajectoryGraph:
    S_init = np.asarray(S_init, dtype=float)
    if S_init.shape[0] != params.n + 1:
        raise LengthMismatch(
            f"S_init must have {params.n + 1} states (pad degenerate sequences first)"
        )
    return TrajectoryGraph(S_init[0], fields, ref, lim, params)


def pad_initial(S: np.ndarray, params: PlannerParams, lim: KinodynamicLimits) -> np.ndarray:
    """Extend a degenerate sequence to N+1 states with a maximal-deceleration
    braking tail (exactly replayable through the Euler step)."""
    S = np.asarray(S, dtype=float)
    out = list(S)
    while len(out) < params.n + 1:
        x, y, th, v, om = out[-1]
        a_v = min(max(-v / params.dt, lim.a_v_min), lim.a_v_max)
        a_om = min(max(-om / params.dt, lim.a_omega_min), lim.a_omega_max)
        out.append(
            np.array(
                [
                    x + params.dt * v * math.cos(th),
                    y + params.dt * v * math.sin(th),
                    wrap_angle(th + params.dt * om),
                    v + params.dt * a_v,
                    om + params.dt * a_om,
                ]
            )
        )
    return np.array(out[: params.n + 1])


def optimize(graph: TrajectoryGraph, S_init: np.ndarray, settings: LmSettings) -> OptimizedSequence:
    """Levenberg-Marquardt with monotone step acceptance; on numerical
    failure the initial sequence is returned unchanged."""
    S_init = np.asarray(S_init, dtype=float)
    q = graph.pack(S_init)
    r, J = graph.residuals_jacobian(graph.full_states(q))
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
        return OptimizedSequence(S_init.copy(), math.inf, 0, False)
    cost = float(r @ r)
    initial_cost = cost
    lam = settings.lambda0
    converged = False
    iterations = 0
    theta_cols = np.arange(graph.n) * 5 + 2
    for iterations in range(1, settings.max_iterations + 1):
        H = J.T @ J
        g = J.T @ r
        diag = np.clip(np.diag(H), 1e-12, None)
        try:
            step = np.linalg.solve(H + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= settings.lambda_up
            continue
        if not np.all(np.isfinite(step)):
            return OptimizedSequence(S_init.copy(), initial_cost, iterations, False)
        q_new = q + step
        q_new[theta_cols] = wrap_angle_array(q_new[theta_cols])
        r_new, J_new = graph.residuals_jacobian(graph.full_states(q_new))
        if not (np.all(np.isfinite(r_new)) and np.all(np.isfinite(J_new))):
            return OptimizedSequence(S_init.copy(), initial_cost, iterations, False)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            rel_drop = (cost - cost_new) / max(cost, 1e-300)
            q, r, J, cost = q_new, r_new, J_new, cost_new
            lam = max(lam / settings.lambda_down, 1e-12)
            if rel_drop < settings.residual_tol or np.max(np.abs(step)) < settings.step_tol:
                converged = True
                break
        else:
            lam *= settings.lambda_up
            if lam > 1e12:
                break
    if cost > initial_cost:  # defensive; acceptance rule forbids this
        return OptimizedSequence(S_init.copy(), initial_cost, iterations, False)
    return OptimizedSequence(graph.full_states(q), cost, iterations, converged)


def check_gradients(graph: TrajectoryGraph, S: np.ndarray, h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference Jacobians
    over all residual blocks, skipping blocks at known nonsmooth points."""
    S = np.asarray(S, dtype=float)
    worst = 0.0
    for e in graph.edges:
        if not e.smooth_at(S):
            continue
        _, blocks = e.residual_jacobian(S)
        for var, block in zip(e.vars, blocks):
            if var < 0:
                continue
            state_idx = var + 1
            fd = np.zeros_like(block)
            for col in range(5):
                Sp = S.copy()
                Sm = S.copy()
                Sp[state_idx, col] += h
                Sm[state_idx, col] -= h
                rp = e.residual_jacobian(Sp)[0]
                rm = e.residual_jacobian(Sm)[0]
                fd[:, col] = (rp - rm) / (2.0 * h)
            denom = np.maximum(np.maximum(np.abs(block), np.abs(fd)), 1.0)
            err = float(np.max(np.abs(block - fd) / denom))
            worst = max(worst, err)
    return worst


def project_feasible(S: np.ndarray, lim: KinodynamicLimits, dt: float):
    """Re-roll the sequence through the exact Euler step with clamped
    finite-difference controls; the result replays bit-exactly.

    Returns (states (N+1, 5), controls (N, 2)).
    """
    S = np.asarray(S, dtype=float)
    if S.shape[0] < 2:
        raise SequenceTooShort("projection needs at least 2 states")
    out = np.empty_like(S)
    out[0] = S[0]
    controls = np.empty((S.shape[0] - 1, 2))
    for i in range(1, S.shape[0]):
        x, y, th, v, om = out[i - 1]
        a_v = min(max((S[i, 3] - v) / dt, lim.a_v_min), lim.a_v_max)
        a_om = min(max((S[i, 4] - om) / dt, lim.a_omega_min), lim.a_omega_max)
        # Keep the next velocities inside the absolute box as well.
        a_v = min(max(a_v, (lim.v_min - v) / dt), (lim.v_max - v) / dt)
        a_om = min(max(a_om, (lim.omega_min - om) / dt), (lim.omega_max - om) / dt)
        controls[i - 1] = (a_v, a_om)
        out[i] = (
            x + dt * v * math.cos(th),
            y + dt * v * math.sin(th),
            wrap_angle(th + dt * om),
            v + dt * a_v,
            om + dt * a_om,
        )
    return out, controls


def extract_command(S_opt: np.ndarray, dt: float, lim: KinodynamicLimits) -> ControlInput:
    """First-step accelerations implied by the optimized sequence."""
    S_opt = np.asarray(S_opt, dtype=float)
    if S_opt.shape[0] < 2:
        raise SequenceTooShort("need at least 2 states to extract a command")
    a_v = (S_opt[1, 3] - S_opt[0, 3]) / dt
    a_om = (S_opt[1, 4] - S_opt[0, 4]) / dt
    return ControlInput(
        min(max(a_v, lim.a_v_min), lim.a_v_max),
        min(max(a_om, lim.a_omega_min), lim.a_omega_max),
    )


def rollout(s0: RobotState, controls: np.ndarray, dt: float) -> np.ndarray:
    """Replay controls through the exact Euler step (verification helper)."""
    from .core import step_dynamics

    states = [s0.as_array()]
    s = s0
    for a_v, a_om in controls:
        s = step_dynamics(s, ControlInput(float(a_v), float(a_om)), dt)
        states.append(s.as_array())
    return np.array(states)
