"""Single planning cycle: distance fields, reference path, LT-DWA tree,
EB-MPC refinement, feasibility projection and the first control command."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import math

from .core import (
    ControlInput,
    KinodynamicLimits,
    PlannerParams,
    RobotState,
    step_dynamics,
    wrap_angle,
)
from .distfield import GridDistanceTransform, TimeVaryingDistanceFields
from .ebmpc import (
    LmSettings,
    build_graph,
    extract_command,
    optimize,
    pad_initial,
    project_feasible,
)
from .errors import ConfigError
from .navref import NavigationPath, ReferencePath, reference_path
from .tree import InitialSequence, StateCostTree, backtrack_best, build_tree

FIELD_MODES = ("time-varying", "traditional")
SAMPLING_MODES = ("voxel", "random")

# Terminal approach runs only when no agent is within this range (m).
DOCK_CLEARANCE = 1.0
# Agents deviate from their constant-velocity prediction, so reusing the
# previous plan requires a margin beyond bare non-penetration.
WARM_MARGIN = 0.2
FALLBACK_MARGIN = 0.0


@dataclass(frozen=True)
class PlannerConfig:
    params: PlannerParams = field(default_factory=PlannerParams)
    limits: KinodynamicLimits = field(default_factory=KinodynamicLimits)
    lm: LmSettings = field(default_factory=LmSettings)
    optimizer_enabled: bool = True
    sampling_mode: str = "voxel"
    field_mode: str = "time-varying"
    base_seed: int = 0

    def __post_init__(self):
        if self.sampling_mode not in SAMPLING_MODES:
            raise ConfigError(f"sampling_mode must be one of {SAMPLING_MODES}")
        if self.field_mode not in FIELD_MODES:
            raise ConfigError(f"field_mode must be one of {FIELD_MODES}")

    @staticmethod
    def from_json(path) -> "PlannerConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return PlannerConfig.from_dict(data)

    @staticmethod
    def from_dict(data: dict) -> "PlannerConfig":
        known = {
            "params", "limits", "lm", "optimizer_enabled",
            "sampling_mode", "field_mode", "base_seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs = {}
        if "params" in data:
            kwargs["params"] = PlannerParams.from_dict(data["params"])
        for key, cls in (("limits", KinodynamicLimits), ("lm", LmSettings)):
            if key in data:
                try:
                    kwargs[key] = cls(**data[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
        for key in ("optimizer_enabled", "sampling_mode", "field_mode", "base_seed"):
            if key in data:
                kwargs[key] = data[key]
        return PlannerConfig(**kwargs)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return {
            "params": self.params.to_dict(),
            "limits": asdict(self.limits),
            "lm": asdict(self.lm),
            "optimizer_enabled": self.optimizer_enabled,
            "sampling_mode": self.sampling_mode,
            "field_mode": self.field_mode,
            "base_seed": self.base_seed,
        }


@dataclass
class PlanResult:
    command: ControlInput
    initial: InitialSequence
    optimized: np.ndarray  # (N+1, 5) accepted LM iterate (or padded initial)
    executed: np.ndarray  # (N+1, 5) post-projection rollout
    controls: np.ndarray  # (N, 2) controls replaying ``executed`` exactly
    padded_initial: np.ndarray
    degenerate: bool
    opt_converged: bool
    opt_objective: float
    latency_ms: float
    tree: StateCostTree | None = None
    fields: TimeVaryingDistanceFields | None = None
    reference: ReferencePath | None = None


class Planner:
    """Per-cycle planner; per-cycle RNG derives from (base_seed, cycle_index)
    so replans are reproducible. Keeps the previous executed sequence as an
    optimizer warm start, which lets successive replans follow through on a
    maneuver instead of re-deriving a fresh (randomly sampled) one."""

    def __init__(self, config: PlannerConfig, nav_path: NavigationPath,
                 grid_transform: GridDistanceTransform | None = None):
        self.config = config
        self.nav = nav_path
        self.gdt = grid_transform
        self._prev_executed: np.ndarray | None = None

    def _warm_start(self, robot: RobotState) -> np.ndarray | None:
        """Previous executed sequence shifted one step and re-anchored on the
        current state; None when no usable history exists."""
        prev = self._prev_executed
        if prev is None:
            return None
        shifted = np.empty_like(prev)
        shifted[0] = robot.as_array()
        shifted[1:-1] = prev[2:]
        # Tail pad: extend one braking step past the previous horizon.
        dt = self.config.params.dt
        lim = self.config.limits
        x, y, th, pv, pw = prev[-1]
        v = pv + dt * float(np.clip(-pv / dt, lim.a_v_min, lim.a_v_max))
        v = min(max(v, lim.v_min), lim.v_max)
        w = pw + dt * float(np.clip(-pw / dt, lim.a_omega_min, lim.a_omega_max))
        w = min(max(w, lim.omega_min), lim.omega_max)
        shifted[-1] = [x + dt * pv * np.cos(th), y + dt * pv * np.sin(th),
                       th + dt * pw, v, w]
        return shifted

    def _predicted_clearance(self, states: np.ndarray, agents: np.ndarray) -> float:
        """Minimum distance margin between the sequence and the constant-
        velocity agent predictions; +inf without agents."""
        if agents.shape[0] == 0:
            return math.inf
        dt = self.config.params.dt
        radius = self.config.limits.radius
        times = dt * np.arange(1, states.shape[0])
        px = agents[None, :, 0] + times[:, None] * agents[None, :, 2]
        py = agents[None, :, 1] + times[:, None] * agents[None, :, 3]
        dist = np.hypot(states[1:, 0, None] - px, states[1:, 1, None] - py)
        return float((dist - (radius + agents[None, :, 4])).min())

    def _dock_clear(self, robot: RobotState, agents) -> bool:
        for a in agents:
            if math.hypot(a.x - robot.x, a.y - robot.y) < DOCK_CLEARANCE:
                return False
        return True

    def _dock_plan(self, robot: RobotState, fields, ref, t0: float,
                   keep_debug: bool) -> PlanResult:
        """Terminal approach: a proportional turn-then-drive policy toward the
        path endpoint. The receding-horizon weights are nearly indifferent
        between orbiting the endpoint and settling on it, so the last
        clear-of-agents half meter is closed with an explicit controller."""
        cfg = self.config
        dt = cfg.params.dt
        lim = cfg.limits
        ex, ey = ref.poses[0, 0], ref.poses[0, 1]
        s = robot
        states = [s.as_array()]
        tree_states = [s.as_array()]
        controls = []
        for _ in range(cfg.params.n):
            dist = math.hypot(ex - s.x, ey - s.y)
            if dist > 1e-9:
                diff = wrap_angle(math.atan2(ey - s.y, ex - s.x) - s.theta)
            else:
                diff = 0.0
            if abs(diff) > 0.4 or dist <= 1e-3:
                tv = 0.0
            else:
                tv = min(lim.v_max, dist / dt, math.sqrt(2.0 * lim.a_v_max * dist))
            tw = min(max(diff / dt, lim.omega_min), lim.omega_max)
            a_v = min(max((tv - s.v) / dt, lim.a_v_min), lim.a_v_max)
            a_w = min(max((tw - s.omega) / dt, lim.a_omega_min), lim.a_omega_max)
            u = ControlInput(a_v, a_w)
            controls.append([a_v, a_w])
            nv = s.v + dt * a_v
            nw = s.omega + dt * a_w
            tx, ty, tth = tree_states[-1][0], tree_states[-1][1], tree_states[-1][2]
            tree_states.append([
                tx + dt * nv * math.cos(tth),
                ty + dt * nv * math.sin(tth),
                wrap_angle(tth + dt * nw), nv, nw,
            ])
            s = step_dynamics(s, u, dt)
            states.append(s.as_array())
        executed = np.array(states)
        controls = np.array(controls)
        command = ControlInput(float(controls[0, 0]), float(controls[0, 1]))
        self._prev_executed = executed
        return PlanResult(
            command=command,
            initial=InitialSequence(np.array(tree_states), False, 0.0),
            optimized=executed,
            executed=executed,
            controls=controls,
            padded_initial=executed,
            degenerate=False,
            opt_converged=True,
            opt_objective=float("nan"),
            latency_ms=(time.perf_counter() - t0) * 1e3,
            fields=fields if keep_debug else None,
            reference=ref if keep_debug else None,
        )

    def plan(self, robot: RobotState, agents, cycle_index: int,
             keep_debug: bool = False) -> PlanResult:
        cfg = self.config
        t0 = time.perf_counter()
        fields = TimeVaryingDistanceFields(
            agents, self.gdt, cfg.params, cfg.limits.radius,
            time_varying=(cfg.field_mode == "time-varying"),
        )
        ref = reference_path(self.nav, robot, cfg.params, cfg.limits)
        if ref.docking and self._dock_clear(robot, agents):
            return self._dock_plan(robot, fields, ref, t0, keep_debug)
        rng = np.random.default_rng([cfg.base_seed, cycle_index])
        tree = build_tree(robot, ref, fields, cfg.limits, cfg.params, rng,
                          sampling_mode=cfg.sampling_mode)
        initial = backtrack_best(tree, cfg.params.n)
        padded = pad_initial(initial.states, cfg.params, cfg.limits)
        if cfg.optimizer_enabled:
            graph = build_graph(padded, fields, ref, cfg.limits, cfg.params)
            init = padded
            warm = self._warm_start(robot)
            if (
                warm is not None
                and graph.total_cost(warm) < graph.total_cost(padded)
                and self._predicted_clearance(warm, fields.agents) >= WARM_MARGIN
            ):
                init = warm
            opt = optimize(graph, init, cfg.lm)
            optimized = opt.states
            converged = opt.converged
            objective_value = opt.final_objective
        else:
            optimized = padded
            converged = True
            objective_value = float("nan")
        executed, controls = project_feasible(optimized, cfg.limits, cfg.params.dt)
        if cfg.optimizer_enabled:
            # Safety fallback: the refinement stage only penalizes proximity
            # softly, so discard an iterate whose rollout crosses an agent's
            # predicted disc when the unrefined branch stays clear of it.
            clear = self._predicted_clearance(executed, fields.agents)
            if clear < FALLBACK_MARGIN:
                safe_exec, safe_ctrl = project_feasible(
                    padded, cfg.limits, cfg.params.dt
                )
                if self._predicted_clearance(safe_exec, fields.agents) > clear:
                    optimized = padded
                    executed, controls = safe_exec, safe_ctrl
        command = extract_command(executed, cfg.params.dt, cfg.limits)
        self._prev_executed = executed
        latency_ms = (time.perf_counter() - t0) * 1e3
        return PlanResult(
            command=command,
            initial=initial,
            optimized=optimized,
            executed=executed,
            controls=controls,
            padded_initial=padded,
            degenerate=initial.degenerate,
            opt_converged=converged,
            opt_objective=objective_value,
            latency_ms=latency_ms,
            tree=tree if keep_debug else None,
            fields=fields if keep_debug else None,
            reference=ref if keep_debug else None,
        )
