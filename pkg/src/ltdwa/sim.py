"""Deterministic scenario simulator: crowd circles, random static maps,
hybrid scenes and trace playback, advanced at the planner cadence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import Agent, ControlInput, OccupancyGrid, RobotState, step_dynamics
from .distfield import build_grid_distance_transform
from .errors import ConfigError, NoPath
from .navref import plan_global, straight_line_path
from .planner import Planner, PlannerConfig

SIM_DT = 0.2
GOAL_RADIUS = 0.3
AGENT_RADIUS = 0.3
DEFAULT_TIME_LIMIT = 60.0

# Reciprocal-avoidance policy constants.
RECIPROCAL_TAU = 2.0
RECIPROCAL_SPEEDS = 5
RECIPROCAL_ANGLES = 20  # SPEEDS * ANGLES = 100 candidates
RECIPROCAL_TTC_WEIGHT = 4.0
RECIPROCAL_INERTIA = 0.5  # damps per-step candidate flapping for smooth crowds


@dataclass(frozen=True)
class AgentPolicy:
    kind: str  # "reciprocal" | "constant" | "trace"
    max_speed: float = 1.0
    goal: tuple | None = None
    trace: tuple | None = None  # (times (T,), xy (T, 2)) for playback agents

    def __post_init__(self):
        if self.kind not in ("reciprocal", "constant", "trace"):
            raise ConfigError(f"unknown agent policy kind {self.kind!r}")
        if self.kind != "trace" and self.max_speed <= 0:
            raise ConfigError("non-trace agents need max_speed > 0")


@dataclass(frozen=True)
class Scenario:
    kind: str  # "crowd" | "static" | "hybrid" | "playback"
    grid: OccupancyGrid | None
    agents: tuple
    policies: tuple
    robot_start: RobotState
    goal: tuple
    bounds: tuple  # (xmin, ymin, xmax, ymax)
    time_limit: float = DEFAULT_TIME_LIMIT
    seed: int = 0

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ConfigError("time_limit must be > 0")
        if len(self.agents) != len(self.policies):
            raise ConfigError("agents and policies must pair up")


@dataclass
class EpisodeStep:
    t: float
    robot: RobotState
    command: ControlInput
    agents: tuple
    latency_ms: float


@dataclass
class EpisodeRecord:
    steps: list
    outcome: str  # Success | AgentCollision | GridCollision | OutOfBounds | Timeout | Failed
    scenario_seed: int
    min_grid_clearance: float  # meters from the robot edge, inf without a grid

    @property
    def nav_time(self) -> float:
        return self.steps[-1].t + SIM_DT if self.steps else 0.0

    def jitter_samples(self):
        """(|omega|, |dv/dt|, |domega/dt|) arrays over executed steps."""
        vs = np.array([s.robot.v for s in self.steps])
        oms = np.array([s.robot.omega for s in self.steps])
        ang_vel = np.abs(oms)
        lin_acc = np.abs(np.diff(vs)) / SIM_DT if len(vs) > 1 else np.zeros(0)
        ang_acc = np.abs(np.diff(oms)) / SIM_DT if len(oms) > 1 else np.zeros(0)
        return ang_vel, lin_acc, ang_acc

    def latencies_ms(self) -> np.ndarray:
        return np.array([s.latency_ms for s in self.steps])

    def write_jsonl(self, path) -> None:
        """Primary record file; wall-clock latencies stay out so reruns are
        byte-identical (they go to a sibling .timing.json)."""
        path = Path(path)
        with open(path, "w") as fh:
            for s in self.steps:
                fh.write(
                    json.dumps(
                        {
                            "t": round(s.t, 9),
                            "robot": [s.robot.x, s.robot.y, s.robot.theta, s.robot.v, s.robot.omega],
                            "command": [s.command.a_v, s.command.a_omega],
                            "agents": [[a.x, a.y, a.vx, a.vy, a.r] for a in s.agents],
                        }
                    )
                    + "\n"
                )
            fh.write(json.dumps({"outcome": self.outcome, "seed": self.scenario_seed}) + "\n")
        timing = {
            "latency_ms": [s.latency_ms for s in self.steps],
        }
        path.with_suffix(".timing.json").write_text(json.dumps(timing))


def _disturb(rng) -> tuple:
    return rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)


def make_circle_scenario(n_agents: int, radius: float = 5.0, seed: int = 0) -> Scenario:
    """Agents evenly spaced on a circle crossing to (disturbed) antipodal
    goals; the robot crosses the circle too and is invisible to the crowd."""
    rng = np.random.default_rng([seed, 0x5CE0])
    robot_angle = -math.pi / 2.0
    robot_start_xy = (radius * math.cos(robot_angle), radius * math.sin(robot_angle))
    goal = (-robot_start_xy[0], -robot_start_xy[1])
    heading = math.atan2(goal[1] - robot_start_xy[1], goal[0] - robot_start_xy[0])
    robot = RobotState(robot_start_xy[0], robot_start_xy[1], heading, 0.0, 0.0)
    agents = []
    policies = []
    for k in range(n_agents):
        base = 2.0 * math.pi * k / max(n_agents, 1)
        for _ in range(100):  # re-sample disturbance on spacing violations
            da, dr = _disturb(rng)
            ang = base + da
            rad = radius + dr
            x, y = rad * math.cos(ang), rad * math.sin(ang)
            if all(math.hypot(x - a.x, y - a.y) >= 2.0 * AGENT_RADIUS for a in agents) and (
                math.hypot(x - robot.x, y - robot.y) >= AGENT_RADIUS + 0.3 + 0.2
            ):
                break
        ga, gr = _disturb(rng)
        # Goals overshoot the rim by 1 m so arrived agents park outside the
        # circle instead of crowding the robot's rim goal at episode end.
        gx = (radius + 1.0 + gr) * math.cos(ang + math.pi + ga)
        gy = (radius + 1.0 + gr) * math.sin(ang + math.pi + ga)
        agents.append(Agent(x, y, 0.0, 0.0, AGENT_RADIUS))
        policies.append(AgentPolicy("reciprocal", max_speed=1.0, goal=(gx, gy)))
    margin = 2.0
    b = radius + margin
    return Scenario(
        kind="crowd",
        grid=None,
        agents=tuple(agents),
        policies=tuple(policies),
        robot_start=robot,
        goal=goal,
        bounds=(-b, -b, b, b),
        seed=seed,
    )


def _random_static_grid(rng) -> OccupancyGrid:
    res = 0.1
    size = 100  # 10 m x 10 m
    cells = np.zeros((size, size), dtype=bool)
    for _ in range(rng.integers(3, 7)):
        w = rng.integers(5, 20)
        h = rng.integers(5, 20)
        r0 = rng.integers(0, size - h)
        c0 = rng.integers(0, size - w)
        cells[r0 : r0 + h, c0 : c0 + w] = True
    return OccupancyGrid((0.0, 0.0), res, cells)


def _sample_free_point(rng, grid, gdt, clearance):
    for _ in range(200):
        x = rng.uniform(0.5, 9.5)
        y = rng.uniform(0.5, 9.5)
        if gdt.sample(x, y) > clearance:
            return (x, y)
    raise ConfigError("could not sample a free point with clearance")


def make_static_scenario(seed: int = 0) -> Scenario:
    """Random 10x10 m obstacle map with a connected start/goal pair."""
    rng = np.random.default_rng([seed, 0x57A7])
    for _ in range(50):
        grid = _random_static_grid(rng)
        gdt = build_grid_distance_transform(grid)
        try:
            start = _sample_free_point(rng, grid, gdt, 0.6)
            goal = _sample_free_point(rng, grid, gdt, 0.6)
            if math.hypot(goal[0] - start[0], goal[1] - start[1]) < 5.0:
                continue
            nav = plan_global(grid, start, goal)
        except (NoPath, ConfigError):
            continue
        heading = float(nav.points[0, 2])
        return Scenario(
            kind="static",
            grid=grid,
            agents=(),
            policies=(),
            robot_start=RobotState(start[0], start[1], heading, 0.0, 0.0),
            goal=goal,
            bounds=(-1.0, -1.0, 11.0, 11.0),
            seed=seed,
        )
    raise ConfigError(f"failed to generate a solvable static scenario for seed {seed}")


def make_hybrid_scenario(seed: int = 0, n_agents: int = 4) -> Scenario:
    """Static map plus reciprocal agents crossing the workspace."""
    base = make_static_scenario(seed)
    rng = np.random.default_rng([seed, 0x4B1D])
    gdt = build_grid_distance_transform(base.grid)
    agents = []
    policies = []
    for _ in range(n_agents):
        for _ in range(100):
            x, y = _sample_free_point(rng, base.grid, gdt, 0.5)
            if (
                math.hypot(x - base.robot_start.x, y - base.robot_start.y) > 1.5
                and all(math.hypot(x - a.x, y - a.y) >= 2.0 * AGENT_RADIUS for a in agents)
            ):
                break
        gx, gy = _sample_free_point(rng, base.grid, gdt, 0.5)
        agents.append(Agent(x, y, 0.0, 0.0, AGENT_RADIUS))
        policies.append(AgentPolicy("reciprocal", max_speed=1.0, goal=(gx, gy)))
    return replace(base, kind="hybrid", agents=tuple(agents), policies=tuple(policies))


def _reciprocal_velocity(idx: int, agents, policy: AgentPolicy) -> tuple:
    """Pick the candidate velocity closest to the goal-directed preference
    among a deterministic polar grid, penalizing short times-to-collision
    against the other agents (the robot is never visible here)."""
    me = agents[idx]
    gx, gy = policy.goal
    to_goal = (gx - me.x, gy - me.y)
    dist = math.hypot(*to_goal)
    if dist <= GOAL_RADIUS:
        return (0.0, 0.0)
    pref_speed = min(policy.max_speed, dist / SIM_DT)
    pref_dir = math.atan2(to_goal[1], to_goal[0])
    best = None
    best_cost = math.inf
    others = [a for j, a in enumerate(agents) if j != idx]
    for si in range(RECIPROCAL_SPEEDS):
        speed = policy.max_speed * si / (RECIPROCAL_SPEEDS - 1)
        for ai in range(RECIPROCAL_ANGLES):
            ang = pref_dir - math.pi + (2.0 * math.pi) * ai / RECIPROCAL_ANGLES
            ux = speed * math.cos(ang)
            uy = speed * math.sin(ang)
            cost = (ux - pref_speed * math.cos(pref_dir)) ** 2 + (
                uy - pref_speed * math.sin(pref_dir)
            ) ** 2
            cost += RECIPROCAL_INERTIA * ((ux - me.vx) ** 2 + (uy - me.vy) ** 2)
            ttc = _time_to_collision(me, ux, uy, others)
            if ttc < RECIPROCAL_TAU:
                cost += RECIPROCAL_TTC_WEIGHT * (1.0 / max(ttc, 0.05) - 1.0 / RECIPROCAL_TAU)
            if cost < best_cost - 1e-12:
                best_cost = cost
                best = (ux, uy)
    return best


def _time_to_collision(me: Agent, ux: float, uy: float, others) -> float:
    earliest = math.inf
    for o in others:
        px = o.x - me.x
        py = o.y - me.y
        rr = me.r + o.r
        if px * px + py * py <= rr * rr:
            return 0.0
        rvx = ux - o.vx
        rvy = uy - o.vy
        a = rvx * rvx + rvy * rvy
        if a < 1e-12:
            continue
        b = -(px * rvx + py * rvy)
        c = px * px + py * py - rr * rr
        disc = b * b - a * c
        if disc <= 0.0:
            continue
        t = (-b - math.sqrt(disc)) / a
        if 0.0 <= t < earliest:
            earliest = t
    return earliest


def _trace_position(policy: AgentPolicy, t: float):
    times, xy = policy.trace
    if t > times[-1] + 1e-9:
        return None
    x = float(np.interp(t, times, xy[:, 0]))
    y = float(np.interp(t, times, xy[:, 1]))
    return (x, y)


def agents_step(agents, policies, dt: float, t_next: float):
    """Advance all agents by dt; trace agents past their last frame are
    removed. Returns (agents, policies) tuples."""
    if dt <= 0:
        raise ValueError("agents_step: dt must be > 0")
    new_agents = []
    new_policies = []
    velocities = []
    for i, (agent, policy) in enumerate(zip(agents, policies)):
        if policy.kind == "reciprocal":
            velocities.append(_reciprocal_velocity(i, agents, policy))
        elif policy.kind == "constant":
            speed = math.hypot(agent.vx, agent.vy)
            if speed > policy.max_speed:
                scale = policy.max_speed / speed
                velocities.append((agent.vx * scale, agent.vy * scale))
            else:
                velocities.append((agent.vx, agent.vy))
        else:
            velocities.append(None)
    for agent, policy, vel in zip(agents, policies, velocities):
        if policy.kind == "trace":
            pos = _trace_position(policy, t_next)
            if pos is None:
                continue  # TraceExhausted: the agent leaves the world
            vx = (pos[0] - agent.x) / dt
            vy = (pos[1] - agent.y) / dt
            new_agents.append(Agent(pos[0], pos[1], vx, vy, agent.r))
        else:
            vx, vy = vel
            new_agents.append(Agent(agent.x + dt * vx, agent.y + dt * vy, vx, vy, agent.r))
        new_policies.append(policy)
    return tuple(new_agents), tuple(new_policies)


def sense_agents(robot: RobotState, agents, sensing_range: float):
    return tuple(
        a for a in agents if math.hypot(a.x - robot.x, a.y - robot.y) <= sensing_range
    )


def classify(robot: RobotState, agents, gdt, scenario: Scenario, t: float):
    """One-step outcome check; None while the episode is still running."""
    if math.hypot(robot.x - scenario.goal[0], robot.y - scenario.goal[1]) <= GOAL_RADIUS:
        return "Success"
    for a in agents:
        if math.hypot(robot.x - a.x, robot.y - a.y) < 0.3 + a.r:
            return "AgentCollision"
    if gdt is not None and gdt.has_occupied:
        if gdt.sample(robot.x, robot.y) < 0.3:
            return "GridCollision"
    xmin, ymin, xmax, ymax = scenario.bounds
    if not (xmin <= robot.x <= xmax and ymin <= robot.y <= ymax):
        return "OutOfBounds"
    if t > scenario.time_limit:
        return "Timeout"
    return None


def build_navigation(scenario: Scenario):
    start = (scenario.robot_start.x, scenario.robot_start.y)
    if scenario.grid is not None and scenario.grid.cells.any():
        try:
            return plan_global(scenario.grid, start, scenario.goal)
        except NoPath:
            # Disconnected goal: fall back to the straight line; the local
            # planner then degenerates safely instead of aborting the episode.
            pass
    return straight_line_path(start, scenario.goal)


def run_episode(scenario: Scenario, config: PlannerConfig,
                collect_plans: bool = False):
    """Sense - plan - act - advance loop at the fixed cadence.

    Returns EpisodeRecord, or (EpisodeRecord, plan_results) when
    ``collect_plans`` is set.
    """
    if abs(config.params.dt - SIM_DT) > 1e-12:
        raise ConfigError(
            f"planner dt {config.params.dt} must match the simulator step {SIM_DT}"
        )
    gdt = build_grid_distance_transform(scenario.grid) if scenario.grid is not None else None
    nav = build_navigation(scenario)
    planner = Planner(config, nav, gdt)
    robot = scenario.robot_start
    agents, policies = scenario.agents, scenario.policies
    steps = []
    plans = []
    min_clearance = math.inf
    t = 0.0
    cycle = 0
    outcome = None
    radius = config.limits.radius
    while True:
        if gdt is not None and gdt.has_occupied:
            min_clearance = min(min_clearance, float(gdt.sample(robot.x, robot.y)) - radius)
        outcome = classify(robot, agents, gdt, scenario, t)
        if outcome is not None:
            break
        sensed = sense_agents(robot, agents, config.limits.sensing_range)
        result = planner.plan(robot, sensed, cycle)
        if collect_plans:
            plans.append((robot, sensed, result))
        steps.append(EpisodeStep(t, robot, result.command, agents, result.latency_ms))
        robot = step_dynamics(robot, result.command, SIM_DT)
        agents, policies = agents_step(agents, policies, SIM_DT, t + SIM_DT)
        t += SIM_DT
        cycle += 1
    record = EpisodeRecord(steps, outcome, scenario.seed, min_clearance)
    if collect_plans:
        return record, plans
    return record


# --- scenario / trace serialization -------------------------------------


def load_trace_csv(path) -> list:
    """Trace CSV (agent_id, t, x, y) to a list of (times, xy) per agent."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if [h.strip() for h in header] != ["agent_id", "t", "x", "y"]:
            raise ConfigError(f"{path}: expected header agent_id,t,x,y")
        for line in fh:
            if not line.strip():
                continue
            aid, t, x, y = line.strip().split(",")
            rows.append((int(aid), float(t), float(x), float(y)))
    rows.sort(key=lambda r: (r[0], r[1]))
    traces = {}
    for aid, t, x, y in rows:
        traces.setdefault(aid, []).append((t, x, y))
    out = []
    for aid in sorted(traces):
        arr = np.array(traces[aid])
        out.append((arr[:, 0], arr[:, 1:3]))
    return out


def scenario_from_json(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    base = Path(path).parent
    grid = None
    if data.get("grid_file"):
        grid = OccupancyGrid.from_file(base / data["grid_file"])
    agents = []
    policies = []
    if data.get("trace_file"):
        for times, xy in load_trace_csv(base / data["trace_file"]):
            x0 = float(np.interp(0.0, times, xy[:, 0]))
            y0 = float(np.interp(0.0, times, xy[:, 1]))
            agents.append(Agent(x0, y0, 0.0, 0.0, AGENT_RADIUS))
            policies.append(AgentPolicy("trace", trace=(times, xy)))
    for entry in data.get("agents", []):
        agents.append(Agent(entry["x"], entry["y"], entry.get("vx", 0.0), entry.get("vy", 0.0),
                            entry.get("r", AGENT_RADIUS)))
        pol = entry.get("policy", {"kind": "constant"})
        policies.append(
            AgentPolicy(
                pol.get("kind", "constant"),
                max_speed=pol.get("max_speed", 1.0),
                goal=tuple(pol["goal"]) if "goal" in pol else None,
            )
        )
    robot = data["robot"]
    sx, sy, sth = robot["start"]
    return Scenario(
        kind=data.get("kind", "playback" if data.get("trace_file") else "crowd"),
        grid=grid,
        agents=tuple(agents),
        policies=tuple(policies),
        robot_start=RobotState(sx, sy, sth, 0.0, 0.0),
        goal=tuple(robot["goal"]),
        bounds=tuple(data["bounds"]),
        time_limit=data.get("time_limit", DEFAULT_TIME_LIMIT),
        seed=data.get("seed", 0),
    )
