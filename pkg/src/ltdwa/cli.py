"""Command-line front end: planning, episodes, batches, ablations, dumps."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .bench import AblationConfig, report, run_batch
from .core import Agent, OccupancyGrid, RobotState
from .distfield import TimeVaryingDistanceFields, build_grid_distance_transform
from .errors import ConfigError, LtdwaError, NumericalFailure
from .kernels import warm_up
from .navref import NavigationPath, plan_global, straight_line_path
from .planner import Planner, PlannerConfig
from .sim import (
    make_circle_scenario,
    make_hybrid_scenario,
    make_static_scenario,
    run_episode,
    scenario_from_json,
)

log = logging.getLogger("ltdwa")


def _load_config(path) -> PlannerConfig:
    if path is None:
        return PlannerConfig()
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    return PlannerConfig.from_json(path)


def _apply_flags(config: PlannerConfig, args) -> PlannerConfig:
    ablation = AblationConfig(
        optimizer_enabled=not getattr(args, "no_opt", False),
        sampling_mode="random" if getattr(args, "rand_sampling", False) else "voxel",
        field_mode="traditional" if getattr(args, "trad_field", False) else "time-varying",
    )
    config = ablation.apply(config)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        config = replace(config, base_seed=args.seed)
    return config


def _load_snapshot(path, config: PlannerConfig):
    """World snapshot JSON -> (robot, agents, grid transform, nav path)."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"snapshot file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        robot = RobotState(*[float(v) for v in data["robot"]])
        agents = tuple(
            Agent(a["x"], a["y"], a.get("vx", 0.0), a.get("vy", 0.0), a.get("r", 0.3))
            for a in data.get("agents", [])
        )
        grid = None
        if data.get("grid_file"):
            grid = OccupancyGrid.from_file(Path(path).parent / data["grid_file"])
        gdt = build_grid_distance_transform(grid) if grid is not None else None
        if data.get("nav_path"):
            nav = NavigationPath.from_xy(np.asarray(data["nav_path"], dtype=float))
        elif "goal" in data:
            goal = tuple(data["goal"])
            if grid is not None and grid.cells.any():
                nav = plan_global(grid, (robot.x, robot.y), goal)
            else:
                nav = straight_line_path((robot.x, robot.y), goal)
        else:
            raise ConfigError(f"{path}: snapshot needs either nav_path or goal")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad snapshot: {exc}") from exc
    return robot, agents, gdt, nav


def _states_json(states: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.asarray(states)]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_plan_once(args) -> int:
    config = _apply_flags(_load_config(args.config), args)
    robot, agents, gdt, nav = _load_snapshot(args.snapshot, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    planner = Planner(config, nav, gdt)
    failed = False
    try:
        result = planner.plan(robot, agents, 0, keep_debug=True)
    except NumericalFailure as exc:
        log.error("optimizer numerical failure: %s; writing unoptimized fallback", exc)
        failed = True
        from dataclasses import replace

        planner = Planner(replace(config, optimizer_enabled=False), nav, gdt)
        result = planner.plan(robot, agents, 0, keep_debug=True)
    _write_json(
        out / "initial.json",
        {
            "states": _states_json(result.initial.states),
            "cost": result.initial.cost,
            "degenerate": result.degenerate,
        },
    )
    _write_json(
        out / "optimized.json",
        {
            "states": _states_json(result.optimized),
            "executed": _states_json(result.executed),
            "controls": _states_json(result.controls),
            "converged": result.opt_converged,
            "objective": None if math.isnan(result.opt_objective) else result.opt_objective,
            "fallback": failed,
        },
    )
    _write_json(
        out / "command.json",
        {"a_v": result.command.a_v, "a_omega": result.command.a_omega},
    )
    with open(out / "costs.csv", "w") as fh:
        fh.write("frame,field_value\n")
        for i, row in enumerate(np.asarray(result.executed)):
            fh.write(f"{i},{result.fields.value(i, row[0], row[1]):.12g}\n")
    _write_json(out / "metadata.json", {"latency_ms": result.latency_ms})
    return 3 if failed else 0


def _make_scenario(args, config: PlannerConfig):
    if getattr(args, "scenario", None):
        return scenario_from_json(args.scenario)
    kind = getattr(args, "kind", "circle")
    seed = config.base_seed
    if kind == "circle":
        return make_circle_scenario(args.agents, seed=seed)
    if kind == "static":
        return make_static_scenario(seed=seed)
    if kind == "hybrid":
        return make_hybrid_scenario(seed=seed, n_agents=args.agents)
    raise ConfigError(f"unknown scenario kind {kind!r}")


def cmd_run(args) -> int:
    config = _apply_flags(_load_config(args.config), args)
    scenario = _make_scenario(args, config)
    record = run_episode(scenario, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record.write_jsonl(out / f"{record.scenario_seed}.jsonl")
    print(f"outcome={record.outcome} nav_time={record.nav_time:.1f}s "
          f"steps={len(record.steps)}")
    return 0


def _generator_for(kind: str, agents: int):
    if kind == "circle":
        return _CircleGen(agents)
    if kind == "static":
        return make_static_scenario
    if kind == "hybrid":
        return _HybridGen(agents)
    raise ConfigError(f"unknown scenario kind {kind!r}")


class _CircleGen:
    """Picklable seeded scenario factory for worker processes."""

    def __init__(self, agents: int):
        self.agents = agents

    def __call__(self, seed: int):
        return make_circle_scenario(self.agents, seed=seed)


class _HybridGen:
    def __init__(self, agents: int):
        self.agents = agents

    def __call__(self, seed: int):
        return make_hybrid_scenario(seed=seed, n_agents=self.agents)


def cmd_bench(args) -> int:
    config = _apply_flags(_load_config(args.config), args)
    generator = _generator_for(args.kind, args.agents)
    summary, _ = run_batch(
        generator,
        episodes=args.episodes,
        config=config,
        base_seed=config.base_seed,
        parallelism=args.parallel,
        out_dir=args.out,
    )
    print(report(summary, "text"), end="")
    return 0


def cmd_ablate(args) -> int:
    config = _apply_flags(_load_config(args.config), args)
    if args.no_opt or args.rand_sampling or args.trad_field:
        variants = [
            AblationConfig(
                optimizer_enabled=not args.no_opt,
                sampling_mode="random" if args.rand_sampling else "voxel",
                field_mode="traditional" if args.trad_field else "time-varying",
            )
        ]
    else:
        variants = [
            AblationConfig(optimizer_enabled=False),
            AblationConfig(sampling_mode="random"),
            AblationConfig(field_mode="traditional"),
            AblationConfig(),
        ]
    generator = _CircleGen(args.agents)
    summaries = []
    out = Path(args.out) if args.out else None
    for variant in variants:
        row_dir = None
        if out is not None:
            row_dir = out / variant.label.rstrip(".").replace(" ", "_").lower()
        summary, _ = run_batch(
            generator,
            episodes=args.episodes,
            config=config,
            ablation=variant,
            base_seed=config.base_seed,
            parallelism=args.parallel,
            out_dir=row_dir,
        )
        summaries.append(summary)
    text = report(summaries, "text")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(report(summaries, "csv"))
        (out / "summary.json").write_text(report(summaries, "json"))
        (out / "summary.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_dump_field(args) -> int:
    config = _apply_flags(_load_config(args.config), args)
    robot, agents, gdt, _nav = _load_snapshot(args.snapshot, config)
    del robot
    fields = TimeVaryingDistanceFields(
        agents, gdt, config.params, config.limits.radius,
        time_varying=(config.field_mode == "time-varying"),
    )
    xs = np.linspace(args.xmin, args.xmax, args.samples)
    ys = np.linspace(args.ymin, args.ymax, args.samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"field_frame_{args.frame}.csv", "w") as fh:
        fh.write("x,y,value\n")
        for y in ys:
            for x in xs:
                fh.write(f"{x:.12g},{y:.12g},{fields.value(args.frame, x, y):.12g}\n")
    return 0


def cmd_dump_tree(args) -> int:
    config = _apply_flags(_load_config(args.config), args)
    robot, agents, gdt, nav = _load_snapshot(args.snapshot, config)
    planner = Planner(config, nav, gdt)
    result = planner.plan(robot, agents, 0, keep_debug=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.tree.dump_jsonl(out / "tree.jsonl")
    _write_json(
        out / "tree_meta.json",
        {
            "depth": result.tree.depth,
            "expanded_total": result.tree.expanded_total,
            "degenerate": result.degenerate,
        },
    )
    return 0


def _add_common(p, snapshot=False, episodes=False):
    p.add_argument("--config", type=str, default=None, help="planner config JSON")
    p.add_argument("--out", type=str, default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="base seed override")
    p.add_argument("--no-opt", action="store_true", help="disable trajectory optimization")
    p.add_argument("--rand-sampling", action="store_true",
                   help="random layer sampling instead of voxel sampling")
    p.add_argument("--trad-field", action="store_true",
                   help="static (frame-0) distance field instead of time-varying")
    if snapshot:
        p.add_argument("--snapshot", type=str, required=True, help="world snapshot JSON")
    if episodes:
        p.add_argument("--episodes", type=int, default=100)
        p.add_argument("--parallel", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltdwa", description="Long-horizon local planner toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan-once", help="run one planning cycle on a snapshot")
    _add_common(p, snapshot=True)

    p = sub.add_parser("run", help="run one simulated episode")
    _add_common(p)
    p.add_argument("--scenario", type=str, default=None, help="scenario JSON file")
    p.add_argument("--kind", choices=("circle", "static", "hybrid"), default="circle")
    p.add_argument("--agents", type=int, default=10)

    p = sub.add_parser("bench", help="run a seeded episode batch")
    _add_common(p, episodes=True)
    p.add_argument("--kind", choices=("circle", "static", "hybrid"), default="circle")
    p.add_argument("--agents", type=int, default=10)

    p = sub.add_parser("ablate", help="run planner-variant comparison batches")
    _add_common(p, episodes=True)
    p.add_argument("--agents", type=int, default=25)

    p = sub.add_parser("dump-field", help="sample a distance-field frame to CSV")
    _add_common(p, snapshot=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--xmin", type=float, default=-5.0)
    p.add_argument("--xmax", type=float, default=5.0)
    p.add_argument("--ymin", type=float, default=-5.0)
    p.add_argument("--ymax", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=101)

    p = sub.add_parser("dump-tree", help="build and dump the state-cost tree")
    _add_common(p, snapshot=True)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("LTDWA_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "plan-once": cmd_plan_once,
        "run": cmd_run,
        "bench": cmd_bench,
        "ablate": cmd_ablate,
        "dump-field": cmd_dump_field,
        "dump-tree": cmd_dump_tree,
    }
    warm_up()
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except LtdwaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
