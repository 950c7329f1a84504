"""Episode batch runner, metric aggregation and ablation switches."""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .distfield import TimeVaryingDistanceFields
from .errors import UnknownFormat
from .planner import PlannerConfig
from .sim import EpisodeRecord, run_episode

OUTCOMES = ("Success", "AgentCollision", "GridCollision", "OutOfBounds", "Timeout", "Failed")


@dataclass(frozen=True)
class AblationConfig:
    optimizer_enabled: bool = True
    sampling_mode: str = "voxel"  # "voxel" | "random"
    field_mode: str = "time-varying"  # "time-varying" | "traditional"

    @property
    def label(self) -> str:
        if self.field_mode == "traditional":
            return "Trad."
        if self.sampling_mode == "random":
            return "Rand."
        if not self.optimizer_enabled:
            return "No Opt."
        return "Complete"

    def apply(self, config: PlannerConfig) -> PlannerConfig:
        return replace(
            config,
            optimizer_enabled=self.optimizer_enabled,
            sampling_mode=self.sampling_mode,
            field_mode=self.field_mode,
        )


@dataclass(frozen=True)
class MetricsSummary:
    label: str
    episodes: int
    success_rate: float
    safety: float  # mean over episodes of min grid clearance; nan without grids
    safety_min: float  # global minimum across episodes
    safety_count: int
    nav_time: float  # mean seconds to goal, successes only
    nav_time_count: int
    mean_ang_vel: float
    mean_lin_acc: float
    mean_ang_acc: float
    plan_time_mean: float  # ms
    plan_time_std: float
    plan_time_max: float
    outcome_counts: dict

    COLUMNS = (
        "label", "episodes", "success_rate", "safety", "nav_time",
        "mean_ang_vel", "mean_lin_acc", "mean_ang_acc",
        "plan_time_mean", "plan_time_std", "plan_time_max",
    )

    def row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "safety": None if math.isnan(self.safety) else self.safety,
            "safety_min": None if math.isnan(self.safety_min) else self.safety_min,
            "safety_count": self.safety_count,
            "nav_time": None if math.isnan(self.nav_time) else self.nav_time,
            "nav_time_count": self.nav_time_count,
            "mean_ang_vel": self.mean_ang_vel,
            "mean_lin_acc": self.mean_lin_acc,
            "mean_ang_acc": self.mean_ang_acc,
            "plan_time_mean": self.plan_time_mean,
            "plan_time_std": self.plan_time_std,
            "plan_time_max": self.plan_time_max,
            "outcome_counts": self.outcome_counts,
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsSummary":
        nan = float("nan")
        return MetricsSummary(
            label=d["label"],
            episodes=d["episodes"],
            success_rate=d["success_rate"],
            safety=nan if d["safety"] is None else d["safety"],
            safety_min=nan if d.get("safety_min") is None else d["safety_min"],
            safety_count=d["safety_count"],
            nav_time=nan if d["nav_time"] is None else d["nav_time"],
            nav_time_count=d["nav_time_count"],
            mean_ang_vel=d["mean_ang_vel"],
            mean_lin_acc=d["mean_lin_acc"],
            mean_ang_acc=d["mean_ang_acc"],
            plan_time_mean=d["plan_time_mean"],
            plan_time_std=d["plan_time_std"],
            plan_time_max=d["plan_time_max"],
            outcome_counts=d["outcome_counts"],
        )


def summarize(records: list, label: str = "Complete") -> MetricsSummary:
    """Deterministic fold over episode records (in seed order)."""
    n = len(records)
    successes = [r for r in records if r.outcome == "Success"]
    clearances = [r.min_grid_clearance for r in records if math.isfinite(r.min_grid_clearance)]
    ang_vel, lin_acc, ang_acc = [], [], []
    latencies = []
    for r in records:
        av, la, aa = r.jitter_samples()
        ang_vel.append(av)
        lin_acc.append(la)
        ang_acc.append(aa)
        latencies.append(r.latencies_ms())
    ang_vel = np.concatenate(ang_vel) if ang_vel else np.zeros(0)
    lin_acc = np.concatenate(lin_acc) if lin_acc else np.zeros(0)
    ang_acc = np.concatenate(ang_acc) if ang_acc else np.zeros(0)
    latencies = np.concatenate(latencies) if latencies else np.zeros(0)
    nan = float("nan")
    counts = {k: sum(1 for r in records if r.outcome == k) for k in OUTCOMES}
    return MetricsSummary(
        label=label,
        episodes=n,
        success_rate=len(successes) / n if n else nan,
        safety=float(np.mean(clearances)) if clearances else nan,
        safety_min=float(np.min(clearances)) if clearances else nan,
        safety_count=len(clearances),
        nav_time=float(np.mean([r.nav_time for r in successes])) if successes else nan,
        nav_time_count=len(successes),
        mean_ang_vel=float(ang_vel.mean()) if ang_vel.size else nan,
        mean_lin_acc=float(lin_acc.mean()) if lin_acc.size else nan,
        mean_ang_acc=float(ang_acc.mean()) if ang_acc.size else nan,
        plan_time_mean=float(latencies.mean()) if latencies.size else nan,
        plan_time_std=float(latencies.std()) if latencies.size else nan,
        plan_time_max=float(latencies.max()) if latencies.size else nan,
        outcome_counts=counts,
    )


def _run_one(args):
    generator, seed, config = args
    try:
        scenario = generator(seed)
        return seed, run_episode(scenario, config)
    except Exception:  # noqa: BLE001 - bench never aborts on one episode
        return seed, EpisodeRecord([], "Failed", seed, float("inf"))


def run_batch(
    scenario_generator,
    episodes: int,
    config: PlannerConfig,
    ablation: AblationConfig | None = None,
    base_seed: int = 0,
    parallelism: int = 1,
    out_dir=None,
    label: str | None = None,
):
    """Run ``episodes`` seeded episodes and aggregate.

    Returns (MetricsSummary, records). Aggregation is a sequential fold in
    seed order, so the parallelism degree never changes the summary.
    """
    if episodes < 1:
        raise ValueError("run_batch: episodes must be >= 1")
    if ablation is not None:
        config = ablation.apply(config)
        if label is None:
            label = ablation.label
    if label is None:
        label = "Complete"
    jobs = [(scenario_generator, base_seed + k, config) for k in range(episodes)]
    if parallelism > 1:
        with multiprocessing.get_context("spawn").Pool(parallelism) as pool:
            results = pool.map(_run_one, jobs)
    else:
        results = [_run_one(job) for job in jobs]
    results.sort(key=lambda sr: sr[0])
    records = [r for _, r in results]
    summary = summarize(records, label)
    if out_dir is not None:
        write_results(out_dir, summary, records)
    return summary, records


def write_results(out_dir, summary: MetricsSummary, records) -> None:
    """results/<name>/summary.{csv,json} plus per-episode JSON lines."""
    out = Path(out_dir)
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(report(summary, "csv"))
    (out / "summary.json").write_text(report(summary, "json"))
    for r in records:
        r.write_jsonl(out / "episodes" / f"{r.scenario_seed}.jsonl")


def traditional_field(grid, agents, i, x, y, params, robot_radius: float):
    """Ablation baseline field: agents frozen at frame 0 as static isotropic
    discs combined with the (time-invariant) grid field."""
    fields = TimeVaryingDistanceFields(agents, grid, params, robot_radius,
                                       time_varying=False)
    return fields.value(i, x, y)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def report(summary, fmt: str) -> str:
    """Render one summary (or a list of summaries) as csv, text or json."""
    summaries = summary if isinstance(summary, (list, tuple)) else [summary]
    if fmt == "csv":
        lines = [",".join(MetricsSummary.COLUMNS)]
        for s in summaries:
            lines.append(",".join(_fmt(v) for v in s.row()))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        payload = [s.to_dict() for s in summaries]
        return json.dumps(payload[0] if len(payload) == 1 else payload, indent=2) + "\n"
    if fmt == "text":
        # Metric column order mirrors the static-environment comparison table.
        cols = [
            ("Method", "label"), ("Succ. Rate", "success_rate"), ("Safety (m)", "safety"),
            ("Nav. Time (s)", "nav_time"), ("Mean Ang. vel. (rad/s)", "mean_ang_vel"),
            ("Mean Lin. acc. (m/s^2)", "mean_lin_acc"),
            ("Mean Ang. acc. (rad/s^2)", "mean_ang_acc"),
            ("Time Consuming (ms)", "plan_time_mean"),
        ]
        rows = [[h for h, _ in cols]]
        for s in summaries:
            rows.append([_fmt(getattr(s, attr)) for _, attr in cols])
        widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in rows
        ) + "\n"
    raise UnknownFormat(f"unknown report format {fmt!r}")
