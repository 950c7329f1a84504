#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the hot kernels (field evaluation, layer expansion, layer costing, and a
full tree build) under the current backend and reports per-call timings.  When
invoked without arguments it re-executes itself twice — once normally and once
with LTDWA_NO_NUMBA=1 — and prints a side-by-side comparison.

Usage:
    python3 benchmarks/kernel_bench.py            # compare both backends
    python3 benchmarks/kernel_bench.py --single   # time the active backend only
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _timeit(fn, repeats):
    fn()  # warm-up (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3  # ms


def run_single(repeats):
    import numpy as np

    from ltdwa import Agent, KinodynamicLimits, PlannerParams, RobotState
    from ltdwa import kernels
    from ltdwa.distfield import TimeVaryingDistanceFields
    from ltdwa.navref import ReferencePath
    from ltdwa.tree import build_tree

    rng = np.random.default_rng(0)
    params = PlannerParams()
    lim = KinodynamicLimits()
    agents = [
        Agent(rng.uniform(-4, 4), rng.uniform(-4, 4),
              rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), 0.3)
        for _ in range(20)
    ]
    fields = TimeVaryingDistanceFields(agents, None, params, lim.radius)
    qx = rng.uniform(-4, 4, 512)
    qy = rng.uniform(-4, 4, 512)

    states = np.column_stack([
        rng.uniform(-2, 2, 200), rng.uniform(-2, 2, 200),
        rng.uniform(-np.pi, np.pi, 200),
        rng.uniform(0, 1, 200), rng.uniform(-1, 1, 200),
    ])
    lim_arr = lim.as_array()

    poses = np.zeros((params.n + 1, 3))
    poses[:, 0] = 0.2 * np.arange(params.n + 1)
    ref = ReferencePath(poses, 10.0 - poses[:, 0])
    robot = RobotState(0.0, 0.0, 0.0, 0.5, 0.0)

    def bench_field():
        for i in range(1, params.n + 1):
            kernels.agent_gauss(fields.agents, i * params.dt, qx, qy,
                                params.eta, params.beta, lim.radius)

    def bench_expand():
        kernels.expand_layer(
            states, lim_arr, params.dt, params.v_samples,
            fields.agent_positions(1), fields.agents[:, 4],
            fields.grid_ctx, lim.radius,
        )

    def bench_costs():
        kernels.layer_costs(
            states, np.array([0.5, 0.0, 0.1]), 0.9 ** 3, 3 * params.dt,
            fields.agents, fields.grid_ctx, params, lim.radius,
        )

    def bench_tree():
        build_tree(robot, ref, fields, lim, params, np.random.default_rng(7))

    return {
        "backend": "numba" if kernels.NUMBA_ENABLED else "numpy",
        "field_values_ms": _timeit(bench_field, repeats),
        "expand_layer_ms": _timeit(bench_expand, repeats),
        "layer_costs_ms": _timeit(bench_costs, repeats),
        "build_tree_ms": _timeit(bench_tree, max(3, repeats // 3)),
    }


def run_compare(repeats):
    rows = []
    for env_flag in ("0", "1"):
        env = dict(os.environ, LTDWA_NO_NUMBA=env_flag)
        out = subprocess.run(
            [sys.executable, __file__, "--single", "--repeats", str(repeats),
             "--json"],
            env=env, capture_output=True, text=True, check=True,
        )
        rows.append(json.loads(out.stdout))

    keys = ["field_values_ms", "expand_layer_ms", "layer_costs_ms", "build_tree_ms"]
    header = f"{'kernel':<18}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for key in keys:
        vals = [r[key] for r in rows]
        speed = vals[1] / vals[0] if vals[0] > 0 else float("inf")
        print(f"{key[:-3]:<18}" + "".join(f"{v:12.3f}" for v in vals) + f"{speed:9.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--single", action="store_true",
                    help="time the active backend only")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--json", action="store_true",
                    help="emit machine-readable output (with --single)")
    args = ap.parse_args()
    if args.single:
        result = run_single(args.repeats)
        if args.json:
            print(json.dumps(result))
        else:
            for k, v in result.items():
                print(f"{k}: {v}" if isinstance(v, str) else f"{k}: {v:.3f}")
    else:
        run_compare(args.repeats)


if __name__ == "__main__":
    main()
