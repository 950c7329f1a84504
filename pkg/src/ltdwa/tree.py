"""Long-horizon state-cost tree: DWA expansion per layer, voxel sampling to
cap layer growth, discounted cost accumulation and best-branch backtracking."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    KinodynamicLimits,
    PlannerParams,
    RobotState,
    wrap_angle_array,
)
from .distfield import TimeVaryingDistanceFields
from .errors import EmptyLayer
from .navref import ReferencePath


@dataclass(frozen=True)
class Layer:
    states: np.ndarray  # (M, 5)
    costs: np.ndarray  # (M,)
    parents: np.ndarray  # (M,) index into previous layer, -1 at the root


@dataclass
class StateCostTree:
    layers: list
    expanded_total: int = 0  # nodes generated before sampling, all layers

    @property
    def depth(self) -> int:
        """Number of non-root layers."""
        return len(self.layers) - 1

    def dump_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for i, layer in enumerate(self.layers):
                for m in range(layer.states.shape[0]):
                    fh.write(
                        json.dumps(
                            {
                                "frame": i,
                                "state": [float(v) for v in layer.states[m]],
                                "cost": float(layer.costs[m]),
                                "parent": int(layer.parents[m]),
                            }
                        )
                        + "\n"
                    )


@dataclass(frozen=True)
class InitialSequence:
    """Best branch of the tree; degenerate when shorter than the horizon."""

    states: np.ndarray  # (M+1, 5), states[0] is the robot's current state
    degenerate: bool
    cost: float = 0.0


def voxel_bounds(states: np.ndarray) -> tuple:
    """SE(2) bounding box of a layer; the theta axis covers the full circle
    when the wrapped spread exceeds pi."""
    x_lo, x_hi = states[:, 0].min(), states[:, 0].max()
    y_lo, y_hi = states[:, 1].min(), states[:, 1].max()
    th = wrap_angle_array(states[:, 2])
    th_lo, th_hi = th.min(), th.max()
    if th_hi - th_lo > np.pi:
        th_lo, th_hi = -np.pi, np.pi
    return (x_lo, x_hi, y_lo, y_hi, th_lo, th_hi)


def voxel_ids(states: np.ndarray, w_voxels: int) -> np.ndarray:
    """Flat voxel index of each node within the layer's SE(2) box."""
    x_lo, x_hi, y_lo, y_hi, th_lo, th_hi = voxel_bounds(states)
    th = wrap_angle_array(states[:, 2])

    def axis_idx(vals, lo, hi):
        span = hi - lo
        if span <= 0.0:
            return np.zeros(len(vals), dtype=np.int64)
        idx = ((vals - lo) / span * w_voxels).astype(np.int64)
        return np.minimum(idx, w_voxels - 1)

    ix = axis_idx(states[:, 0], x_lo, x_hi)
    iy = axis_idx(states[:, 1], y_lo, y_hi)
    it = axis_idx(th, th_lo, th_hi)
    return (ix * w_voxels + iy) * w_voxels + it


def voxel_sample_indices(states: np.ndarray, w_voxels: int, rng) -> np.ndarray:
    """One uniformly random survivor per non-empty voxel; output indices are
    ascending so insertion order is preserved."""
    if states.shape[0] == 0:
        raise EmptyLayer("voxel sampling on an empty layer")
    ids = voxel_ids(states, w_voxels)
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    starts = np.flatnonzero(np.concatenate([[True], sorted_ids[1:] != sorted_ids[:-1]]))
    counts = np.diff(np.append(starts, len(sorted_ids)))
    picks = starts + rng.integers(0, counts)
    return np.sort(order[picks])


def random_sample_indices(states: np.ndarray, k: int, rng) -> np.ndarray:
    """Random-sampling ablation: min(k, layer size) nodes without replacement."""
    if states.shape[0] == 0:
        raise EmptyLayer("random sampling on an empty layer")
    m = states.shape[0]
    if m <= k:
        return np.arange(m)
    return np.sort(rng.choice(m, size=k, replace=False))


def expand_states(
    s: RobotState,
    lim: KinodynamicLimits,
    params: PlannerParams,
    fields: TimeVaryingDistanceFields,
    i: int,
) -> list:
    """All collision-free one-step expansions of a single state at frame i."""
    apos = fields.agent_positions(i)
    arad = fields.agents[:, 4]
    children, _ = kernels.expand_layer(
        s.as_array().reshape(1, 5),
        lim.as_array(),
        params.dt,
        params.v_samples,
        apos,
        arad,
        fields.grid_ctx,
        lim.radius,
    )
    return [RobotState.from_array(row) for row in children]


def calc_cost(state, ref_pose, fields: TimeVaryingDistanceFields, i: int,
              params: PlannerParams) -> float:
    """gamma^i * (w_c * d_i(x, y) + navigation penalties) for one state."""
    arr = state.as_array() if isinstance(state, RobotState) else np.asarray(state, dtype=float)
    costs = kernels.layer_costs(
        arr.reshape(1, 5),
        np.asarray(ref_pose, dtype=float),
        params.gamma**i,
        fields.frame_time(i),
        fields.agents,
        fields.grid_ctx,
        params,
        fields.robot_radius,
    )
    return float(costs[0])


def build_tree(
    robot: RobotState,
    ref: ReferencePath,
    fields: TimeVaryingDistanceFields,
    lim: KinodynamicLimits,
    params: PlannerParams,
    rng,
    sampling_mode: str = "voxel",
) -> StateCostTree:
    """Layered tree construction: expand, gate with sampling when the layer
    outgrows k', then assign costs; stops early on an empty layer."""
    root = Layer(
        states=robot.as_array().reshape(1, 5),
        costs=np.zeros(1),
        parents=np.array([-1], dtype=np.int64),
    )
    layers = [root]
    expanded_total = 0
    lim_arr = lim.as_array()
    arad = fields.agents[:, 4]
    grid_ctx = fields.grid_ctx
    for i in range(1, params.n + 1):
        prev = layers[-1]
        apos = fields.agent_positions(i)
        children, parents = kernels.expand_layer(
            prev.states, lim_arr, params.dt, params.v_samples,
            apos, arad, grid_ctx, lim.radius,
        )
        expanded_total += children.shape[0]
        if children.shape[0] == 0:
            break
        if children.shape[0] > params.k_prime:
            if sampling_mode == "voxel":
                keep = voxel_sample_indices(children, params.w_voxels, rng)
            elif sampling_mode == "random":
                keep = random_sample_indices(children, params.k_prime, rng)
            else:
                raise ValueError(f"unknown sampling mode {sampling_mode!r}")
            children = children[keep]
            parents = parents[keep]
        step_costs = kernels.layer_costs(
            children, ref.poses[i], params.gamma**i, fields.frame_time(i),
            fields.agents, grid_ctx, params, lim.radius,
        )
        costs = prev.costs[parents] + step_costs
        layers.append(Layer(children, costs, parents.astype(np.int64)))
    return StateCostTree(layers, expanded_total)


def backtrack_best(tree: StateCostTree, horizon: int | None = None) -> InitialSequence:
    """Minimum-cost node of the deepest layer (first on ties), walked back
    to the root."""
    deepest = tree.layers[-1]
    idx = int(np.argmin(deepest.costs))
    best_cost = float(deepest.costs[idx])
    states = []
    for layer in reversed(tree.layers):
        states.append(layer.states[idx])
        idx = int(layer.parents[idx])
    seq = np.array(states[::-1])
    degenerate = horizon is not None and tree.depth < horizon
    return InitialSequence(seq, degenerate, best_cost)
