"""Long-horizon local planning toolkit for differential-drive robots.

Layers a dynamic-window state-cost tree over time-varying distance fields,
refines the best branch with a Levenberg-Marquardt trajectory graph, and
ships a deterministic crowd/static simulator plus a benchmark harness.
"""

from .core import (
    Agent,
    ControlInput,
    KinodynamicLimits,
    OccupancyGrid,
    PlannerParams,
    RobotState,
    VelocityBox,
    clamp_to_limits,
    dynamic_window,
    step_dynamics,
    wrap_angle,
)
from .distfield import (
    GridDistanceTransform,
    TimeVaryingDistanceFields,
    build_grid_distance_transform,
)
from .ebmpc import (
    LmSettings,
    OptimizedSequence,
    TrajectoryGraph,
    build_graph,
    check_gradients,
    extract_command,
    objective,
    optimize,
    pad_initial,
    project_feasible,
)
from .errors import (
    ConfigError,
    EmptyGrid,
    EmptyLayer,
    EmptyPath,
    FrameOutOfRange,
    GoalOccupied,
    InfeasibleState,
    LtdwaError,
    NoPath,
    NumericalFailure,
    StartOccupied,
    UnknownFormat,
)
from .navref import (
    NavigationPath,
    ReferencePath,
    plan_global,
    reference_path,
    straight_line_path,
)
from .planner import Planner, PlannerConfig, PlanResult
from .sim import (
    EpisodeRecord,
    Scenario,
    make_circle_scenario,
    make_hybrid_scenario,
    make_static_scenario,
    run_episode,
)
from .tree import InitialSequence, StateCostTree, backtrack_best, build_tree

__all__ = [
    "Agent",
    "ControlInput",
    "KinodynamicLimits",
    "OccupancyGrid",
    "PlannerParams",
    "RobotState",
    "VelocityBox",
    "clamp_to_limits",
    "dynamic_window",
    "step_dynamics",
    "wrap_angle",
    "GridDistanceTransform",
    "TimeVaryingDistanceFields",
    "build_grid_distance_transform",
    "LmSettings",
    "OptimizedSequence",
    "TrajectoryGraph",
    "build_graph",
    "check_gradients",
    "extract_command",
    "objective",
    "optimize",
    "pad_initial",
    "project_feasible",
    "ConfigError",
    "EmptyGrid",
    "EmptyLayer",
    "EmptyPath",
    "FrameOutOfRange",
    "GoalOccupied",
    "InfeasibleState",
    "LtdwaError",
    "NoPath",
    "NumericalFailure",
    "StartOccupied",
    "UnknownFormat",
    "NavigationPath",
    "ReferencePath",
    "plan_global",
    "reference_path",
    "straight_line_path",
    "Planner",
    "PlannerConfig",
    "PlanResult",
    "EpisodeRecord",
    "Scenario",
    "make_circle_scenario",
    "make_hybrid_scenario",
    "make_static_scenario",
    "run_episode",
    "InitialSequence",
    "StateCostTree",
    "backtrack_best",
    "build_tree",
]

__version__ = "0.1.0"
