"""Exception hierarchy shared across the planner, simulator and bench."""


class LtdwaError(Exception):
    """Base class for all package errors."""


class InfeasibleState(LtdwaError):
    """Robot velocity outside the recoverable window (flagged, not fatal)."""


class EmptyGrid(LtdwaError):
    pass


class FrameOutOfRange(LtdwaError):
    pass


class NoPath(LtdwaError):
    pass


class StartOccupied(LtdwaError):
    pass


class GoalOccupied(LtdwaError):
    pass


class EmptyPath(LtdwaError):
    pass


class EmptyLayer(LtdwaError):
    pass


class LengthMismatch(LtdwaError):
    pass


class NumericalFailure(LtdwaError):
    pass


class SequenceTooShort(LtdwaError):
    pass


class TraceExhausted(LtdwaError):
    pass


class ConfigError(LtdwaError):
    pass


class UnknownFormat(LtdwaError):
    pass
