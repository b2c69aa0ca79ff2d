"""Exception types shared across the toolkit."""


class ConsensusLabError(Exception):
    """Base class for all toolkit errors."""


class GraphError(ConsensusLabError):
    """Invalid digraph data, thresholds, or rank-deficient Laplacians."""


class OperatorError(ConsensusLabError):
    """Operator misuse: unsupported kind, inadmissible stage placement."""


class InsufficientHistoryError(OperatorError):
    """A delayed operator was evaluated without the history it needs."""


class NumericError(ConsensusLabError):
    """Non-finite values fed into an evaluation."""


class ShapeError(ConsensusLabError):
    """Dimension mismatch between stages, states, or graphs."""


class DivergenceError(ConsensusLabError):
    """Simulation blew up. Carries the blow-up time and the partial trajectory."""

    def __init__(self, time, trajectory=None):
        super().__init__(f"state diverged at t = {time:.6g}")
        self.time = time
        self.trajectory = trajectory


class ConfigError(ConsensusLabError):
    """Scenario configuration rejected. Carries the offending line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
