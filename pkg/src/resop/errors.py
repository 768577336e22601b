"""Exception types shared across the package."""


class ResopError(Exception):
    """Base class for all package errors."""


class ConfigError(ResopError):
    """Invalid configuration or arguments violating an operation's preconditions."""


class ShapeError(ResopError):
    """Array dimensions inconsistent with the declared model or data layout."""


class GraphError(ResopError):
    """Malformed computation-graph request (dangling node, non-scalar loss, ...)."""


class NumericalError(ResopError):
    """A numerical routine failed to produce a trustworthy result."""


class TrainingError(ResopError):
    """Training could not proceed (non-finite gradients, invalid state)."""


class TrainingDiverged(TrainingError):
    """Loss blew up or became non-finite; carries the last good checkpoint."""

    def __init__(self, message, checkpoint=None, log=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.log = log if log is not None else []


class DomainError(ResopError):
    """Coordinate outside the domain an operator model was built for."""


class UnsupportedConfigError(ResopError):
    """A requested backend/activation combination is not supported."""


class EvaluationError(ResopError):
    """Evaluation requested without the required reference data."""
