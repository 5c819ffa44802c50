"""Exception hierarchy shared across the package."""


class EcgiTvError(Exception):
    """Base class for all library errors."""


class ConfigurationError(EcgiTvError):
    """Invalid or degenerate configuration values."""


class TopologyError(EcgiTvError):
    """Mesh connectivity violates an assumption (loops, adjacency)."""


class CapacityError(EcgiTvError):
    """Request exceeds what the geometry can provide (e.g. electrode count)."""


class MeshFormatError(EcgiTvError):
    """Malformed mesh or bundle file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(EcgiTvError):
    """Operand sizes do not match the operator contract."""


class SingularSystemError(EcgiTvError):
    """A linear system that the method requires to be SPD is singular."""


class IllPosedGeometryError(EcgiTvError):
    """Schur complement of the transfer operator is singular."""


class DivergenceError(EcgiTvError):
    """Iterative solver diverged (step-size contract violated)."""


class UnreachableNodeError(EcgiTvError):
    """Activation front cannot reach part of the tissue."""


class UndefinedMetricError(EcgiTvError):
    """Metric is undefined for the given input (e.g. constant ground truth)."""


class StageError(EcgiTvError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
