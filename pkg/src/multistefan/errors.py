"""Exception hierarchy used across the solver."""


class MultiStefanError(Exception):
    """Base class for all solver errors."""


class TopologyError(MultiStefanError):
    """Inconsistent phase/curve/junction description."""


class GeometryError(MultiStefanError):
    """Invalid vertex geometry (collapsed segments, unmatched junctions, ...)."""


class OutOfDomain(GeometryError):
    """A point lies outside the bulk box."""


class ClipError(GeometryError):
    """Segment clipping against the bulk mesh did not produce a partition."""


class DimensionMismatch(MultiStefanError):
    pass


class SolveFailure(MultiStefanError):
    """The linear system was singular or the residual check failed."""


class FixedPointDivergence(SolveFailure):
    """The lagged iteration of the conservative scheme did not converge."""


class DegenerateMesh(GeometryError):
    """A curve segment collapsed during the evolution."""


class SurgeryUnsupported(MultiStefanError):
    """A vanishing phase sits in a configuration the surgery cannot handle."""


class DomainError(MultiStefanError, ValueError):
    """Argument outside the domain of an exact-solution formula."""


class RootBracketError(MultiStefanError):
    pass


class ConfigError(MultiStefanError):
    """Malformed configuration file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
