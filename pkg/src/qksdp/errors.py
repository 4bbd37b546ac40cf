"""Exception types shared across the package."""


class QksdpError(Exception):
    """Base class for all package errors."""


class ValidationError(QksdpError):
    """Instance data violates a model invariant."""


class NonSymmetricC(ValidationError):
    pass


class WeightOutOfRange(ValidationError):
    pass


class CapacityTooLarge(ValidationError):
    pass


class DegenerateSize(ValidationError):
    pass


class OddNForConstruction(ValidationError):
    pass


class ParseError(QksdpError):
    """Malformed instance file; message carries line information."""


class DimensionMismatch(QksdpError):
    pass


class SingularProjection(QksdpError):
    """Tangent projection pivot below tolerance (near a non-regular point)."""


class SingularNormalEquations(QksdpError):
    """Dual recovery normal equations nearly singular."""


class RetractionDiverged(QksdpError):
    """Gauss-Newton retraction failed to reach feasibility."""


class NotConverged(QksdpError):
    """Iterative eigensolver exhausted its budget."""


class EigNotConverged(NotConverged):
    pass


class StepFailed(QksdpError):
    """Escape step size underflowed without sufficient decrease."""


class Inconclusive(QksdpError):
    """Escape solve exhausted its budget without a certificate or direction."""


class LineSearchFailed(QksdpError):
    """Inner line search step underflowed."""


class TooLarge(QksdpError):
    """Problem too large for an exhaustive oracle."""
