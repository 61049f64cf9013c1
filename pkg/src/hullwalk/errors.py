"""Exception types shared across the package."""


class HullwalkError(Exception):
    """Base class for all package-specific errors."""


class DegenerateLine(HullwalkError):
    """Projection line defined by two (near-)coincident points."""


class InteriorInsertion(HullwalkError):
    """A point strictly inside the hull was inserted (walk-engine bug)."""


class NotOnBoundary(HullwalkError):
    """Cone query for a point that is not on the hull boundary."""


class DegenerateFrame(HullwalkError):
    """Lens frame requested for a (near-)zero-length diametral segment."""


class QuadratureFailure(HullwalkError):
    """Adaptive quadrature could not reach the required error target."""


class InsufficientData(HullwalkError):
    """Estimator invoked with too few observations to be meaningful."""


class ModeMismatch(HullwalkError):
    """Operation requires trajectories from the other sampler mode."""


class InternalError(HullwalkError):
    """Invariant broken at runtime; indicates a bug, not bad input."""
