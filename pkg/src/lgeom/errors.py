"""Exception hierarchy shared by every lgeom module."""


class LGeomError(Exception):
    """Base class for all lgeom errors."""


class ConfigError(LGeomError, ValueError):
    """Invalid parameters or configuration."""


class InvalidGeometry(ConfigError):
    pass


class AlphaOutOfRange(ConfigError):
    pass


class OutOfDomain(LGeomError):
    """A time or coordinate lies outside the flow's domain."""


class DomainMismatch(LGeomError):
    """Curve and flow disagree on chart dimension or time range."""


class GridTooCoarse(LGeomError):
    pass


class DegenerateCurve(LGeomError):
    pass


class StepRejected(LGeomError):
    """Adaptive stepper could not meet its tolerance at the minimum step."""


class BlowUp(LGeomError):
    """Curvature exceeded the configured ceiling during evolution."""


class NoConvergence(LGeomError):
    """Minimizer hit its iteration cap. ``best`` holds the best result found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TailNotNegligible(LGeomError):
    pass


class NonSmoothPoint(LGeomError):
    """Finite differences of the reduced distance are inconsistent (cut locus)."""


class PullbackUndefined(LGeomError):
    pass


class GluingFailure(LGeomError):
    def __init__(self, message, junction=None, residual=None):
        super().__init__(message)
        self.junction = junction
        self.residual = residual


class EndpointMismatch(LGeomError):
    pass


class IllConditioned(LGeomError):
    pass


class Unsupported(LGeomError):
    pass
