"""Exception hierarchy shared by all modules."""


class DSREError(Exception):
    """Base class for errors raised by this package."""


class NonIntegrable(DSREError):
    """Quadrature did not converge; the requested moment is likely infinite."""


class TiltNotNormalized(DSREError):
    """The tilting exponent does not make the tilted law a probability."""


class NoRootInRange(DSREError):
    pass


class StationarityViolated(DSREError):
    """Top-Lyapunov condition E log|b + cM| < 0 fails for some coordinate."""

    def __init__(self, message, coordinates=()):
        super().__init__(message)
        self.coordinates = tuple(coordinates)


class ConfigError(DSREError):
    pass


class CaseOrderingViolated(DSREError):
    pass


class InsufficientExceedances(DSREError):
    pass


class DimensionError(DSREError):
    pass


class ZeroVector(DSREError):
    pass


class WindowTooShort(DSREError):
    pass


class NonPositiveConstant(DSREError):
    pass


class DegenerateSample(DSREError):
    pass


class PassageTimeout(DSREError):
    pass
