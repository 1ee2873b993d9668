"""Exception types shared across the package."""


class KGBohmError(Exception):
    """Base class for all package-specific errors."""


class SpeedNotSubluminal(KGBohmError):
    """Boost velocity has |beta| >= 1 (up to the subluminal guard band)."""


class NonpositiveMass(KGBohmError):
    pass


class EmptyExpansion(KGBohmError):
    """Wave function constructed with no expansion terms."""


class BadArity(KGBohmError):
    """A term's mode count does not match the particle count."""


class TooManyTerms(KGBohmError):
    """Expansion would exceed the term cap (or symmetrization would)."""


class AlreadySymmetrized(KGBohmError):
    pass


class ArityMismatch(KGBohmError):
    """Configuration shape does not match the wave function's particle count."""


class IndexOutOfRange(KGBohmError):
    """Particle or component index outside the valid range."""


class NodeEncountered(KGBohmError):
    """The density 2m psi*psi fell to (or below) the node threshold.

    Raised by pointwise operations; also stored un-raised as a trajectory
    termination record, carrying the parameter value and offending density.
    """

    def __init__(self, s: float = 0.0, density: float = 0.0):
        self.s = float(s)
        self.density = float(density)
        super().__init__(f"density {self.density:g} at or below node threshold (s={self.s:g})")


class NonuniformSpacing(KGBohmError):
    """Trajectory samples are not equally spaced in the curve parameter."""


class NotOnSurface(KGBohmError):
    pass


class InitialDensityNegative(KGBohmError):
    """Surface density j < 0 somewhere on the sampled initial-surface window."""

    def __init__(self, point, value: float):
        self.point = point
        self.value = float(value)
        super().__init__(f"surface density {self.value:g} < 0 at {list(point)}")


class MaxDensityNotFound(KGBohmError):
    """Rejection-sampling pre-scan found no positive density on the patch."""


class PatchMismatch(KGBohmError):
    """Ensemble result and partition were built on different patches."""


class TooManyUnresolved(KGBohmError):
    """Unresolved-cell fraction of a partition exceeds the allowed threshold."""


class ConfigError(KGBohmError):
    """Scenario configuration failed to parse or validate.

    ``field`` holds a dotted path naming the offending entry.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
