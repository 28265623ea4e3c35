"""Exception types shared across the package."""


class EhgoSimError(Exception):
    """Base class for all package-specific errors."""


class SingularOrientation(EhgoSimError):
    """Roll or pitch entered the guard band around the Euler-angle singularity."""


class NegativeThrust(EhgoSimError):
    """Total thrust command was negative."""


class RankDeficientMixer(EhgoSimError):
    """Mixing matrix does not have full row rank; wrench space is not reachable."""


class InfeasibleWrench(EhgoSimError):
    """Allocation required a negative squared rotor rate beyond tolerance.

    Carries the clamped fallback so callers can log the event and continue:
    ``omega_des`` holds the rate vector with negative squares clamped to zero,
    ``clamp_magnitude`` the largest clamped squared-rate value.
    """

    def __init__(self, message, omega_des=None, clamp_magnitude=0.0):
        super().__init__(message)
        self.omega_des = omega_des
        self.clamp_magnitude = clamp_magnitude


class DegenerateForcing(EhgoSimError):
    """Forcing vector leaves the commanded thrust direction undefined."""


class NotHurwitz(EhgoSimError):
    """A characteristic polynomial has a root with nonnegative real part."""


class IllConditioned(EhgoSimError):
    """A matrix-equation solve produced a residual above tolerance."""


class Diverged(EhgoSimError):
    """Simulation state norm exceeded the divergence guard.

    ``step`` is the index of the integration step at which the guard fired.
    """

    def __init__(self, message, step=-1):
        super().__init__(message)
        self.step = step


class NonFiniteState(EhgoSimError):
    """A NaN or infinity appeared in the integrated state."""

    def __init__(self, message, step=-1):
        super().__init__(message)
        self.step = step


class ParseError(EhgoSimError):
    """Config file could not be parsed; carries the offending line number."""

    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(EhgoSimError):
    """A config field violates its constraint."""

    def __init__(self, field, constraint):
        super().__init__(f"{field}: must satisfy {constraint}")
        self.field = field
        self.constraint = constraint
