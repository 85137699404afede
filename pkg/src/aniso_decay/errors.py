"""Exception hierarchy shared by every stage of the package."""


class AnisoDecayError(Exception):
    """Base class for all errors raised by aniso_decay."""


class GridError(AnisoDecayError, ValueError):
    """Invalid grid parameters or a field living on a foreign grid."""


class RepresentationError(AnisoDecayError, ValueError):
    """A physical field was given where a spectral one was expected, or the reverse."""


class OperatorError(AnisoDecayError, ValueError):
    """Invalid operator input: bad kernel spec, negative time, non-solenoidal field."""


class CFLViolation(AnisoDecayError):
    """The requested time step exceeds the advective stability limit."""

    def __init__(self, max_speed: float, dt: float, limit: float):
        self.max_speed = max_speed
        self.dt = dt
        self.limit = limit
        super().__init__(
            f"dt={dt:.6g} exceeds CFL limit {limit:.6g} (max|u|={max_speed:.6g})"
        )


class NonFiniteError(AnisoDecayError):
    """The solution picked up NaN or Inf values."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"non-finite values in the solution at t={t:.6g}")


class ScheduleError(AnisoDecayError, ValueError):
    """A requested time is not on the snapshot grid or the store is too coarse."""


class ProfileError(AnisoDecayError, LookupError):
    """An asymptotic expansion needs a profile that has not been computed."""


class FitError(AnisoDecayError, ValueError):
    """A decay series cannot be fitted (short window, nonpositive values)."""


class ConfigError(AnisoDecayError, ValueError):
    """Malformed, incomplete or inconsistent experiment configuration."""


class StageError(AnisoDecayError):
    """Wraps an error raised inside run_experiment and names the failing stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class SnapshotFormatError(AnisoDecayError, ValueError):
    """A snapshot file is truncated, has a bad magic, or disagrees with its manifest."""
