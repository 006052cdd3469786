"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A non-finite value appeared during integration or guidance.

    ``where`` identifies the substep, knot or particle that failed.
    """

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} (at {where})")
        self.where = where


class DegenerateSchedule(ValueError):
    """Interpolant schedule with a vanishing posterior-mean denominator."""


class DegenerateTilt(RuntimeError):
    """Importance-sampling tilt with too small an effective sample size."""


class ConfigError(ValueError):
    """Malformed or unknown experiment configuration."""
