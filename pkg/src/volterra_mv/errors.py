"""Exception hierarchy shared by all toolkit modules."""


class VolterraError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(VolterraError, ValueError):
    """An argument lies outside the domain of the operation."""


class DivergenceError(VolterraError, ArithmeticError):
    """A kernel integral is infinite (non-integrable singularity)."""


class DimensionMismatch(VolterraError, ValueError):
    pass


class SizeMismatch(VolterraError, ValueError):
    pass


class NonFiniteOutput(VolterraError, ArithmeticError):
    """A coefficient returned NaN or inf."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class NonFiniteState(VolterraError, ArithmeticError):
    """Particle blow-up during simulation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ModeMismatch(VolterraError, ValueError):
    pass


class MissingAccumulators(VolterraError, ValueError):
    pass


class InsufficientLags(VolterraError, ValueError):
    pass


class LadderTooShort(VolterraError, ValueError):
    pass


class GridMismatch(VolterraError, ValueError):
    pass


class ConfigError(VolterraError, ValueError):
    pass
