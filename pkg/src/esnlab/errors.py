"""Exception types shared across the package."""


class EsnLabError(Exception):
    pass


class ConfigurationError(EsnLabError, ValueError):
    """Inconsistent shapes, out-of-range parameters, unknown config keys."""


class DegenerateSeriesError(EsnLabError, ValueError):
    pass


class SingularReadoutError(EsnLabError, ArithmeticError):
    pass


class DivergenceError(EsnLabError, ArithmeticError):
    """A trajectory became non-finite; ``step`` is the first bad step index."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} at step {step}"
        super().__init__(message)
        self.step = step
