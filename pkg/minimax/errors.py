"""Exception hierarchy shared by the solvers, the data loaders and the runner."""
from typing import List, Optional


class MinimaxError(Exception):
    """Base class for every error raised by this package"""


class DimensionError(MinimaxError, ValueError):
    """Vector or operator sizes do not agree"""


class ParameterError(MinimaxError, ValueError):
    """A step size, radius or count is outside its admissible range"""


class SmoothingError(MinimaxError):
    """The smoothed conjugate is requested without any strong concavity"""


class UnsatisfiableParameters(MinimaxError):
    """Rate-derived parameters cannot be computed for the declared constants"""


class OracleUnavailable(MinimaxError):
    """A diagnostic needs u*(w) but neither an oracle nor a tolerance was given"""


class DatasetError(MinimaxError, ValueError):
    """Malformed dataset input"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(MinimaxError):
    """Experiment configuration is invalid; carries every problem found"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalAbort(MinimaxError):
    """A solver produced a non-finite iterate

    The records collected before the failure travel with the exception so the
    runner can still write a truncated trace.
    """

    def __init__(self, message: str, epoch: int, trace: Optional[list] = None):
        self.epoch = epoch
        self.trace = list(trace or [])
        super().__init__(f"epoch {epoch}: {message}")
