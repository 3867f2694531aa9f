from typing import Optional

import numpy as np


class StratumError(Exception):
    """Base class for all errors raised by the solver package."""


class InputError(StratumError, ValueError):
    """A precondition on the arguments of an operation is violated."""


class DefinitenessError(StratumError, ArithmeticError):
    """A matrix expected to be symmetric positive definite is not."""


class ConvergenceError(StratumError, RuntimeError):
    """An iteration hit its cap before reaching the requested tolerance."""

    def __init__(self, message: str, best: Optional[np.ndarray] = None, iterations: int = 0):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class ConfigError(StratumError, ValueError):
    """A run configuration is invalid; `field` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"invalid config field '{field}': {message}")
        self.field = field


class TableParseError(StratumError, ValueError):
    """A .dat result table could not be parsed; `line` is 1-based."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
