from __future__ import annotations
from typing import Any, List


class FloatLabError(Exception):
    """Base class for every error raised by floatlab."""


class GeometryError(FloatLabError, ValueError):
    pass


class NumericalError(FloatLabError, RuntimeError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate:.6g}, error={error:.3g})")
        self.estimate = estimate
        self.error = error


class SweepError(NumericalError):
    def __init__(self, message: str, partial: List[Any]):
        super().__init__(message)
        self.partial = partial


class ConfigError(FloatLabError, ValueError):
    def __init__(self, errors: List[str] | str):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
