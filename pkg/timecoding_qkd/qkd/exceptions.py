"""
Error hierarchy for the time-coding QKD simulator.

Every failure the simulation and analysis layers can signal derives from
``QKDError`` so that the management commands can turn it into a
``CommandError`` with a readable diagnostic.
"""

from typing import Any
from typing import Dict
from typing import Optional


class QKDError(Exception):
    """Base exception for simulator and analyzer errors."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.message = message
        self.context = context or {}
        super().__init__(message)


class ValidationError(QKDError, ValueError):
    """A domain object was built with values that break its invariants."""
    pass


class ConfigError(QKDError):
    """Invalid run configuration (unknown key, bad value, mixed units)."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key is not None:
            location.append(f"key '{key}'")
        if location:
            message = f"{', '.join(location)}: {message}"
        super().__init__(message, {"key": key, "line": line})


class ProfileWindowError(QKDError):
    """Normalization window does not hold enough of the pulse energy."""

    def __init__(self, message: str, fraction: float):
        self.fraction = fraction
        super().__init__(message, {"fraction": fraction})


class InsufficientStatisticsError(QKDError):
    """Too few records or sequences for an estimator."""
    pass


class UndefinedQBERError(QKDError):
    """No unambiguous detections, the QBER has no value."""
    pass


class NoDataError(QKDError):
    """A contrast sequence recorded no photons."""
    pass


class ConstraintViolationError(QKDError):
    """The max-coherence attack would need an interception fraction above one."""

    def __init__(self, message: str, binding_m: float):
        self.binding_m = binding_m
        super().__init__(message, {"binding_m": binding_m})


class CoherenceExceedsTheoryError(QKDError):
    """Measured coherence is larger than the theoretical maximum."""
    pass


class NoSecureRegionError(QKDError):
    """I_AB - I_AE never changes sign on the searched QBER bracket."""
    pass


class IsometryError(QKDError):
    """Eve's coupling map is not an isometry."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(message, {"residual": residual})


class InvalidStateError(QKDError):
    """A matrix handed to the information measures is not a density operator."""
    pass


class MissingArtifactError(QKDError):
    """An upstream report needed by a command is not present."""
    pass
