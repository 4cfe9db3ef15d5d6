"""Input-validation helpers shared by the estimators and the CLI.

scikit-learn's ``check_array`` rejects complex input, so volumes get their own
checks here.
"""

from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np

from .exceptions import ValidationError
from .forward import MeasurementSet
from .volume import ComplexVolume


def check_volume(v, dims=None, name: str = "volume") -> np.ndarray:
    """Return ``v`` as a finite complex128 ``(N1, N2, N3)`` array."""
    arr = v.data if isinstance(v, ComplexVolume) else np.asarray(v)
    if arr.ndim != 3:
        raise ValidationError(f"{name} must be 3D, got shape {arr.shape}")
    if dims is not None and arr.shape != tuple(dims):
        raise ValidationError(f"{name} shape {arr.shape} does not match {tuple(dims)}")
    if not np.issubdtype(arr.dtype, np.number):
        raise ValidationError(f"{name} must be numeric, got {arr.dtype}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_measurements(ms) -> MeasurementSet:
    if not isinstance(ms, MeasurementSet):
        raise ValidationError(f"expected a MeasurementSet, got {type(ms).__name__}")
    return ms


def check_positive(name: str, value, allow_zero: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, Real) or not math.isfinite(value):
        raise ValidationError(f"{name} must be a finite number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValidationError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return float(value)


def check_int(name: str, value, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_choice(name: str, value, choices) -> str:
    if value not in choices:
        raise ValidationError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value
