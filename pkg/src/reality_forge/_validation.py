"""Small argument checkers shared by the estimators and the CLI."""

from __future__ import annotations

import math
import numbers

import numpy as np

from .errors import ConfigError, RangeError


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_real(value, name: str, allow_zero: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"{name} must be {bound}, got {value}")
    return value


def check_probability(value, name: str, exc=RangeError) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise exc(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise exc(f"{name} must lie in [0, 1], got {value}")
    return value


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if not (-(2**63) <= seed < 2**64):
        raise ConfigError(f"seed must fit in 64 bits, got {seed}")
    # numpy's SeedSequence wants nonnegative entropy
    return int(seed) % 2**64


def as_point(x, dim: int | None = None, name: str = "point") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ConfigError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigError(f"{name} must have {dim} components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite")
    return arr
