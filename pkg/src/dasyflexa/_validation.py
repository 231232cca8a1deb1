"""Small argument checks used by constructors and generators."""

import numbers

import numpy as np

from .exceptions import InvalidArgument


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgument(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidArgument(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_nonnegative_int(value, name):
    return check_positive_int(value, name, minimum=0)


def check_positive(value, name, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidArgument(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise InvalidArgument(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidArgument(f"{name} must be {bound}, got {value}")
    return value


def check_fraction(value, name):
    """Check ``value`` lies in the half-open interval (0, 1]."""
    value = check_positive(value, name)
    if value > 1:
        raise InvalidArgument(f"{name} must lie in (0, 1], got {value}")
    return value


def check_seed(seed, name="seed"):
    if seed is None:
        raise InvalidArgument(f"{name} must be given explicitly")
    return check_nonnegative_int(seed, name)


def check_vector(x, length, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != length:
        raise InvalidArgument(
            f"{name} must be a vector of length {length}, got shape {x.shape}")
    return x
