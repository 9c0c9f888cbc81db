"""Input validation helpers shared by the estimators and free functions."""

import numbers

import numpy as np


def check_binary_mask(mask, name="mask"):
    """Return ``mask`` as a 2-D boolean array, raising on malformed input."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
    if arr.dtype != bool:
        arr = arr != 0
    return arr


def check_image(image, channels, name="image"):
    """Return ``image`` as a ``(H, W, channels)`` uint8 array."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != channels:
        raise ValueError(
            f"{name} must have shape (H, W, {channels}), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) or arr.min() < 0 or arr.max() > 255:
            raise ValueError(f"{name} must hold 8-bit values")
        arr = arr.astype(np.uint8)
    return arr


def check_range(value, name, lo_bound=None, hi_bound=None):
    """Validate a ``(lo, hi)`` pair and return it as a tuple of floats."""
    try:
        lo, hi = value
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a [lo, hi] pair, got {value!r}") from None
    if not all(isinstance(v, numbers.Real) for v in (lo, hi)):
        raise ValueError(f"{name} must hold numbers, got {value!r}")
    if lo > hi:
        raise ValueError(f"{name} must satisfy lo <= hi, got {value!r}")
    if lo_bound is not None and lo < lo_bound:
        raise ValueError(f"{name} lower bound must be >= {lo_bound}, got {lo}")
    if hi_bound is not None and hi > hi_bound:
        raise ValueError(f"{name} upper bound must be <= {hi_bound}, got {hi}")
    return float(lo), float(hi)


def check_int_range(value, name, lo_bound=0):
    lo, hi = check_range(value, name, lo_bound=lo_bound)
    if lo != int(lo) or hi != int(hi):
        raise ValueError(f"{name} must hold integers, got {value!r}")
    return int(lo), int(hi)


def check_points(points, name="points"):
    """Return an ``(N, 2)`` float array of (x, y) points; N may be 0."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (N, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr
