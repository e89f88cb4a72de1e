"""Input checking helpers shared by every module."""

import numbers

import numpy as np


def as_points(z, n=None):
    """Coerce ``z`` to a 2-D complex array of shape ``(count, width)``.

    Returns ``(points, single)`` where ``single`` records whether a lone
    point was passed, so callers can unwrap scalar results.  When ``n`` is
    given the columns are zero-padded (or must already be zero beyond ``n``).
    """
    from .space_measure import CVec

    if isinstance(z, CVec):
        z = z.to_array()
    arr = np.asarray(z)
    if arr.dtype == object:
        arr = np.array([c.to_array() if isinstance(c, CVec) else c for c in z])
    arr = np.asarray(arr, dtype=np.complex128)
    single = arr.ndim <= 1
    arr = np.atleast_1d(arr)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"points must be 1-D or 2-D, got shape {arr.shape}")
    if n is not None:
        arr = pad_to(arr, n)
    return arr, single


def pad_to(points, n):
    width = points.shape[1]
    if width == n:
        return points
    if width < n:
        out = np.zeros((points.shape[0], n), dtype=np.complex128)
        out[:, :width] = points
        return out
    if np.any(points[:, n:] != 0):
        raise ValueError(f"points carry nonzero entries beyond coordinate {n}")
    return points[:, :n]


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = "nonnegative" if allow_zero else "positive"
        raise ValueError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_finite(values, points, what="field"):
    """Raise if any evaluation is non-finite, naming the first offender."""
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"{what} returned {values[idx]!r} at sample {idx}: {points[idx].tolist()}"
        )
