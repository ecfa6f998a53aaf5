"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when user input violates a documented precondition."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine cannot meet its contract."""


def check_finite_array(values, name="array", ndim=None, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite entries")
    return arr


def check_weights(weights, n_points, name="weights"):
    """Return ``weights`` as a finite 1-D float array of length ``n_points``."""
    w = check_finite_array(weights, name=name, ndim=1)
    if w.shape[0] != n_points:
        raise ValidationError(f"{name} has length {w.shape[0]}, expected {n_points}")
    return w


def check_index(index, n_points, name="index"):
    if not isinstance(index, numbers.Integral) or isinstance(index, bool):
        raise ValidationError(f"{name} must be an integer, got {index!r}")
    if not 0 <= index < n_points:
        raise IndexError(f"{name} {index} out of range for {n_points} points")
    return int(index)


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ValidationError(f"{name} must be finite and {bound}, got {value}")
    return value


def check_fraction(value, name):
    value = float(value)
    if not 0 < value <= 1:
        raise ValidationError(f"{name} must lie in (0, 1], got {value}")
    return value


def check_row_stochastic(matrix, n_points=None, atol=1e-12, name="kernel"):
    """Validate a square nonnegative matrix whose rows sum to one."""
    P = check_finite_array(matrix, name=name, ndim=2)
    if P.shape[0] != P.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {P.shape}")
    if n_points is not None and P.shape[0] != n_points:
        raise ValidationError(f"{name} has size {P.shape[0]}, expected {n_points}")
    if np.any(P < 0):
        raise ValidationError(f"{name} has negative entries")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"{name} row {i} sums to {float(sums[i]):.17g}, not 1")
    return P


def index_mask(selector, n_points, name="selector"):
    """Turn a boolean mask, index list or predicate on indices into a boolean mask."""
    if callable(selector):
        mask = np.array([bool(selector(i)) for i in range(n_points)], dtype=bool)
    else:
        arr = np.asarray(selector)
        if arr.dtype == bool:
            if arr.shape != (n_points,):
                raise ValidationError(f"{name} mask has shape {arr.shape}, expected ({n_points},)")
            mask = arr.copy()
        else:
            mask = np.zeros(n_points, dtype=bool)
            idx = arr.astype(int).ravel()
            if idx.size and (idx.min() < 0 or idx.max() >= n_points):
                raise IndexError(f"{name} contains indices outside [0, {n_points})")
            mask[idx] = True
    return mask
