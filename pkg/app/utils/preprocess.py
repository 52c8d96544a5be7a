"""
Preprocessing utilities for the GuideTouch toolkit.
Grid validation, masking and normalization shared by the filter and the
renderers.
"""

import warnings
from typing import Tuple

import numpy as np

from app.errors import DimensionMismatchError


def validate_grid(cells: np.ndarray, expected_shape: Tuple[int, int], what: str = "grid") -> np.ndarray:
    """
    Check that a distance grid is 2-D with the expected shape.

    Args:
        cells: Distance matrix (mm)
        expected_shape: (rows, cols)
        what: Name used in the error message

    Returns:
        The grid as a float array
    """
    cells = np.asarray(cells, dtype=float)
    if cells.shape != tuple(expected_shape):
        raise DimensionMismatchError(f"{what} shape {cells.shape} != expected {tuple(expected_shape)}")
    return cells


def masked_median(samples: np.ndarray, axis: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Median along an axis ignoring NaN samples.

    Returns:
        (median, any_valid); median is NaN where no sample is valid
    """
    any_valid = ~np.all(np.isnan(samples), axis=axis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        median = np.nanmedian(samples, axis=axis)
    return median, any_valid


def normalize_array(arr: np.ndarray, lo: float = None, hi: float = None) -> np.ndarray:
    """
    Normalize array to the 0-1 range.

    Args:
        arr: Input array
        lo: Value mapped to 0 (defaults to the array minimum)
        hi: Value mapped to 1 (defaults to the array maximum)

    Returns:
        Normalized array, clipped to [0, 1]
    """
    arr = np.asarray(arr, dtype=float)
    lo = float(np.min(arr)) if lo is None else lo
    hi = float(np.max(arr)) if hi is None else hi

    if hi - lo == 0:
        return np.zeros_like(arr)

    return np.clip((arr - lo) / (hi - lo), 0.0, 1.0)


def upscale(grid: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour enlargement of a (rows, cols[, channels]) array."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1)
