"""Tensor construction and validation.

A tensor in this package is a C-contiguous float64 ndarray: the shape tuple
plus the row-major flat data. ``tensor`` is the one sanctioned constructor;
it rejects non-finite values and shape/data disagreements up front so every
downstream op can assume a clean operand.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["tensor", "check_finite"]


def tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Build a validated float64 tensor.

    If ``shape`` is given, ``data`` must be a flat sequence whose length is
    exactly the product of the shape.
    """
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"tensor: non-positive dimension in {shape}")
        if arr.ndim != 1:
            raise ValueError("tensor: explicit shape requires flat data")
        expected = int(np.prod(shape))
        if arr.size != expected:
            raise ValueError(
                f"tensor: {arr.size} values cannot fill shape {shape} ({expected})"
            )
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor: non-finite values")
    return np.ascontiguousarray(arr)


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{what}: non-finite values")
    return arr
