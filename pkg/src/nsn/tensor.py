"""Minimal dense linear algebra used by every other module.

A "matrix" here is a 2-D, C-contiguous ``numpy.ndarray``. Training state is
float32 throughout; the finite-difference oracle passes float64 arrays
through the same functions, so nothing below forces a dtype on its inputs.

All functions are pure: inputs are never modified and every result is a
freshly allocated array. Products go through BLAS, which keeps a fixed
per-element summation order, so repeated calls with the same thread settings
are bitwise reproducible.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ShapeError

DTYPE = np.float32


def matrix(data, dtype=DTYPE) -> np.ndarray:
    """Build a 2-D matrix from nested sequences or an existing array."""
    out = np.array(data, dtype=dtype, order="C")
    if out.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {out.shape}")
    return out


def zeros(rows: int, cols: int, dtype=DTYPE) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dims must be positive, got {rows}x{cols}")
    return np.zeros((rows, cols), dtype=dtype)


def _require_2d(a: np.ndarray, name: str) -> None:
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D array, got "
                         f"{getattr(a, 'shape', type(a).__name__)}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with an explicit inner-dimension check."""
    _require_2d(a, "a")
    _require_2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ: "
                         f"{a.shape} x {b.shape}")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    """Transpose as a fresh contiguous array (never a view of the input)."""
    _require_2d(a, "a")
    return np.ascontiguousarray(a.T)


def map_zip(a: np.ndarray, b: np.ndarray,
            f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply an elementwise binary function to two same-shape matrices.

    ``f`` receives the full arrays and must operate elementwise (any numpy
    arithmetic expression qualifies). The named wrappers below cover the
    common cases.
    """
    _require_2d(a, "a")
    _require_2d(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"map_zip: shapes differ: {a.shape} vs {b.shape}")
    out = np.array(f(a, b), dtype=a.dtype, order="C")
    if out.shape != a.shape:
        raise ShapeError(f"map_zip: f returned shape {out.shape}, "
                         f"expected {a.shape}")
    return out


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return map_zip(a, b, lambda x, y: x + y)


def subtract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return map_zip(a, b, lambda x, y: x - y)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return map_zip(a, b, lambda x, y: x * y)


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y, elementwise."""
    return map_zip(x, y, lambda xv, yv: alpha * xv + yv)


def reduce(a: np.ndarray, kind: str):
    """Reduce a matrix: 'sum' or 'mean' to a float, 'argmax-per-row' to an
    index vector. Argmax ties resolve to the lowest index."""
    _require_2d(a, "a")
    if a.size == 0:
        raise ShapeError(f"reduce: empty matrix {a.shape}")
    if kind == "sum":
        return float(np.sum(a))
    if kind == "mean":
        return float(np.mean(a))
    if kind == "argmax-per-row":
        return np.argmax(a, axis=1)
    raise ValueError(f"reduce: unknown kind {kind!r}")
