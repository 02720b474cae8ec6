"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numpy as np

from .bsb import BsbMatrix, CooMatrix
from .tile_arith import ShapeError, cast_matrix

__all__ = ["check_mask", "check_qkv"]


def check_mask(A) -> CooMatrix:
    """Coerce a mask (CooMatrix, scipy sparse, or dense array-like) to a square CooMatrix."""
    if isinstance(A, CooMatrix):
        coo = A
    elif isinstance(A, BsbMatrix):
        raise TypeError("pass the mask before BSB conversion (CooMatrix or array-like)")
    elif hasattr(A, "tocoo"):
        coo = CooMatrix.from_scipy(A)
    else:
        arr = np.asarray(A)
        if arr.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
        coo = CooMatrix.from_dense(arr != 0)
    if coo.n_rows != coo.n_cols:
        raise ShapeError(f"mask must be square, got {coo.shape}")
    return coo


def check_qkv(X, n_nodes: int):
    """Split X into half-precision (q, k, v).

    X is either a ``(q, k, v)`` triple or one array of shape (N, 3d) holding
    ``[q | k | v]`` side by side. Float inputs are rounded to fp16.
    """
    if isinstance(X, (tuple, list)) and len(X) == 3:
        parts = [np.asarray(x) for x in X]
    else:
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] % 3 or X.shape[1] == 0:
            raise ShapeError(f"expected (N, 3d) array or (q, k, v) triple, got shape {X.shape}")
        parts = np.split(X, 3, axis=1)
    out = []
    for name, x in zip("qkv", parts):
        if x.ndim != 2 or x.shape[0] != n_nodes:
            raise ShapeError(f"{name} must have shape ({n_nodes}, d), got {x.shape}")
        if not np.issubdtype(x.dtype, np.floating) and not np.issubdtype(x.dtype, np.integer):
            raise TypeError(f"{name} must be numeric, got {x.dtype}")
        h = x if x.dtype == np.float16 else cast_matrix(x, "half")
        if not np.all(np.isfinite(h)):
            raise ValueError(f"{name} has non-finite entries after rounding to fp16")
        out.append(h)
    if not out[0].shape == out[1].shape == out[2].shape:
        raise ShapeError("q, k, v must share one shape")
    return tuple(out)
