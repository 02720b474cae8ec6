"""Reference implementations the fused engine is checked against.

Nothing here imports the tile layer: matrix products are plain reduction
loops evaluated in one precision, and intermediates are materialized.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .bsb import CooMatrix

__all__ = [
    "SoftmaxVariant",
    "reference_matmul",
    "softmax_terms",
    "softmax_row",
    "dense_attention_oracle",
    "unfused_3s_oracle",
]

_DTYPES = {"half": np.float16, "single": np.float32, "double": np.float64}


class SoftmaxVariant(str, Enum):
    naive = "naive"
    max_stabilized = "max_stabilized"
    online = "online"


def _dtype(precision):
    try:
        return _DTYPES[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}") from None


def reference_matmul(a, b, precision="double"):
    """``a @ b`` with every product and partial sum rounded to ``precision``.

    Reduction runs over the inner index in ascending order.
    """
    dt = _dtype(precision)
    a = np.asarray(a).astype(dt)
    b = np.asarray(b).astype(dt)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=dt)
    with np.errstate(over="ignore", invalid="ignore"):
        for kk in range(a.shape[1]):
            out += np.multiply.outer(a[:, kk], b[kk, :])
    return out


def softmax_terms(x, mask=None, variant="max_stabilized", precision="single", chunk=16):
    """Numerators and denominator of a masked softmax.

    Masked slots contribute exp(-inf) = 0. For the online variant the
    denominator is accumulated chunk by chunk with running-max rescaling and
    the numerators are taken against the final running max.
    Returns ``(numerators, denominator, shift)``.
    """
    variant = SoftmaxVariant(variant)
    dt = _dtype(precision)
    x = np.asarray(x).astype(dt)
    support = np.ones(x.shape, bool) if mask is None else np.asarray(mask, bool)
    xs = np.where(support, x, dt(-np.inf))
    with np.errstate(over="ignore", invalid="ignore"):
        if variant is SoftmaxVariant.naive:
            shift = dt(0)
            num = np.where(support, np.exp(xs), dt(0)).astype(dt)
            den = dt(0)
            for v in num:
                den = dt(den + v)
            return num, den, shift
        if variant is SoftmaxVariant.max_stabilized:
            shift = xs.max() if xs.size else dt(-np.inf)
            if not np.isfinite(shift) and shift < 0:
                return np.zeros_like(xs), dt(0), shift
            num = np.where(support, np.exp(xs - shift), dt(0)).astype(dt)
            den = dt(0)
            for v in num:
                den = dt(den + v)
            return num, den, shift
        if chunk < 1:
            raise ValueError("chunk size must be positive")
        m = dt(-np.inf)
        l = dt(0)
        for lo in range(0, xs.size, chunk):
            blk = xs[lo:lo + chunk]
            m_new = max(m, blk.max())
            if m_new == -np.inf:
                continue
            scale = dt(np.exp(dt(m - m_new)))
            part = dt(0)
            for v in blk:
                if v != -np.inf:
                    part = dt(part + np.exp(dt(v - m_new)))
            l = dt(scale * l + part)
            m = m_new
        if m == -np.inf:
            return np.zeros_like(xs), dt(0), m
        num = np.where(support, np.exp(xs - m), dt(0)).astype(dt)
        return num, l, m


def softmax_row(x, mask=None, variant="max_stabilized", precision="single", chunk=16):
    """Softmax over the supported slots of ``x``; masked slots are exactly 0.

    A row with no supported slot returns all zeros. Overflow is not
    guarded: the naive variant returns NaN/inf where exp overflows.
    """
    num, den, _ = softmax_terms(x, mask, variant, precision, chunk)
    dt = _dtype(precision)
    if den == 0 and not np.any(num):
        return np.zeros_like(num)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return (num / den).astype(dt)


def _check_operands(a: CooMatrix, q, k, v):
    if a.n_rows != a.n_cols:
        raise ValueError(f"attention mask must be square, got {a.shape}")
    q, k, v = (np.asarray(x) for x in (q, k, v))
    N = a.n_rows
    if q.ndim != 2 or q.shape[0] != N or k.shape != q.shape or v.shape[0] != N:
        raise ValueError(
            f"operand shapes do not match mask {a.shape}: q{q.shape} k{k.shape} v{v.shape}"
        )
    return q, k, v


def dense_attention_oracle(a: CooMatrix, q, k, v, precision="double", tracker=None):
    """softmax(Q K^T masked by A) V with the full N x N score matrix."""
    q, k, v = _check_operands(a, q, k, v)
    dt = _dtype(precision)
    s = reference_matmul(q, k.T, precision)
    if tracker is not None:
        tracker.record("S", s.shape)
        tracker.record("E", s.shape)
    support = a.to_array(bool)
    s = np.where(support, s, dt(-np.inf))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        m = s.max(axis=1, keepdims=True)
        m = np.where(np.isneginf(m), dt(0), m)
        e = np.where(support, np.exp(s - m), dt(0)).astype(dt)
        den = np.zeros((s.shape[0], 1), dt)
        for j in range(s.shape[1]):
            den += e[:, j:j + 1]
        p = np.where(den > 0, e / np.where(den > 0, den, dt(1)), dt(0)).astype(dt)
    return reference_matmul(p, v, precision)


def unfused_3s_oracle(a: CooMatrix, q, k, v, variant="max_stabilized", precision="double", chunk=16,
                      tracker=None):
    """Separate SDDMM, row softmax and SpMM passes over the nonzeros of ``a``.

    The edge-level scores S and weights E are materialized (length nnz).
    """
    q, k, v = _check_operands(a, q, k, v)
    dt = _dtype(precision)
    q, k, v = q.astype(dt), k.astype(dt), v.astype(dt)
    rows, cols = a.rows, a.cols

    # SDDMM: one score per stored nonzero
    s = np.zeros(a.nnz, dt)
    with np.errstate(over="ignore", invalid="ignore"):
        for kk in range(q.shape[1]):
            s += q[rows, kk] * k[cols, kk]

    # softmax per row segment (rows are sorted in canonical COO)
    e = np.zeros(a.nnz, dt)
    if tracker is not None:
        tracker.record("S", s.shape)
        tracker.record("E", e.shape)
    bounds = np.searchsorted(rows, np.arange(a.n_rows + 1))
    for i in range(a.n_rows):
        lo, hi = bounds[i], bounds[i + 1]
        if hi > lo:
            e[lo:hi] = softmax_row(s[lo:hi], None, variant, precision, chunk)

    # SpMM
    out = np.zeros((a.n_rows, v.shape[1]), dt)
    with np.errstate(over="ignore", invalid="ignore"):
        np.add.at(out, rows, e[:, None] * v[cols])
    return out
