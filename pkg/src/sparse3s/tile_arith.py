"""Emulated fp16 arithmetic and tensor-core tile operations.

Dense matrices are plain numpy arrays; the storage precision is the dtype
(``float16`` = half, ``float32`` = single, ``float64`` = double).  Tile
products follow fp16-multiply / fp32-accumulate semantics with a fixed,
ascending reduction order, so every result here is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PRECISIONS",
    "HALF_MAX",
    "CANONICAL_NAN_BITS",
    "Half",
    "TileShape",
    "DEFAULT_TILE",
    "SUPPORTED_TILES",
    "ShapeError",
    "float_to_half_bits",
    "half_bits_to_float",
    "cast_matrix",
    "mma_tile",
    "tbgemm",
    "tbgemm_tiled",
]

PRECISIONS = {"half": np.float16, "single": np.float32, "double": np.float64}

HALF_MAX = 65504.0
CANONICAL_NAN_BITS = 0x7E00


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


# ---------------------------------------------------------------------------
# scalar binary16 (pure python, used as the reference for numpy's conversion)
# ---------------------------------------------------------------------------

def float_to_half_bits(x: float) -> int:
    """Encode a Python float as binary16 bits with round-to-nearest-even.

    NaNs encode to the canonical quiet NaN ``0x7E00``.
    """
    x = float(x)
    if math.isnan(x):
        return CANONICAL_NAN_BITS
    sign = 0x8000 if math.copysign(1.0, x) < 0 else 0
    a = abs(x)
    if math.isinf(a):
        return sign | 0x7C00
    if a == 0.0:
        return sign
    _, e = math.frexp(a)
    exp = e - 1
    if exp < -14:
        quantum_exp = -24
    else:
        quantum_exp = exp - 10
    q = math.ldexp(a, -quantum_exp)
    if q >= 2.0**53:
        # far beyond half range
        return sign | 0x7C00
    n = math.floor(q)
    frac = q - n
    if frac > 0.5 or (frac == 0.5 and n % 2 == 1):
        n += 1
    if exp < -14:
        # subnormal; n == 1024 carries into the smallest normal automatically
        bits = n
    else:
        bits = ((exp + 15) << 10) + (n - 1024)
    if bits >= 0x7C00:
        return sign | 0x7C00
    return sign | bits


def half_bits_to_float(bits: int) -> float:
    """Decode binary16 bits to a Python float (exact)."""
    sign = -1.0 if bits & 0x8000 else 1.0
    exp = (bits >> 10) & 0x1F
    frac = bits & 0x3FF
    if exp == 0:
        return sign * math.ldexp(frac, -24)
    if exp == 0x1F:
        return sign * math.inf if frac == 0 else math.nan
    return sign * math.ldexp(1024 + frac, exp - 25)


class Half:
    """A single binary16 value held as its 16-bit pattern."""

    __slots__ = ("bits",)

    def __init__(self, bits: int):
        bits = int(bits)
        if not 0 <= bits <= 0xFFFF:
            raise ValueError(f"half bit pattern out of range: {bits:#x}")
        self.bits = bits

    @classmethod
    def from_float(cls, x: float) -> "Half":
        return cls(float_to_half_bits(x))

    def __float__(self) -> float:
        return half_bits_to_float(self.bits)

    def is_nan(self) -> bool:
        return (self.bits & 0x7C00) == 0x7C00 and (self.bits & 0x3FF) != 0

    def canonical(self) -> "Half":
        """Re-encode through float; collapses NaN payloads."""
        return Half.from_float(float(self))

    def __eq__(self, other):
        if not isinstance(other, Half):
            return NotImplemented
        return self.bits == other.bits

    def __hash__(self):
        return hash(self.bits)

    def __repr__(self):
        return f"Half({float(self)!r}, bits={self.bits:#06x})"


# ---------------------------------------------------------------------------
# tiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TileShape:
    """MMA operand shape: A is m x k, B is k x n, C is m x n."""

    m: int = 16
    n: int = 8
    k: int = 16

    def __post_init__(self):
        if (self.m, self.n, self.k) not in SUPPORTED_TILES:
            raise ValueError(
                f"unsupported tile shape m{self.m}n{self.n}k{self.k}; "
                f"choose from {sorted(SUPPORTED_TILES)}"
            )

    @property
    def name(self) -> str:
        return f"m{self.m}n{self.n}k{self.k}"


# fp16 ``mma`` shapes
SUPPORTED_TILES = frozenset({(16, 8, 16), (16, 8, 8), (8, 8, 4)})
DEFAULT_TILE = TileShape()


def cast_matrix(x, target: str) -> np.ndarray:
    """Convert ``x`` elementwise to the named precision (round-to-nearest-even).

    Overflow goes to +/-inf. Half-precision NaNs are canonicalized, which
    keeps a second cast a no-op.
    """
    try:
        dtype = PRECISIONS[target]
    except KeyError:
        raise ValueError(f"unknown precision {target!r}") from None
    x = np.asarray(x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x.astype(dtype)
    if dtype is np.float16:
        nan = np.isnan(out)
        if nan.any():
            out = out.copy()
            out.view(np.uint16)[nan] = CANONICAL_NAN_BITS
    return out


def _require(arr, dtype, name):
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != dtype:
        raise TypeError(f"{name} must be {np.dtype(dtype).name}, got {arr.dtype}")
    return arr


def mma_tile(a, b, c, tile: TileShape = DEFAULT_TILE) -> np.ndarray:
    """One tensor-core multiply-accumulate: ``c + a @ b``.

    ``a`` (m x k) and ``b`` (k x n) are float16, ``c`` (m x n) is float32.
    Products are exact in fp32; the sum is folded in ascending k.
    """
    a = _require(a, np.float16, "a")
    b = _require(b, np.float16, "b")
    c = _require(c, np.float32, "c")
    if a.shape != (tile.m, tile.k) or b.shape != (tile.k, tile.n) or c.shape != (tile.m, tile.n):
        raise ShapeError(
            f"{tile.name} expects a{(tile.m, tile.k)} b{(tile.k, tile.n)} c{(tile.m, tile.n)}, "
            f"got a{a.shape} b{b.shape} c{c.shape}"
        )
    return _fold(a.astype(np.float32), b.astype(np.float32), c.copy(), range(tile.k))


def _fold(a32, b32, acc, order):
    with np.errstate(over="ignore", invalid="ignore"):
        for kk in order:
            acc += np.multiply.outer(a32[:, kk], b32[kk, :])
    return acc


def _round_up(x: int, mult: int) -> int:
    return -(-x // mult) * mult


def _pad_operands(a, b, d, tile, k_order):
    M, K = a.shape
    K2, P = b.shape
    if K != K2:
        raise ShapeError(f"inner dimensions differ: a is {a.shape}, b is {b.shape}")
    if d.shape != (M, P):
        raise ShapeError(f"accumulator must be {(M, P)}, got {d.shape}")
    if k_order is None:
        k_order = np.arange(K)
    else:
        k_order = np.asarray(k_order, dtype=np.intp)
        if k_order.shape != (K,) or not np.array_equal(np.sort(k_order), np.arange(K)):
            raise ValueError("k_order must be a permutation of range(K)")
    Mp, Kp, Pp = _round_up(M, tile.m), _round_up(K, tile.k), _round_up(P, tile.n)
    # reorder the reduction axis into logical order, then pad with +0.0
    a_p = np.zeros((Mp, Kp), np.float16)
    a_p[:M, :K] = a[:, k_order]
    b_p = np.zeros((Kp, Pp), np.float16)
    b_p[:K, :P] = b[k_order, :]
    d_p = np.zeros((Mp, Pp), np.float32)
    d_p[:M, :P] = d
    return a_p, b_p, d_p


def tbgemm(a, b, d, tile: TileShape = DEFAULT_TILE, k_order=None) -> np.ndarray:
    """Thread-block GEMM ``a @ b + d`` built from ``mma_tile`` semantics.

    a : (M, K) float16
    b : (K, P) float16
    d : (M, P) float32
    k_order : optional permutation of ``range(K)``; entry ``j`` names the
        physical column of ``a`` (row of ``b``) holding logical index ``j``.
        The reduction always runs in ascending logical order.

    Ragged dimensions are zero-padded to tile multiples and stripped from the
    result. All output tiles are evaluated at once; each sees exactly the
    same sequence of fp32 operations as the per-tile loop in
    :func:`tbgemm_tiled`, so the two agree bitwise.
    """
    a = _require(a, np.float16, "a")
    b = _require(b, np.float16, "b")
    d = _require(d, np.float32, "d")
    M, P = d.shape
    a_p, b_p, acc = _pad_operands(a, b, d, tile, k_order)
    _fold(a_p.astype(np.float32), b_p.astype(np.float32), acc, range(a_p.shape[1]))
    return acc[:M, :P].copy()


def tbgemm_tiled(a, b, d, tile: TileShape = DEFAULT_TILE, k_order=None, tile_order=None) -> np.ndarray:
    """Literal tile loop: for every output tile, ``mma_tile`` over k-tiles.

    ``tile_order`` lists (row_tile, col_tile) pairs in the order they are
    visited, standing in for an arbitrary distribution of output tiles
    among warps. The result does not depend on it.
    """
    a = _require(a, np.float16, "a")
    b = _require(b, np.float16, "b")
    d = _require(d, np.float32, "d")
    M, P = d.shape
    a_p, b_p, d_p = _pad_operands(a, b, d, tile, k_order)
    Tm, Tg, Th = a_p.shape[0] // tile.m, a_p.shape[1] // tile.k, b_p.shape[1] // tile.n
    if tile_order is None:
        tile_order = [(mi, i) for mi in range(Tm) for i in range(Th)]
    out = d_p.copy()
    for mi, i in tile_order:
        rows = slice(mi * tile.m, (mi + 1) * tile.m)
        cols = slice(i * tile.n, (i + 1) * tile.n)
        c = d_p[rows, cols].copy()
        for j in range(Tg):
            ks = slice(j * tile.k, (j + 1) * tile.k)
            c = mma_tile(a_p[rows, ks], b_p[ks, cols], c, tile)
        out[rows, cols] = c
    return out[:M, :P].copy()
