"""Fused SDDMM -> online softmax -> SpMM over a BSB mask.

Node-parallel: every row window (RW) is an independent unit that owns its
running softmax statistics and output block, so the windows can be visited in
any order. Inside a window the gathered key/value rows are consumed ``W * c``
columns at a time (one ``c``-wide TCB per warp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bsb import BsbMatrix
from .tile_arith import DEFAULT_TILE, ShapeError, TileShape, cast_matrix, tbgemm, tbgemm_tiled

__all__ = [
    "PARTITIONS",
    "SCHEDULES",
    "FusedConfig",
    "FusedState",
    "GatherPlan",
    "LayoutPermutation",
    "AllocationTracker",
    "online_softmax_step",
    "plan_gather",
    "apply_layout_permutation",
    "remap_permutation",
    "warp_tile_order",
    "occupancy_estimate",
    "fused3s_forward",
]

PARTITIONS = ("split_column", "split_row")
SCHEDULES = ("original", "reordered")
SENTINEL = -1


@dataclass(frozen=True)
class FusedConfig:
    tile: TileShape = DEFAULT_TILE
    warps_per_block: int = 4
    warp_partition: str = "split_column"
    apply_remap: bool = False
    rw_schedule: str = "original"

    def __post_init__(self):
        if self.warps_per_block < 1:
            raise ValueError(f"warps_per_block must be >= 1, got {self.warps_per_block}")
        if self.warp_partition not in PARTITIONS:
            raise ValueError(f"warp_partition must be one of {PARTITIONS}")
        if self.rw_schedule not in SCHEDULES:
            raise ValueError(f"rw_schedule must be one of {SCHEDULES}")
        if not isinstance(self.tile, TileShape):
            raise TypeError("tile must be a TileShape")


@dataclass
class FusedState:
    """Running softmax statistics and output accumulator of one row window."""

    m_o: np.ndarray
    l_o: np.ndarray
    o_acc: np.ndarray

    @classmethod
    def initial(cls, r: int, d: int) -> "FusedState":
        return cls(
            m_o=np.full(r, -np.inf, np.float32),
            l_o=np.zeros(r, np.float32),
            o_acc=np.zeros((r, d), np.float32),
        )


@dataclass(frozen=True)
class GatherPlan:
    rw: int
    t: int
    width: int
    blocks: list = field(default_factory=list)  # T_c arrays of W*c column ids, SENTINEL = zero row

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def columns(self) -> np.ndarray:
        if not self.blocks:
            return np.empty(0, np.int64)
        return np.concatenate(self.blocks)


@dataclass(frozen=True)
class LayoutPermutation:
    """Feature-dimension permutation; physical column ``j`` holds logical ``perm[j]``."""

    perm: np.ndarray
    inverse: np.ndarray

    def restore(self, out: np.ndarray) -> np.ndarray:
        """Undo the permutation on an output's feature columns."""
        return out[:, self.inverse]


class AllocationTracker:
    """Records the largest buffer requested per intermediate name (in elements)."""

    def __init__(self):
        self.peak = {}

    def record(self, name: str, shape) -> None:
        n = int(np.prod(shape))
        self.peak[name] = max(self.peak.get(name, 0), n)

    def max_elements(self, *names) -> int:
        names = names or tuple(self.peak)
        return max((self.peak.get(n, 0) for n in names), default=0)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _rowsum(x: np.ndarray) -> np.ndarray:
    """Row sums in fp32 by a fixed pairwise tree (adjacent columns first)."""
    x = np.asarray(x, np.float32)
    if x.shape[1] == 0:
        return np.zeros(x.shape[0], np.float32)
    while x.shape[1] > 1:
        if x.shape[1] % 2:
            x = np.concatenate([x, np.zeros((x.shape[0], 1), np.float32)], axis=1)
        x = x[:, 0::2] + x[:, 1::2]
    return x[:, 0].copy()


def online_softmax_step(state: FusedState, s_block: np.ndarray):
    """Fold one masked score block into the running softmax state.

    Returns ``(new_state, e_block)``; ``new_state.o_acc`` is the old
    accumulator rescaled to the new running max, ready for the SpMM update.
    Masked slots must hold ``-inf``; they produce exactly 0 in ``e_block``.
    """
    s = np.asarray(s_block, np.float32)
    with np.errstate(invalid="ignore", over="ignore"):
        m_new = np.maximum(state.m_o, s.max(axis=1) if s.shape[1] else state.m_o)
        finite_row = ~np.isneginf(m_new)
        shift = np.where(finite_row, m_new, np.float32(0))
        e = np.where(np.isneginf(s), np.float32(0), np.exp(s - shift[:, None])).astype(np.float32)
        both_empty = np.isneginf(state.m_o) & ~finite_row
        scale = np.where(both_empty, np.float32(1), np.exp(state.m_o - shift)).astype(np.float32)
    l_new = (scale * state.l_o + _rowsum(e)).astype(np.float32)
    o_new = (scale[:, None] * state.o_acc).astype(np.float32)
    return FusedState(m_new.astype(np.float32), l_new, o_new), e


def plan_gather(a: BsbMatrix, rw: int, warps_per_block: int = 4) -> GatherPlan:
    """Split a row window's compacted columns into ``ceil(t / W)`` blocks of ``W*c`` ids."""
    if not 0 <= rw < a.num_rw:
        raise IndexError(f"row window {rw} out of range [0, {a.num_rw})")
    W = warps_per_block
    t = int(a.tro[rw + 1] - a.tro[rw])
    cols = a.sptd_of(rw)
    num_blocks = -(-t // W)
    span = W * a.c
    padded = np.full(num_blocks * span, SENTINEL, np.int64)
    padded[: cols.size] = cols
    blocks = [padded[j * span:(j + 1) * span] for j in range(num_blocks)]
    return GatherPlan(rw=rw, t=t, width=int(cols.size), blocks=blocks)


def apply_layout_permutation(q, k, v, perm):
    """Permute the feature columns of q, k and v by ``perm``.

    q and k are permuted identically, so every q.k dot product keeps its
    terms. The returned :class:`LayoutPermutation` restores the output's
    column order.
    """
    perm = np.asarray(perm, dtype=np.int64)
    d = np.asarray(q).shape[1]
    if perm.shape != (d,) or not np.array_equal(np.sort(perm), np.arange(d)):
        raise ValueError(f"not a permutation of range({d}): {perm.tolist()}")
    inverse = np.argsort(perm)
    return q[:, perm], k[:, perm], v[:, perm], LayoutPermutation(perm, inverse)


_FRAGMENT_16 = np.array([0, 1, 8, 9, 2, 3, 10, 11, 4, 5, 12, 13, 6, 7, 14, 15])


def remap_permutation(d: int) -> np.ndarray:
    """Per 16-column group, put each thread's A-fragment columns side by side.

    In the m16n8k16 A fragment, thread ``t`` of a quad holds columns
    ``2t, 2t+1, 2t+8, 2t+9``; making them adjacent lets one wide load fetch
    them. ``d`` must be a multiple of 16.
    """
    if d % 16:
        raise ValueError("remap permutation needs d to be a multiple of 16")
    return np.concatenate([_FRAGMENT_16 + 16 * g for g in range(d // 16)])


def warp_tile_order(num_row_tiles: int, num_col_tiles: int, warps: int, partition: str):
    """Visiting order of output tiles under a warp partition.

    split_column gives warp ``w`` the column tiles ``w, w+W, ...`` and runs
    warps one after another; split_row has all warps share every tile, so
    tiles are visited in plain order.
    """
    if partition == "split_column":
        order = []
        for w in range(warps):
            for ct in range(w, num_col_tiles, warps):
                order.extend((rt, ct) for rt in range(num_row_tiles))
        return order
    if partition == "split_row":
        return [(rt, ct) for rt in range(num_row_tiles) for ct in range(num_col_tiles)]
    raise ValueError(f"unknown warp partition {partition!r}")


def occupancy_estimate(a: BsbMatrix, cfg: FusedConfig, d: int):
    """Active warps per row window for the configured warp partition.

    split_column: a warp per TCB, so ``min(W, t_remaining)`` per inner step.
    split_row: warps share the feature dimension, ``min(W, ceil(d / n))``.
    """
    W = cfg.warps_per_block
    reports = []
    for rw, t in enumerate(a.tcb_counts.tolist()):
        steps = -(-t // W)
        if cfg.warp_partition == "split_column":
            per_step = [min(W, t - j * W) for j in range(steps)]
            active = per_step[0] if per_step else 0
            bound = "TCB count" if t < W else "warps per block"
        else:
            active = min(W, -(-d // cfg.tile.n))
            per_step = [active] * steps
            bound = "feature dimension" if active < W else "warps per block"
        reports.append({
            "rw": rw,
            "t": t,
            "iterations": steps,
            "active_warps_sddmm": active,
            "active_warps_spmm": active,
            "per_iteration": per_step,
            "bound": bound,
        })
    return reports


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def _check_inputs(a: BsbMatrix, q, k, v):
    if a.n_rows != a.n_cols:
        raise ShapeError(f"mask must be square, got {(a.n_rows, a.n_cols)}")
    arrs = []
    for name, x in (("q", q), ("k", k), ("v", v)):
        x = np.asarray(x)
        if x.dtype != np.float16:
            raise TypeError(f"{name} must be float16, got {x.dtype}")
        if x.ndim != 2 or x.shape[0] != a.n_rows:
            raise ShapeError(f"{name} must have shape ({a.n_rows}, d), got {x.shape}")
        arrs.append(x)
    q, k, v = arrs
    if not (q.shape == k.shape == v.shape) or q.shape[1] < 1:
        raise ShapeError(f"q, k, v must share shape (N, d>=1): {q.shape}, {k.shape}, {v.shape}")
    return q, k, v


def _gather(x, cols):
    out = np.zeros((cols.size, x.shape[1]), np.float16)
    valid = cols != SENTINEL
    out[valid] = x[cols[valid]]
    return out


def _window(a, i, qp, kp, vp, cfg, k_order, tracker, literal):
    r, c, W = a.r, a.c, cfg.warps_per_block
    d = qp.shape[1]
    lo, hi = i * r, min((i + 1) * r, a.n_rows)
    q_i = np.zeros((r, d), np.float16)
    q_i[: hi - lo] = qp[lo:hi]
    plan = plan_gather(a, i, W)
    mask = np.zeros((r, plan.num_blocks * W * c), bool)
    if plan.t:
        mask[:, : plan.t * c] = a.window_mask(i)
    state = FusedState.initial(r, d)
    gemm = tbgemm
    if literal:
        def gemm(x, y, acc, tile, k_order=None):
            order = warp_tile_order(
                -(-x.shape[0] // tile.m), -(-y.shape[1] // tile.n), W, cfg.warp_partition
            )
            return tbgemm_tiled(x, y, acc, tile, k_order=k_order, tile_order=order)

    span = W * c
    for j, cols in enumerate(plan.blocks):
        k_hat = _gather(kp, cols)
        s = np.zeros((r, span), np.float32)
        if tracker is not None:
            tracker.record("S", s.shape)
        s = gemm(q_i, k_hat.T, s, cfg.tile, k_order=k_order)
        s[~mask[:, j * span:(j + 1) * span]] = -np.inf
        state, e = online_softmax_step(state, s)
        if tracker is not None:
            tracker.record("E", e.shape)
        e16 = cast_matrix(e, "half")
        v_hat = _gather(vp, cols)
        state.o_acc = gemm(e16, v_hat, state.o_acc, cfg.tile)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(
            state.l_o[:, None] > 0,
            state.o_acc / np.where(state.l_o > 0, state.l_o, np.float32(1))[:, None],
            np.float32(0),
        ).astype(np.float32)
    return lo, hi, out[: hi - lo]


def fused3s_forward(
    a: BsbMatrix,
    q,
    k,
    v,
    cfg: Optional[FusedConfig] = None,
    rw_order=None,
    tracker: Optional[AllocationTracker] = None,
    literal: bool = False,
):
    """``softmax(Q K^T masked by A) V`` in one pass per row window.

    Parameters
    ----------
    a : BsbMatrix
        Square binary mask.
    q, k, v : ndarray, float16, shape (N, d)
    cfg : FusedConfig, optional
    rw_order : sequence of int, optional
        Explicit visiting order of row windows; overrides ``cfg.rw_schedule``.
    tracker : AllocationTracker, optional
        Receives the shape of every score / weight block allocated.
    literal : bool
        Run the per-tile ``mma_tile`` loop with output tiles visited in the
        configured warp-partition order instead of the vectorized GEMM. Both
        produce identical bits; this path is slower and exists for checking.

    Returns
    -------
    ndarray, float32, shape (N, d)
        Rows whose mask row is empty are exactly zero.
    """
    cfg = cfg or FusedConfig()
    q, k, v = _check_inputs(a, q, k, v)
    N, d = q.shape
    tile = cfg.tile
    step = math.lcm(tile.k, tile.n, 16 if cfg.apply_remap else 1)
    d_pad = -(-d // step) * step
    if d_pad != d:
        pad = ((0, 0), (0, d_pad - d))
        q, k, v = (np.pad(x, pad) for x in (q, k, v))

    layout = None
    k_order = None
    if cfg.apply_remap:
        q, k, v, layout = apply_layout_permutation(q, k, v, remap_permutation(d_pad))
        # reduce in logical feature order whatever the physical layout
        k_order = layout.inverse

    if rw_order is None:
        rw_order = a.rw_order if cfg.rw_schedule == "reordered" else np.arange(a.num_rw)
    rw_order = np.asarray(rw_order, np.int64)
    if not np.array_equal(np.sort(rw_order), np.arange(a.num_rw)):
        raise ValueError("rw_order must be a permutation of the row windows")

    out = np.zeros((N, d_pad), np.float32)
    for i in rw_order.tolist():
        lo, hi, block = _window(a, i, q, k, v, cfg, k_order, tracker, literal)
        out[lo:hi] = block
    if layout is not None:
        out = layout.restore(out)
    return np.ascontiguousarray(out[:, :d])
