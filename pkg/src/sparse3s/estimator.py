"""scikit-learn style front end."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bsb import build_bsb, reorder_row_windows
from .fused3s import FusedConfig, fused3s_forward, occupancy_estimate
from .graphio import compute_stats
from .tile_arith import TileShape
from .validation import check_mask, check_qkv

__all__ = ["FusedSparseAttention"]


class FusedSparseAttention(BaseEstimator):
    """Masked attention ``softmax(Q K^T * A) V`` through the fused BSB engine.

    ``fit`` takes the mask A and builds its BSB encoding (plus the row-window
    reordering when ``rw_schedule='reordered'``). ``transform`` takes the
    query/key/value features for that mask.

    Parameters
    ----------
    r, c : int
        Row-window height and TCB width.
    warps_per_block : int
    warp_partition : {'split_column', 'split_row'}
    apply_remap : bool
        Permute the feature layout for wide gathered loads (result unchanged).
    rw_schedule : {'original', 'reordered'}
    tile : tuple of int
        MMA shape (m, n, k).

    Attributes
    ----------
    bsb_ : BsbMatrix
    mask_ : CooMatrix
    n_nodes_ : int
    """

    def __init__(self, r=16, c=8, warps_per_block=4, warp_partition="split_column",
                 apply_remap=False, rw_schedule="original", tile=(16, 8, 16)):
        self.r = r
        self.c = c
        self.warps_per_block = warps_per_block
        self.warp_partition = warp_partition
        self.apply_remap = apply_remap
        self.rw_schedule = rw_schedule
        self.tile = tile

    def _config(self):
        return FusedConfig(
            tile=TileShape(*self.tile),
            warps_per_block=self.warps_per_block,
            warp_partition=self.warp_partition,
            apply_remap=self.apply_remap,
            rw_schedule=self.rw_schedule,
        )

    def fit(self, A, y=None):
        self._config()
        self.mask_ = check_mask(A)
        bsb = build_bsb(self.mask_, self.r, self.c)
        if self.rw_schedule == "reordered":
            bsb = reorder_row_windows(bsb)
        self.bsb_ = bsb
        self.n_nodes_ = self.mask_.n_rows
        return self

    def transform(self, X):
        """Attention output (N, d) in float32 for ``X = (q, k, v)`` or ``[q|k|v]``."""
        check_is_fitted(self, "bsb_")
        q, k, v = check_qkv(X, self.n_nodes_)
        return fused3s_forward(self.bsb_, q, k, v, self._config())

    def occupancy(self, d):
        check_is_fitted(self, "bsb_")
        return occupancy_estimate(self.bsb_, self._config(), d)

    def sparsity_stats(self):
        check_is_fitted(self, "bsb_")
        return compute_stats(self.mask_, self.r, self.c)
