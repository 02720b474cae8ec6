"""Fused sparse attention (SDDMM -> softmax -> SpMM) on a binary block-sparse format."""

__version__ = "0.1.0"

from .bsb import (
    BsbMatrix,
    CooMatrix,
    FootprintParams,
    FormatError,
    SparseFormat,
    build_bsb,
    deserialize,
    footprint_bits,
    footprint_params,
    reorder_row_windows,
    serialize,
    to_dense,
)
from .estimator import FusedSparseAttention
from .fused3s import FusedConfig, FusedState, fused3s_forward, occupancy_estimate, plan_gather
from .graphio import SparsityStats, compute_stats, generate_synthetic, load_edge_list, load_matrix_market
from .oracles import SoftmaxVariant, dense_attention_oracle, softmax_row, unfused_3s_oracle
from .schedsim import CostModel, ScheduleTrace, brute_force_optimum, lpt_order, simulate_schedule
from .tile_arith import DEFAULT_TILE, Half, ShapeError, TileShape, cast_matrix, mma_tile, tbgemm

__all__ = [
    "BsbMatrix", "CooMatrix", "FootprintParams", "FormatError", "SparseFormat", "build_bsb",
    "deserialize", "footprint_bits", "footprint_params", "reorder_row_windows", "serialize",
    "to_dense", "FusedSparseAttention", "FusedConfig", "FusedState", "fused3s_forward",
    "occupancy_estimate", "plan_gather", "SparsityStats", "compute_stats", "generate_synthetic",
    "load_edge_list", "load_matrix_market", "SoftmaxVariant", "dense_attention_oracle",
    "softmax_row", "unfused_3s_oracle", "CostModel", "ScheduleTrace", "brute_force_optimum",
    "lpt_order", "simulate_schedule", "DEFAULT_TILE", "Half", "ShapeError", "TileShape",
    "cast_matrix", "mma_tile", "tbgemm",
]
