"""Binary Sparse Block (BSB) format.

A binary N x M matrix is cut into row windows (RWs) of ``r`` rows. Inside each
RW the all-zero columns are dropped, and the surviving columns are tiled into
``r x c`` tensor-core blocks (TCBs). Three arrays describe the result:

``tro``
    cumulative TCB count per row window (length ``num_rw + 1``)
``sptd``
    original column index of every compacted column, RW after RW
``bitmaps``
    one ``r*c``-bit mask per TCB; bit ``p*c + q`` (LSB first, packed into
    ``ceil(r*c/8)`` bytes) is set iff row ``p`` / compacted column ``q`` of the
    block is nonzero
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

__all__ = [
    "CooMatrix",
    "BsbMatrix",
    "FormatError",
    "SparseFormat",
    "FootprintParams",
    "build_bsb",
    "to_dense",
    "footprint_bits",
    "footprint_params",
    "reorder_row_windows",
    "serialize",
    "deserialize",
    "MAGIC",
]

MAGIC = b"BSB1"


class FormatError(ValueError):
    """A BSB byte stream or structure is malformed."""


# ---------------------------------------------------------------------------
# COO
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CooMatrix:
    """Binary sparse matrix as canonical (row-major sorted, deduplicated) pairs."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have the same length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                bad = int(rows[(rows < 0) | (rows >= self.n_rows)][0])
                raise ValueError(f"row index {bad} out of range [0, {self.n_rows})")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                bad = int(cols[(cols < 0) | (cols >= self.n_cols)][0])
                raise ValueError(f"column index {bad} out of range [0, {self.n_cols})")
            # duplicates carry no information in a binary matrix
            key = np.unique(rows * self.n_cols + cols)
            rows, cols = key // self.n_cols, key % self.n_cols
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def from_entries(cls, n_rows, n_cols, entries):
        entries = list(entries)
        if not entries:
            return cls(n_rows, n_cols, np.empty(0, np.int64), np.empty(0, np.int64))
        r, c = zip(*entries)
        return cls(n_rows, n_cols, np.array(r), np.array(c))

    @classmethod
    def from_dense(cls, mask):
        mask = np.asarray(mask)
        if mask.ndim != 2:
            raise ValueError("dense mask must be 2-D")
        r, c = np.nonzero(mask)
        return cls(mask.shape[0], mask.shape[1], r, c)

    @classmethod
    def from_scipy(cls, mat):
        coo = mat.tocoo()
        keep = coo.data != 0
        return cls(coo.shape[0], coo.shape[1], coo.row[keep], coo.col[keep])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def to_array(self, dtype=bool) -> np.ndarray:
        out = np.zeros(self.shape, dtype=dtype)
        out[self.rows, self.cols] = 1
        return out

    def __eq__(self, other):
        if not isinstance(other, CooMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
        )

    def __repr__(self):
        return f"CooMatrix(shape={self.shape}, nnz={self.nnz})"


# ---------------------------------------------------------------------------
# BSB
# ---------------------------------------------------------------------------

def _bitmap_bytes(r: int, c: int) -> int:
    return -(-(r * c) // 8)


@dataclass(frozen=True, eq=False)
class BsbMatrix:
    n_rows: int
    n_cols: int
    r: int
    c: int
    tro: np.ndarray
    sptd_offsets: np.ndarray
    sptd: np.ndarray
    bitmaps: np.ndarray  # uint8, shape (total_tcbs, ceil(r*c/8))
    rw_order: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rw_order is None:
            object.__setattr__(self, "rw_order", np.arange(self.num_rw, dtype=np.int64))

    @property
    def num_rw(self) -> int:
        return -(-self.n_rows // self.r) if self.r > 0 else 0

    @property
    def total_tcbs(self) -> int:
        return int(self.tro[-1])

    @property
    def tcb_counts(self) -> np.ndarray:
        return np.diff(self.tro)

    @property
    def widths(self) -> np.ndarray:
        """Compacted width (number of retained columns) per RW."""
        return np.diff(self.sptd_offsets)

    @property
    def nnz(self) -> int:
        return int(np.unpackbits(self.bitmaps, bitorder="little").sum()) if self.bitmaps.size else 0

    def sptd_of(self, rw: int) -> np.ndarray:
        return self.sptd[self.sptd_offsets[rw]:self.sptd_offsets[rw + 1]]

    def block_masks(self, rw: int) -> np.ndarray:
        """Bool array (t, r, c) of the TCB bitmaps of one row window."""
        lo, hi = int(self.tro[rw]), int(self.tro[rw + 1])
        bits = np.unpackbits(self.bitmaps[lo:hi], axis=1, bitorder="little")
        return bits[:, : self.r * self.c].reshape(hi - lo, self.r, self.c).astype(bool)

    def window_mask(self, rw: int) -> np.ndarray:
        """Bool array (r, t*c): the compacted support of one row window."""
        blocks = self.block_masks(rw)
        return blocks.transpose(1, 0, 2).reshape(self.r, -1)

    def validate(self):
        """Check every structural invariant; raise :class:`FormatError`."""
        num_rw = self.num_rw
        if self.r < 1 or self.c < 1:
            raise FormatError(f"r, c: block dimensions must be positive, got r={self.r}, c={self.c}")
        tro = np.asarray(self.tro)
        if tro.shape != (num_rw + 1,):
            raise FormatError(f"tro: expected length {num_rw + 1}, got {tro.shape[0]}")
        if tro[0] != 0 or np.any(np.diff(tro.astype(np.int64)) < 0):
            raise FormatError("tro: must start at 0 and be nondecreasing")
        offs = np.asarray(self.sptd_offsets)
        if offs.shape != (num_rw + 1,) or offs[0] != 0 or np.any(np.diff(offs.astype(np.int64)) < 0):
            raise FormatError("sptd_offsets: must have num_rw+1 nondecreasing entries starting at 0")
        if int(offs[-1]) != self.sptd.size:
            raise FormatError(f"sptd: length {self.sptd.size} disagrees with offsets ({int(offs[-1])})")
        widths = np.diff(offs.astype(np.int64))
        if not np.array_equal(np.diff(tro.astype(np.int64)), -(-widths // self.c)):
            raise FormatError("tro: TCB count per RW must equal ceil(compacted width / c)")
        if self.bitmaps.shape != (self.total_tcbs, _bitmap_bytes(self.r, self.c)):
            raise FormatError(
                f"bitmaps: expected shape {(self.total_tcbs, _bitmap_bytes(self.r, self.c))}, "
                f"got {self.bitmaps.shape}"
            )
        if self.sptd.size and (self.sptd.min() < 0 or self.sptd.max() >= self.n_cols):
            raise FormatError("sptd: column index out of range")
        for i in range(num_rw):
            s = self.sptd_of(i)
            if s.size > 1 and np.any(np.diff(s.astype(np.int64)) <= 0):
                raise FormatError(f"sptd: row window {i} is not strictly increasing")
            if s.size:
                mask = self.window_mask(i)
                rows_here = min(self.r, self.n_rows - i * self.r)
                if mask[rows_here:].any() or mask[:, s.size:].any():
                    raise FormatError(f"bitmaps: row window {i} has bits outside its support")
                if not mask[:, : s.size].any(axis=0).all():
                    raise FormatError(f"sptd: row window {i} retains an all-zero column")
        order = np.asarray(self.rw_order)
        if order.shape != (num_rw,) or not np.array_equal(np.sort(order), np.arange(num_rw)):
            raise FormatError("rw_order: must be a permutation of the row-window indices")
        return self

    def __eq__(self, other):
        if not isinstance(other, BsbMatrix):
            return NotImplemented
        return (
            (self.n_rows, self.n_cols, self.r, self.c) == (other.n_rows, other.n_cols, other.r, other.c)
            and np.array_equal(self.tro, other.tro)
            and np.array_equal(self.sptd_offsets, other.sptd_offsets)
            and np.array_equal(self.sptd, other.sptd)
            and np.array_equal(self.bitmaps, other.bitmaps)
            and np.array_equal(self.rw_order, other.rw_order)
        )

    def __repr__(self):
        return (
            f"BsbMatrix(shape=({self.n_rows}, {self.n_cols}), r={self.r}, c={self.c}, "
            f"num_rw={self.num_rw}, total_tcbs={self.total_tcbs})"
        )


def build_bsb(a: CooMatrix, r: int = 16, c: int = 8) -> BsbMatrix:
    """Compact and tile ``a`` into BSB with ``r x c`` blocks."""
    if r < 1 or c < 1:
        raise ValueError(f"block dimensions must be positive, got r={r}, c={c}")
    num_rw = -(-a.n_rows // r)
    rows, cols = a.rows, a.cols
    rw = rows // r

    # retained columns per RW: unique (rw, col) pairs, already RW-major
    pair = np.unique(rw * a.n_cols + cols) if rows.size else np.empty(0, np.int64)
    pair_rw = pair // max(a.n_cols, 1)
    sptd = pair % max(a.n_cols, 1)
    widths = np.bincount(pair_rw, minlength=num_rw) if num_rw else np.zeros(0, np.int64)
    sptd_offsets = np.concatenate([[0], np.cumsum(widths)]).astype(np.int64)
    tcb_counts = -(-widths // c)
    tro = np.concatenate([[0], np.cumsum(tcb_counts)]).astype(np.int64)

    nbytes = _bitmap_bytes(r, c)
    bits = np.zeros((int(tro[-1]), nbytes * 8), dtype=np.uint8)
    if rows.size:
        # compacted position of every entry inside its RW
        pos = np.searchsorted(pair, rw * a.n_cols + cols) - sptd_offsets[rw]
        tcb = tro[rw] + pos // c
        bit = (rows % r) * c + pos % c
        bits[tcb, bit] = 1
    bitmaps = np.packbits(bits, axis=1, bitorder="little") if bits.size else np.zeros((int(tro[-1]), nbytes), np.uint8)

    return BsbMatrix(
        n_rows=a.n_rows,
        n_cols=a.n_cols,
        r=r,
        c=c,
        tro=tro,
        sptd_offsets=sptd_offsets,
        sptd=sptd.astype(np.int64),
        bitmaps=bitmaps,
        rw_order=np.arange(num_rw, dtype=np.int64),
    )


def to_dense(b: BsbMatrix) -> CooMatrix:
    """Recover the support of ``b`` as a :class:`CooMatrix`."""
    rows, cols = [], []
    for i in range(b.num_rw):
        s = b.sptd_of(i)
        if not s.size:
            continue
        p, q = np.nonzero(b.window_mask(i))
        rows.append(i * b.r + p)
        cols.append(s[q])
    if not rows:
        return CooMatrix(b.n_rows, b.n_cols, np.empty(0, np.int64), np.empty(0, np.int64))
    return CooMatrix(b.n_rows, b.n_cols, np.concatenate(rows), np.concatenate(cols))


def reorder_row_windows(b: BsbMatrix) -> BsbMatrix:
    """Schedule row windows by TCB count, descending; ties keep index order."""
    counts = b.tcb_counts
    order = np.lexsort((np.arange(b.num_rw), -counts)).astype(np.int64)
    return replace(b, rw_order=order)


# ---------------------------------------------------------------------------
# memory footprint
# ---------------------------------------------------------------------------

class SparseFormat(str, Enum):
    CSR = "CSR"
    SR_BCSR = "SR_BCSR"
    ME_BCRS = "ME_BCRS"
    BCSR = "BCSR"
    TCF = "TCF"
    ME_TCF = "ME_TCF"
    BitTCF = "BitTCF"
    BSB = "BSB"


@dataclass(frozen=True)
class FootprintParams:
    """Inputs to the footprint formulas.

    N: matrix dimension (N x N); z: nonzeros; r: row-window height;
    b: number of blocks; bc: stored columns after compaction; rc: elements
    per block. For ME-TCF/BitTCF, ``z`` is whatever nonzero count the caller
    considers stored; compaction never changes it for a binary matrix.
    """

    N: int
    z: int = 0
    r: int = 16
    b: int = 0
    bc: int = 0
    rc: int = 128


def footprint_bits(fmt, params: FootprintParams) -> int:
    """Storage size in bits, assuming 32-bit indices/values.

    ``N / r`` is taken as ``ceil(N / r)`` (a partial last row window still
    costs one offset).
    """
    try:
        fmt = SparseFormat(fmt)
    except ValueError:
        raise ValueError(f"unknown sparse format {fmt!r}") from None
    p = params
    if min(p.N, p.z, p.r, p.b, p.bc, p.rc) < 0 or p.r == 0:
        raise ValueError("footprint parameters must be nonnegative (r > 0)")
    nr = -(-p.N // p.r)
    brc = p.b * p.rc
    if fmt is SparseFormat.CSR:
        return 32 * (p.N + 2 * p.z)
    if fmt is SparseFormat.SR_BCSR:
        return 32 * (2 * nr + p.bc + brc)
    if fmt is SparseFormat.ME_BCRS:
        return 32 * (nr + p.bc + brc)
    if fmt is SparseFormat.BCSR:
        return 32 * (nr + p.b + brc)
    if fmt is SparseFormat.TCF:
        return 32 * (nr + p.N + 3 * p.z)
    if fmt is SparseFormat.ME_TCF:
        return 32 * (nr + p.b + p.z) + 8 * p.z
    if fmt is SparseFormat.BitTCF:
        return 32 * (nr + p.b + p.z) + p.z
    return 32 * (nr + p.bc) + brc


def footprint_params(b: BsbMatrix) -> FootprintParams:
    """Footprint parameters read off a concrete BSB structure."""
    return FootprintParams(
        N=b.n_rows, z=b.nnz, r=b.r, b=b.total_tcbs, bc=int(b.sptd.size), rc=b.r * b.c
    )


# ---------------------------------------------------------------------------
# binary file format
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4s7I")


def serialize(b: BsbMatrix) -> bytes:
    """Little-endian ``BSB1`` encoding (see README for the layout)."""
    header = _HEADER.pack(
        MAGIC, b.n_rows, b.n_cols, b.r, b.c, b.num_rw, b.total_tcbs, int(b.sptd.size)
    )
    u32 = np.dtype("<u4")
    return b"".join([
        header,
        np.asarray(b.tro).astype(u32).tobytes(),
        np.asarray(b.sptd_offsets).astype(u32).tobytes(),
        np.asarray(b.sptd).astype(u32).tobytes(),
        np.ascontiguousarray(b.bitmaps, dtype=np.uint8).tobytes(),
        np.asarray(b.rw_order).astype(u32).tobytes(),
    ])


def deserialize(data: bytes) -> BsbMatrix:
    """Inverse of :func:`serialize`; validates every invariant on load."""
    data = memoryview(bytes(data))
    if len(data) < _HEADER.size:
        raise FormatError(f"header: truncated stream ({len(data)} bytes)")
    magic, n_rows, n_cols, r, c, num_rw, total_tcbs, sptd_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"magic: expected {MAGIC!r}, got {bytes(magic)!r}")
    if r < 1 or c < 1:
        raise FormatError(f"r, c: block dimensions must be positive, got r={r}, c={c}")
    if num_rw != -(-n_rows // r):
        raise FormatError(f"num_rw: {num_rw} != ceil({n_rows}/{r})")
    off = _HEADER.size
    u32 = np.dtype("<u4")

    def take(name, count, dtype=u32):
        nonlocal off
        nbytes = count * np.dtype(dtype).itemsize
        if off + nbytes > len(data):
            raise FormatError(f"{name}: truncated stream (need {nbytes} bytes at offset {off})")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += nbytes
        return arr.astype(np.int64) if dtype is u32 else arr.copy()

    tro = take("tro", num_rw + 1)
    offsets = take("sptd_offsets", num_rw + 1)
    sptd = take("sptd", sptd_len)
    nbytes = _bitmap_bytes(r, c)
    bitmaps = take("bitmaps", total_tcbs * nbytes, np.uint8).reshape(total_tcbs, nbytes)
    rw_order = take("rw_order", num_rw)
    if off != len(data):
        raise FormatError(f"trailer: {len(data) - off} unexpected bytes after rw_order")
    if tro[-1] != total_tcbs:
        raise FormatError(f"tro: final entry {tro[-1]} != total_tcbs {total_tcbs}")
    out = BsbMatrix(n_rows, n_cols, r, c, tro, offsets, sptd, bitmaps, rw_order)
    return out.validate()
