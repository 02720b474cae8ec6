import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse3s.bsb import (
    BsbMatrix,
    CooMatrix,
    FootprintParams,
    FormatError,
    build_bsb,
    deserialize,
    footprint_bits,
    footprint_params,
    reorder_row_windows,
    serialize,
    to_dense,
)

from conftest import random_coo


def dense_support(b: BsbMatrix):
    """Rebuild the boolean matrix straight from tro/sptd/bitmap bit positions."""
    out = np.zeros((b.n_rows, b.n_cols), bool)
    nbytes = b.bitmaps.shape[1]
    for i in range(b.num_rw):
        s = b.sptd_of(i)
        for j, tcb in enumerate(range(b.tro[i], b.tro[i + 1])):
            for bit in range(b.r * b.c):
                if b.bitmaps[tcb, bit // 8] >> (bit % 8) & 1:
                    p, q = divmod(bit, b.c)
                    out[i * b.r + p, s[j * b.c + q]] = True
    assert nbytes == -(-b.r * b.c // 8)
    return out


# ---------------------------------------------------------------------------
# CooMatrix
# ---------------------------------------------------------------------------

def test_coo_canonicalizes_duplicates():
    a = CooMatrix.from_entries(3, 3, [(2, 1), (0, 1), (2, 1)])
    assert a.entries() == [(0, 1), (2, 1)]


def test_coo_rejects_out_of_range():
    with pytest.raises(ValueError):
        CooMatrix.from_entries(3, 3, [(3, 0)])
    with pytest.raises(ValueError):
        CooMatrix.from_entries(3, 3, [(0, -1)])


# ---------------------------------------------------------------------------
# build_bsb / to_dense
# ---------------------------------------------------------------------------

def test_build_empty():
    b = build_bsb(CooMatrix.from_entries(16, 16, []), 16, 8)
    assert b.num_rw == 1
    assert b.tro.tolist() == [0, 0]
    assert b.sptd.size == 0
    assert b.bitmaps.shape == (0, 16)
    assert to_dense(b).nnz == 0


def test_build_identity(identity16):
    b = build_bsb(identity16, 16, 8)
    assert b.num_rw == 1
    assert b.tro.tolist() == [0, 2]
    assert b.sptd.tolist() == list(range(16))
    masks = b.block_masks(0)
    expect0 = np.zeros((16, 8), bool)
    expect1 = np.zeros((16, 8), bool)
    for i in range(8):
        expect0[i, i] = True
        expect1[i + 8, i] = True
    assert np.array_equal(masks[0], expect0)
    assert np.array_equal(masks[1], expect1)
    assert b.nnz == 16
    assert np.array_equal(dense_support(b), np.eye(16, dtype=bool))


def test_identity_to_dense(identity16):
    back = to_dense(build_bsb(identity16, 16, 8))
    assert back.entries() == [(i, i) for i in range(16)]


def test_bit_order_lsb_first():
    # single entry at (p=1, q=2) of the first block: bit 1*8+2 = 10 -> byte 1, bit 2
    a = CooMatrix.from_entries(16, 16, [(1, 5)])
    b = build_bsb(a, 16, 8)
    assert b.sptd.tolist() == [5]
    row = b.bitmaps[0]
    # compacted column of col 5 is 0, so the bit is 1*8 + 0 = 8
    assert row.tolist() == [0, 1] + [0] * 14


def test_random_round_trip(rng):
    a = random_coo(rng, 32, 0.1)
    b = build_bsb(a, 16, 8)
    assert np.array_equal(dense_support(b), a.to_array())
    assert to_dense(b) == a


def test_ragged_last_window(rng):
    a = random_coo(rng, 37, 0.2)
    b = build_bsb(a, 16, 8)
    assert b.num_rw == 3
    assert to_dense(b) == a
    b.validate()


def test_rectangular(rng):
    a = random_coo(rng, 20, 0.15, n_cols=45)
    b = build_bsb(a, 8, 8)
    assert to_dense(b) == a


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 96),
    density=st.floats(0.001, 0.3),
    rc=st.sampled_from([(16, 8), (8, 8), (16, 16)]),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(n, density, rc, seed):
    a = random_coo(np.random.default_rng(seed), n, density)
    b = build_bsb(a, *rc).validate()
    assert to_dense(b) == a
    assert b.nnz == a.nnz
    # width bound and tro consistency
    t = b.tcb_counts
    w = b.widths
    assert np.all((t - 1) * b.c < w) or not w.any()
    assert np.all(w <= t * b.c)
    assert build_bsb(to_dense(b), *rc) == b


def test_sptd_is_exactly_the_nonzero_columns(rng):
    a = random_coo(rng, 64, 0.05)
    b = build_bsb(a, 16, 8)
    dense = a.to_array()
    for i in range(b.num_rw):
        expect = np.nonzero(dense[i * 16:(i + 1) * 16].any(axis=0))[0]
        assert b.sptd_of(i).tolist() == expect.tolist()


# ---------------------------------------------------------------------------
# reordering
# ---------------------------------------------------------------------------

def _with_counts(counts, c=8):
    """Mask whose row windows (r=16) have the given TCB counts."""
    entries = []
    for i, t in enumerate(counts):
        entries += [(16 * i, col) for col in range(t * c)]
    n = max(16 * len(counts), max(counts) * c)
    return CooMatrix.from_entries(n, n, entries)


def test_reorder_example():
    b = build_bsb(_with_counts([2, 5, 5, 1]), 16, 8)
    assert b.tcb_counts[:4].tolist() == [2, 5, 5, 1]
    rb = reorder_row_windows(b)
    assert rb.rw_order[:4].tolist() == [1, 2, 0, 3]


def test_reorder_ties_and_single():
    b = build_bsb(CooMatrix.from_entries(64, 64, [(i, i) for i in range(64)]), 16, 8)
    assert reorder_row_windows(b).rw_order.tolist() == [0, 1, 2, 3]
    one = build_bsb(CooMatrix.from_entries(8, 8, [(0, 0)]), 16, 8)
    assert reorder_row_windows(one).rw_order.tolist() == [0]


def test_reorder_only_touches_order(rng):
    a = random_coo(rng, 128, 0.03)
    b = build_bsb(a, 16, 8)
    rb = reorder_row_windows(b)
    assert to_dense(rb) == to_dense(b)
    for name in ("tro", "sptd", "sptd_offsets", "bitmaps"):
        assert np.array_equal(getattr(rb, name), getattr(b, name))
    assert reorder_row_windows(rb) == rb


# ---------------------------------------------------------------------------
# footprint
# ---------------------------------------------------------------------------

def test_footprint_identity(identity16):
    p = footprint_params(build_bsb(identity16, 16, 8))
    assert p == FootprintParams(N=16, z=16, r=16, b=2, bc=16, rc=128)
    assert footprint_bits("BSB", p) == 800
    assert footprint_bits("CSR", p) == 1536


def test_footprint_empty():
    p = footprint_params(build_bsb(CooMatrix.from_entries(64, 64, []), 16, 8))
    assert footprint_bits("BSB", p) == 32 * 4


def test_footprint_unknown_format():
    with pytest.raises(ValueError):
        footprint_bits("COO", FootprintParams(N=4))


def test_footprint_bsb_vs_tcf_when_dense_enough(rng):
    for _ in range(20):
        a = random_coo(rng, 128, rng.uniform(0.02, 0.3))
        p = footprint_params(build_bsb(a, 16, 8))
        if p.z >= p.b * p.rc / 32:
            assert footprint_bits("BSB", p) <= footprint_bits("TCF", p)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_serialize_round_trip(identity16):
    b = build_bsb(identity16, 16, 8)
    blob = serialize(b)
    assert blob[:4] == b"BSB1"
    # header 32 + tro 8 + offsets 8 + sptd 64 + bitmaps 2*16 + rw_order 4
    assert len(blob) == 32 + 8 + 8 + 64 + 32 + 4
    assert deserialize(blob) == b


def test_serialize_round_trip_reordered(rng):
    b = reorder_row_windows(build_bsb(random_coo(rng, 100, 0.05), 16, 8))
    assert deserialize(serialize(b)) == b


def test_truncated_stream(identity16):
    blob = serialize(build_bsb(identity16, 16, 8))
    for cut in (3, 20, 40, len(blob) - 1):
        with pytest.raises(FormatError):
            deserialize(blob[:cut])


def test_bad_magic(identity16):
    blob = bytearray(serialize(build_bsb(identity16, 16, 8)))
    blob[:4] = b"XXXX"
    with pytest.raises(FormatError, match="magic"):
        deserialize(bytes(blob))


def test_decreasing_tro_rejected(rng):
    b = build_bsb(random_coo(rng, 48, 0.1), 16, 8)
    blob = bytearray(serialize(b))
    # tro starts right after the 32-byte header; make tro[1] larger than tro[2]
    tro = np.frombuffer(bytes(blob[32:32 + 4 * 4]), "<u4").copy()
    tro[1] = tro[2] + 1
    blob[32:32 + 16] = tro.astype("<u4").tobytes()
    with pytest.raises(FormatError, match="tro"):
        deserialize(bytes(blob))


def test_trailing_bytes_rejected(identity16):
    with pytest.raises(FormatError):
        deserialize(serialize(build_bsb(identity16, 16, 8)) + b"\0")
