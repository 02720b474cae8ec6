import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse3s.bsb import CooMatrix
from sparse3s.oracles import (
    dense_attention_oracle,
    reference_matmul,
    softmax_row,
    softmax_terms,
    unfused_3s_oracle,
)

from conftest import random_coo, random_qkv


def test_softmax_uniform():
    assert softmax_row([0.0, 0.0]).tolist() == [0.5, 0.5]


def test_softmax_stabilized_large_input():
    out = softmax_row([1000.0, 0.0], variant="max_stabilized", precision="single")
    assert out.tolist() == [1.0, 0.0]


def test_softmax_mask_is_exact_zero(rng):
    x = rng.normal(size=10)
    mask = np.arange(10) % 3 == 0
    for variant in ("naive", "max_stabilized", "online"):
        out = softmax_row(x, mask, variant, "double", chunk=2)
        assert np.all(out[~mask] == 0)
        assert abs(out.sum() - 1) <= 1e-12


def test_softmax_no_support_is_zero():
    assert softmax_row([1.0, 2.0], [False, False], "online").tolist() == [0.0, 0.0]


@pytest.mark.parametrize("chunk", [8, 16, 64])
def test_online_matches_global(rng, chunk):
    for _ in range(50):
        x = rng.normal(0, 5, 64).astype(np.float32)
        on = softmax_row(x, variant="online", precision="single", chunk=chunk)
        glob = softmax_row(x, variant="max_stabilized", precision="single")
        assert np.abs(on - glob).max() <= 1e-6


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=80),
    st.sampled_from(["naive", "max_stabilized", "online"]),
    st.sampled_from([("single", 1e-6), ("double", 1e-12)]),
    st.integers(1, 17),
)
def test_softmax_sums_to_one(xs, variant, prec_tol, chunk):
    prec, tol = prec_tol
    out = softmax_row(np.array(xs), None, variant, prec, chunk)
    assert np.all(out >= 0)
    assert abs(float(out.astype(np.float64).sum()) - 1.0) <= tol * max(1, len(xs) / 8)


def test_naive_overflow_thresholds():
    # single: exp(88) is finite, exp(90) is not
    num, den, _ = softmax_terms([88.0, 0.0], variant="naive", precision="single")
    assert np.isfinite(num).all()
    out = softmax_row([90.0, 0.0], variant="naive", precision="single")
    assert np.isnan(out).any()
    assert np.isfinite(softmax_row([90.0, 0.0], variant="max_stabilized", precision="single")).all()
    assert np.isfinite(softmax_row([90.0, 0.0], variant="online", precision="single")).all()
    # half: exp(11) fits below 65504, exp(12) does not
    num, _, _ = softmax_terms([11.0, 0.0], variant="naive", precision="half")
    assert np.isfinite(num).all()
    num, den, _ = softmax_terms([12.0, 0.0], variant="naive", precision="half")
    assert np.isposinf(num[0]) and np.isposinf(den)
    assert not np.isfinite(softmax_row([12.0, 0.0], variant="naive", precision="half")).all()
    assert np.isfinite(softmax_row([12.0, 0.0], variant="max_stabilized", precision="half")).all()


def test_reference_matmul_matches_numpy(rng):
    a, b = rng.normal(size=(7, 5)), rng.normal(size=(5, 3))
    assert np.allclose(reference_matmul(a, b), a @ b, atol=1e-14)
    with pytest.raises(ValueError):
        reference_matmul(a, a)


def test_dense_identity(rng, identity16):
    q, k, v = random_qkv(rng, 16, 8)
    assert np.array_equal(dense_attention_oracle(identity16, q, k, v), v.astype(np.float64))


def test_dense_two_by_two():
    a = CooMatrix.from_dense(np.ones((2, 2)))
    q = k = np.zeros((2, 2))
    v = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert dense_attention_oracle(a, q, k, v).tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_cross_oracle_agreement(rng):
    for _ in range(20):
        n = int(rng.integers(8, 80))
        a = random_coo(rng, n, rng.uniform(0.01, 0.3))
        q, k, v = (rng.uniform(-1, 1, (n, 12)) for _ in range(3))
        dense = dense_attention_oracle(a, q, k, v, "double")
        unfused = unfused_3s_oracle(a, q, k, v, "max_stabilized", "double")
        assert np.abs(dense - unfused).max() <= 1e-12


def test_unfused_naive_overflow():
    a = CooMatrix.from_dense(np.ones((2, 2)))
    q = np.array([[90.0], [0.0]])
    k = np.array([[1.0], [0.0]])
    v = np.array([[1.0], [2.0]])
    assert np.isnan(unfused_3s_oracle(a, q, k, v, "naive", "single")).any()
    assert np.isfinite(unfused_3s_oracle(a, q, k, v, "max_stabilized", "single")).all()
    qh = np.array([[12.0], [0.0]])
    assert not np.isfinite(unfused_3s_oracle(a, qh, k, v, "naive", "half")).all()
    assert np.isfinite(unfused_3s_oracle(a, qh, k, v, "max_stabilized", "half")).all()


def test_shape_checks(rng):
    a = random_coo(rng, 8, 0.5)
    q = np.zeros((8, 4))
    with pytest.raises(ValueError):
        dense_attention_oracle(a, q, q[:7], q)
    with pytest.raises(ValueError):
        unfused_3s_oracle(random_coo(rng, 8, 0.5, n_cols=9), q, q, q)


def test_oracle_intermediate_sizes(rng):
    from sparse3s.fused3s import AllocationTracker
    a = random_coo(rng, 40, 0.1)
    q, k, v = random_qkv(rng, 40, 8)
    dense_trk, unfused_trk = AllocationTracker(), AllocationTracker()
    dense_attention_oracle(a, q, k, v, tracker=dense_trk)
    unfused_3s_oracle(a, q, k, v, tracker=unfused_trk)
    assert dense_trk.max_elements("S", "E") == 40 * 40
    assert unfused_trk.max_elements("S", "E") == a.nnz
