import numpy as np

from sparse3s.prng import splitmix64, splitmix64_array, synth_qkv, uniform_pm1


def test_known_first_output():
    _, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF


def test_array_matches_scalar():
    for seed in (0, 1, 12345, 2**63 + 7):
        state, expected = seed, []
        for _ in range(50):
            state, out = splitmix64(state)
            expected.append(out)
        assert splitmix64_array(seed, 50).tolist() == expected
        assert splitmix64_array(seed, 10, start=40).tolist() == expected[40:]


def test_uniform_range():
    u = uniform_pm1(3, 100_000)
    assert u.min() >= -1.0 and u.max() < 1.0
    assert abs(u.mean()) < 0.01


def test_synth_qkv_layout():
    q, k, v = synth_qkv(5, 4, 9)
    assert q.dtype == np.float16 and q.shape == (5, 4)
    flat = uniform_pm1(9, 60).astype(np.float16)
    assert np.array_equal(np.concatenate([q.ravel(), k.ravel(), v.ravel()]), flat)
    q2, _, _ = synth_qkv(5, 4, 9)
    assert np.array_equal(q, q2)
