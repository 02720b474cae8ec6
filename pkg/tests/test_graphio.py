import json

import numpy as np
import pytest

from sparse3s.bsb import CooMatrix, build_bsb, reorder_row_windows
from sparse3s.graphio import (
    ParseError,
    compute_stats,
    format_stats_table,
    generate_synthetic,
    load_edge_list,
    load_graph,
    load_matrix_market,
    parse_synthetic_spec,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_mtx_general(tmp_path):
    p = write(tmp_path, "a.mtx", "%%MatrixMarket matrix coordinate real general\n% c\n3 3 2\n1 2 0.5\n3 1 -1\n")
    a = load_matrix_market(p)
    assert a.shape == (3, 3)
    assert a.entries() == [(0, 1), (2, 0)]


def test_mtx_symmetric_and_self_loops(tmp_path):
    p = write(tmp_path, "s.mtx", "%%MatrixMarket matrix coordinate pattern symmetric\n3 3 1\n2 1\n")
    a = load_matrix_market(p, add_self_loops=True)
    assert a.entries() == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]


def test_mtx_errors_carry_line(tmp_path):
    p = write(tmp_path, "bad.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 x 1\n")
    with pytest.raises(ParseError) as info:
        load_matrix_market(p)
    assert info.value.line == 4
    assert ":4:" in str(info.value)
    p = write(tmp_path, "oob.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n")
    with pytest.raises(ParseError):
        load_matrix_market(p)
    p = write(tmp_path, "count.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n")
    with pytest.raises(ParseError):
        load_matrix_market(p)
    p = write(tmp_path, "head.mtx", "2 2 1\n1 1\n")
    with pytest.raises(ParseError):
        load_matrix_market(p)


def test_edge_list(tmp_path):
    p = write(tmp_path, "e.txt", "# comment\n0 1\n2 0  # tail\n\n")
    a = load_edge_list(p)
    assert a.shape == (3, 3)
    assert a.entries() == [(0, 1), (2, 0)]
    assert load_edge_list(p, symmetrize=True).entries() == [(0, 1), (0, 2), (1, 0), (2, 0)]
    assert load_edge_list(p, num_nodes=5).shape == (5, 5)
    with pytest.raises(ParseError):
        load_edge_list(p, num_nodes=2)
    bad = write(tmp_path, "b.txt", "0 1\n0\n")
    with pytest.raises(ParseError) as info:
        load_edge_list(bad)
    assert info.value.line == 2


def test_load_graph_sniffs(tmp_path):
    m = write(tmp_path, "a.mtx", "%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 2\n")
    e = write(tmp_path, "a.txt", "0 1\n")
    assert load_graph(m) == load_graph(e)


def test_uniform_deterministic():
    a = generate_synthetic("uniform", seed=4, n=64, density=0.1)
    assert a == generate_synthetic("uniform", seed=4, n=64, density=0.1)
    assert a != generate_synthetic("uniform", seed=5, n=64, density=0.1)
    assert 0.05 < a.nnz / 64**2 < 0.15


def test_power_law_symmetric_with_diagonal():
    a = generate_synthetic("power_law", seed=1, n=200, m=3)
    dense = a.to_array(bool)
    assert np.array_equal(dense, dense.T)
    assert dense.diagonal().all()


def test_batched_blocks_is_block_diagonal():
    a = generate_synthetic("batched_blocks", sizes=[3, 5, 2])
    dense = a.to_array(bool)
    expected = np.zeros((10, 10), bool)
    expected[:3, :3] = expected[3:8, 3:8] = expected[8:, 8:] = True
    assert np.array_equal(dense, expected)
    b = generate_synthetic("batched_blocks", seed=2, components=4, size=8, density=0.5)
    d = b.to_array(bool)
    for i in range(4):
        d[8 * i:8 * i + 8, 8 * i:8 * i + 8] = False
    assert not d.any()


def test_synthetic_errors():
    with pytest.raises(ValueError):
        generate_synthetic("ring", n=3)
    with pytest.raises(ValueError):
        generate_synthetic("uniform", n=4, density=2)
    with pytest.raises(ValueError):
        generate_synthetic("power_law", n=3, m=3)


def test_parse_synthetic_spec():
    assert parse_synthetic_spec("uniform:n=128,density=0.05") == ("uniform", {"n": 128, "density": 0.05})
    assert parse_synthetic_spec("batched_blocks:sizes=2/3") == ("batched_blocks", {"sizes": [2, 3]})
    with pytest.raises(ValueError):
        parse_synthetic_spec("uniform:n")


def test_power_law_more_skewed_than_uniform():
    pl = compute_stats(generate_synthetic("power_law", seed=0, n=1000, m=4))
    un = compute_stats(generate_synthetic("uniform", seed=0, n=1000, density=pl.nnz / 1000**2))
    assert pl.tcb_per_rw_cv > un.tcb_per_rw_cv
    assert pl.deciles[-1][1] > pl.deciles[-2][1]


def test_identity_stats(identity16):
    s = compute_stats(identity16)
    assert (s.num_rw, s.total_tcbs, s.nnz) == (1, 2, 16)
    assert s.tcb_per_rw_avg == 2 and s.tcb_per_rw_cv == 0
    assert s.nnz_per_tcb_avg == 8 and s.nnz_per_tcb_cv == 0
    assert s.deciles == [(2, 2)] * 10


def test_empty_stats():
    s = compute_stats(CooMatrix(32, 32, [], []))
    assert s.total_tcbs == 0 and s.tcb_per_rw_avg == 0 and s.nnz_per_tcb_avg == 0
    assert compute_stats(CooMatrix(32, 32, [], []), include_empty=False).tcb_per_rw_avg == 0


def test_exclude_empty_windows():
    a = CooMatrix(32, 32, [0, 1], [0, 20])
    # the two entries compact into one TCB; the second window is empty
    assert compute_stats(a).tcb_per_rw_avg == 0.5
    assert compute_stats(a, include_empty=False).tcb_per_rw_avg == 1.0


def test_deciles_sorted_and_reorder_invariant(rng):
    from conftest import random_coo
    a = random_coo(rng, 400, 0.03)
    s = compute_stats(a)
    flat = [x for pair in s.deciles for x in pair]
    assert flat == sorted(flat)
    assert s.decile_size == 3
    counts = build_bsb(a).tcb_counts
    counts_re = reorder_row_windows(build_bsb(a)).tcb_counts[reorder_row_windows(build_bsb(a)).rw_order]
    assert sorted(counts.tolist()) == sorted(counts_re.tolist())


def test_output_formats(identity16):
    s = compute_stats(identity16)
    assert json.loads(s.to_json())["deciles"][0] == [2, 2]
    table = format_stats_table(s, "eye")
    assert table.splitlines()[1].startswith("eye")
    assert "2-2" in table
