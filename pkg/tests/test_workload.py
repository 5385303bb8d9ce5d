import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnfabric.graphprep import CooMatrix
from gcnfabric.workload import (
    EmptyBatch,
    InvalidParams,
    ParseError,
    gen_synthetic,
    load_edge_list,
    parse_edge_list,
    sample_neighbors,
)


def test_load_undirected(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 2")
    coo = load_edge_list(p, undirected=True)
    assert coo.nnz == 4
    assert sorted((r, c) for r, c, _ in coo.entries()) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_load_empty(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("")
    coo = load_edge_list(p)
    assert coo.nnz == 0 and coo.shape == (0, 0)


def test_malformed_line():
    with pytest.raises(ParseError) as err:
        parse_edge_list("a b")
    assert err.value.line == 1
    with pytest.raises(ParseError) as err:
        parse_edge_list("0 1\n\n2 3 4 5")
    assert err.value.line == 3
    with pytest.raises(ParseError):
        parse_edge_list("0 -1")


def test_weights_and_comments():
    coo = parse_edge_list("# header\n0 1 2.5\n1 0   # default weight\n")
    assert sorted(coo.entries()) == [(0, 1, 2.5), (1, 0, 1.0)]


def test_duplicates_keep_first(caplog):
    with caplog.at_level(logging.WARNING):
        coo = parse_edge_list("0 1 1.0\n0 1 9.0\n")
    assert coo.entries() == [(0, 1, 1.0)]
    assert "duplicate" in caplog.text


def test_triangular_storage_mirrors():
    coo = parse_edge_list("0 1 2.0\n2 1 3.0\n1 1 4.0\n", triangular=True)
    dense = coo.to_dense()
    assert np.array_equal(dense, dense.T)
    assert dense[1, 2] == 3.0 and dense[1, 1] == 4.0 and coo.nnz == 5


def test_num_nodes_override():
    assert parse_edge_list("0 1", num_nodes=10).shape == (10, 10)
    with pytest.raises(ValueError):
        parse_edge_list("0 11", num_nodes=10)


# --- synthetic graphs -----------------------------------------------------------------------

def test_synthetic_examples():
    assert gen_synthetic("uniform", 16, 0, seed=1).nnz == 0
    g = gen_synthetic("uniform", 1024, 10000, seed=1)
    assert g.nnz == 10000
    assert len(set(zip(g.row.tolist(), g.col.tolist()))) == 10000
    assert not np.any(g.row == g.col)


def test_power_law_is_more_skewed():
    # max/mean degree compared at equal edge counts over several seeds
    for seed in range(5):
        u = gen_synthetic("uniform", 1024, 10000, seed)
        p = gen_synthetic("power-law", 1024, 10000, seed)
        deg_u = np.bincount(u.row, minlength=1024)
        deg_p = np.bincount(p.row, minlength=1024)
        assert deg_p.max() / deg_p.mean() > deg_u.max() / deg_u.mean()


def test_synthetic_deterministic():
    a = gen_synthetic("power-law", 500, 3000, seed=9)
    b = gen_synthetic("power-law", 500, 3000, seed=9)
    assert a.entries() == b.entries()


def test_synthetic_invalid():
    with pytest.raises(InvalidParams):
        gen_synthetic("uniform", 0, 0, 1)
    with pytest.raises(InvalidParams):
        gen_synthetic("uniform", 4, 13, 1)
    with pytest.raises(InvalidParams):
        gen_synthetic("lattice", 4, 2, 1)
    with pytest.raises(InvalidParams):
        gen_synthetic("power-law", 4, 2, 1, exponent=1.0)


def test_synthetic_complete_graph():
    g = gen_synthetic("uniform", 6, 30, seed=0)
    assert g.nnz == 30


# --- neighbour sampling ---------------------------------------------------------------------

def star(n):
    return CooMatrix(np.zeros(n - 1, np.int64), np.arange(1, n), np.ones(n - 1), n, n)


def test_fan_out_above_degree_takes_all():
    wb = sample_neighbors(star(6), [0], fan_outs=[10], seed=0)
    assert wb.adjs[0].nnz == 5
    assert sorted(wb.nodes[0][wb.adjs[0].col].tolist()) == [1, 2, 3, 4, 5]


def test_fan_out_caps_sample():
    wb = sample_neighbors(star(40), [0], fan_outs=[7], seed=3)
    assert wb.adjs[0].nnz == 7


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        sample_neighbors(star(5), [], fan_outs=[2], seed=0)
    with pytest.raises(InvalidParams):
        sample_neighbors(star(5), [0], fan_outs=[], seed=0)


def test_structural_bounds_at_full_scale():
    g = gen_synthetic("power-law", 30000, 300000, seed=2)
    wb = sample_neighbors(g, range(1024), fan_outs=[25, 10], seed=4)
    n = wb.adjs[1].n_cols
    n_bar = wb.adjs[0].n_cols
    assert wb.adjs[1].n_rows == 1024
    assert n <= 1024 * 10 + 1024
    assert n_bar <= n * 25 + n
    assert wb.adjs[0].n_rows == n


@given(st.integers(0, 2**31), st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_sampling_properties(seed, fans):
    g = gen_synthetic("uniform", 200, 1500, seed)
    rng = np.random.default_rng(seed)
    batch = rng.choice(200, 10, replace=False)
    wb = sample_neighbors(g, batch, fans, seed)
    dense = g.to_dense()
    assert np.array_equal(wb.batch, batch)
    assert len(wb.adjs) == len(fans)
    for k, adj in enumerate(wb.adjs):
        outs, ins = wb.nodes[k + 1], wb.nodes[k]
        assert adj.shape == (len(outs), len(ins))
        assert adj.n_rows <= adj.n_cols
        assert np.array_equal(ins[:len(outs)], outs)  # output nodes lead the inputs
        per_row = np.bincount(adj.row, minlength=adj.n_rows)
        fan = fans[k]
        degree = (dense[outs] != 0).sum(axis=1)
        assert np.array_equal(per_row, np.minimum(degree, fan))
        assert np.all(dense[outs[adj.row], ins[adj.col]] == adj.val)
    again = sample_neighbors(g, batch, fans, seed)
    assert all(a.entries() == b.entries() for a, b in zip(wb.adjs, again.adjs))


def test_layer_specs_figures():
    g = gen_synthetic("uniform", 300, 3000, seed=1)
    x = np.ones((300, 12))
    y = np.arange(300) % 5
    wb = sample_neighbors(g, range(16), [4, 3], seed=2, features=x, labels=y)
    s1, s2 = wb.layer_specs(hidden=32)
    assert (s1.d, s1.h, s2.d, s2.h, s2.c) == (12, 32, 32, 5, 5)
    assert s2.b == s1.b == 16 and s2.n == 16
    assert s1.n == s2.n_bar and s1.e == wb.adjs[0].nnz
    assert wb.features.shape == (s1.n_bar, 12)
