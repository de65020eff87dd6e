import numpy as np
import pytest

from prefframe.frame import build_preference_frame
from prefframe.models import Partition, PfmModel, hpfm_matrix
from prefframe.sampling import (
    SampledGraph,
    chernoff_failure_bound,
    degree_concentration_check,
    degree_concentration_mc,
    read_edge_list,
    replicate_seed,
    sample_adjacency,
    write_edge_list,
)

from conftest import random_hpfm


def _raw_model(S, loops=False):
    # sampling accepts any probability matrix; bypass model validation
    f = build_preference_frame([[1.0]])
    return PfmModel(f, Partition.from_sizes([S.shape[0]]), S, "raw", allow_self_loops=loops)


def test_zero_and_one_matrices():
    g = sample_adjacency(_raw_model(np.zeros((5, 5))), 1)
    assert g.A.nnz == 0 and g.dhat_min == 0
    g = sample_adjacency(_raw_model(np.ones((5, 5))), 1)
    np.testing.assert_array_equal(g.dense(), 1 - np.eye(5))
    np.testing.assert_array_equal(g.degrees, 4)


def test_self_loop_counts_once():
    g = sample_adjacency(_raw_model(np.ones((3, 3)), loops=True), 0)
    np.testing.assert_array_equal(g.dense(), np.ones((3, 3)))
    np.testing.assert_array_equal(g.degrees, 3)


def test_symmetric_binary_deterministic():
    m = random_hpfm(np.random.default_rng(5), K=3, max_prob=0.6)
    a = sample_adjacency(m, 99)
    b = sample_adjacency(m, 99)
    A = a.dense()
    assert np.array_equal(A, A.T)
    assert set(np.unique(A)) <= {0.0, 1.0}
    assert np.array_equal(A, b.dense())
    np.testing.assert_array_equal(a.degrees, A.sum(1))
    assert a.model_digest == m.digest


def test_entrywise_means_monte_carlo():
    f = build_preference_frame([[0.7, 0.3], [0.3, 0.7]])
    m = hpfm_matrix(f, Partition.from_sizes([3, 3]), np.linspace(0.5, 1.0, 6), max_prob=0.8)
    seeds = 10_000
    total = np.zeros((6, 6))
    for s in range(seeds):
        total += sample_adjacency(m, s).dense()
    mean = total / seeds
    se = np.sqrt(m.S * (1 - m.S) / seeds)
    assert np.all(np.abs(mean - m.S) <= 4 * se + 1e-12)


def test_degree_means_converge():
    m = random_hpfm(np.random.default_rng(6), K=2, n_max=15, max_prob=0.7)
    seeds = 2000
    total = np.zeros(m.n)
    for s in range(seeds):
        total += sample_adjacency(m, s).degrees
    assert np.all(np.abs(total / seeds - m.degrees) <= 4 * np.sqrt(m.degrees / seeds))


def test_replicate_seed_stable_and_distinct():
    assert replicate_seed(1, 0) == replicate_seed(1, 0)
    seeds = {replicate_seed(1, i) for i in range(100)} | {replicate_seed(2, i) for i in range(100)}
    assert len(seeds) == 200


def test_concentration_deterministic_and_large_eps():
    S = np.zeros((4, 4))
    S[0, 1] = S[1, 0] = S[2, 3] = S[3, 2] = 1.0
    m = _raw_model(S)
    g = sample_adjacency(m, 3)
    rep = degree_concentration_check(m, g, 1.0)
    assert rep.max_deviation == 0.0
    assert chernoff_failure_bound(1e6, 10.0) == pytest.approx(0.0)
    out = degree_concentration_mc(random_hpfm(np.random.default_rng(1), K=2), [50.0], range(20))
    assert out[50.0]["fraction"].max() == 0.0


def test_edge_list_round_trip(tmp_path):
    m = random_hpfm(np.random.default_rng(8), K=3, max_prob=0.5)
    g = sample_adjacency(m, 17)
    path = tmp_path / "edges.csv"
    write_edge_list(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j"
    assert all(int(a) <= int(b) for a, b in (ln.split(",") for ln in lines[1:]))
    h = read_edge_list(path)
    assert h.seed == 17 and h.model_digest == m.digest and h.n == m.n
    np.testing.assert_array_equal(h.dense(), g.dense())


def test_from_adjacency_dense():
    g = SampledGraph.from_adjacency(np.array([[0, 1], [1, 0]]))
    assert g.degrees.tolist() == [1.0, 1.0]
