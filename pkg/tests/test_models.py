import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prefframe.errors import (
    ConfigError,
    EmptyCluster,
    InvalidProbability,
    InvalidSpec,
    ProbabilityOverflow,
    Singular,
    ZeroDegreeRow,
)
from prefframe.frame import build_preference_frame
from prefframe.models import (
    DegreeSpec,
    NodeWeights,
    Partition,
    general_pfm,
    hpfm_expected_degrees,
    hpfm_matrix,
    load_matrix_csv,
    model_from_config,
    pfm_from_degrees,
    save_matrix_csv,
    sbm_model,
    sbm_pq_frame,
    verify_block_stochastic,
)

from conftest import random_frame, random_general_pfm, random_hpfm


def test_partition_validation():
    with pytest.raises(EmptyCluster):
        Partition(np.array([0, 0, 2]), 3)
    with pytest.raises(EmptyCluster):
        Partition.from_sizes([3, 0])
    p = Partition.from_sizes([2, 3])
    assert p.n == 5 and p.sizes.tolist() == [2, 3]
    assert p.indicator().sum(0).tolist() == [2, 3]


def test_node_weights_positive():
    with pytest.raises(InvalidSpec):
        NodeWeights([1.0, 0.0])


def test_single_community_hpfm():
    f = build_preference_frame([[1.0]])
    m = hpfm_matrix(f, Partition.from_sizes([2]), [0.3, 0.5])
    np.testing.assert_allclose(m.S, [[0.09, 0.15], [0.15, 0.25]], atol=1e-15)


def test_hpfm_overflow_reports_max():
    f = build_preference_frame([[0.8, 0.2], [0.2, 0.8]])
    with pytest.raises(ProbabilityOverflow) as exc:
        hpfm_matrix(f, Partition.from_sizes([2, 2]), [3.0, 3.0, 3.0, 3.0])
    assert exc.value.max_value == pytest.approx(0.8 * 9 / 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hpfm_properties(seed):
    rng = np.random.default_rng(seed)
    m = random_hpfm(rng)
    assert np.array_equal(m.S, m.S.T)
    assert m.S.max() <= 1.0 and m.S.min() >= 0.0
    R_hat, res = verify_block_stochastic(m.S, m.partition)
    assert res <= 1e-10
    np.testing.assert_allclose(R_hat, m.frame.R, atol=1e-10)
    assert m.frame is m.nominal_frame
    # row-summing oracle against the closed form for degrees
    np.testing.assert_allclose(m.S.sum(1), hpfm_expected_degrees(m.frame, m.partition, m.weights),
                               rtol=1e-10)
    # aligned weights make degrees globally proportional to weights
    ratio = m.degrees / m.weights
    assert np.ptp(ratio) <= 1e-10 * ratio.max()


def test_unaligned_hpfm_realizes_other_frame(small_frame):
    rng = np.random.default_rng(3)
    part = Partition.from_sizes([10, 20, 30])
    w = rng.uniform(0.5, 1.0, part.n)
    m = hpfm_matrix(small_frame, part, w, align_weights=False, max_prob=0.5)
    R_hat, res = verify_block_stochastic(m.S, part)
    assert res <= 1e-10
    assert m.frame_deviation() > 1e-3
    np.testing.assert_allclose(m.frame.R, R_hat, atol=1e-12)


def test_pfm_uniform_example():
    f = build_preference_frame([[0.8, 0.2], [0.2, 0.8]])
    part = Partition.from_sizes([4, 4])
    m = pfm_from_degrees(f, part, DegreeSpec.uniform(part, 16.0))
    np.testing.assert_allclose(m.degrees, 2.0, atol=1e-14)
    same = part.labels[:, None] == part.labels[None, :]
    np.testing.assert_allclose(m.S[same], 0.4, atol=1e-15)
    np.testing.assert_allclose(m.S[~same], 0.1, atol=1e-15)


def test_pfm_nonuniform_row_sums(small_frame):
    part = Partition.from_sizes([4, 3, 5])
    pis = (np.array([0.4, 0.3, 0.2, 0.1]), np.full(3, 1 / 3), np.full(5, 0.2))
    d_tot = 3.0
    m = pfm_from_degrees(small_frame, part, DegreeSpec(pis, d_tot))
    expected = np.concatenate([d_tot * small_frame.rho[k] * pis[k] for k in range(3)])
    np.testing.assert_allclose(m.S.sum(1), expected, atol=1e-12 * d_tot)
    assert np.array_equal(m.S, m.S.T)


def test_pfm_stationarity(small_frame):
    rng = np.random.default_rng(0)
    part = Partition.from_sizes([6, 7, 8])
    pis = tuple(rng.dirichlet(np.ones(s)) for s in part.sizes)
    m = pfm_from_degrees(small_frame, part, DegreeSpec(pis, 2.0))
    pi = np.concatenate([small_frame.rho[k] * pis[k] for k in range(3)])
    np.testing.assert_allclose(pi @ m.transition, pi, atol=1e-12)


def test_degree_spec_validation():
    with pytest.raises(InvalidSpec):
        DegreeSpec((np.array([0.5, 0.6]),), 1.0)


def test_general_pfm_block_stochastic():
    rng = np.random.default_rng(9)
    for _ in range(10):
        m = random_general_pfm(rng)
        R_hat, res = verify_block_stochastic(m.S, m.partition)
        assert res <= 1e-9
        np.testing.assert_allclose(R_hat, m.frame.R, atol=1e-9)
        assert np.array_equal(m.S, m.S.T)
        pi = m.weights * m.frame.rho[m.partition.labels]
        np.testing.assert_allclose(m.degrees / m.d_tot, pi, atol=1e-10)


def test_sbm_pq_closed_form():
    f = sbm_pq_frame(0.5, 0.1, [10, 10])
    np.testing.assert_allclose(f.R, [[4.5 / 5.5, 1 / 5.5], [1 / 5.5, 4.5 / 5.5]], atol=1e-15)
    part = Partition.from_sizes([10, 10])
    m = sbm_model([[0.5, 0.1], [0.1, 0.5]], part)
    np.testing.assert_allclose(m.degrees, 5.5, atol=1e-13)
    np.testing.assert_allclose(m.frame.R, f.R, atol=1e-13)
    _, res = verify_block_stochastic(m.S, part)
    assert res <= 1e-12


def test_sbm_pq_equal_is_singular():
    with pytest.raises(Singular):
        sbm_pq_frame(0.3, 0.3, [5, 5, 5], allow_self_loops=True)


def test_sbm_invalid_probability():
    with pytest.raises(InvalidProbability):
        sbm_model([[1.5, 0.1], [0.1, 0.5]], Partition.from_sizes([3, 3]))


def test_block_residual_detects_perturbation():
    rng = np.random.default_rng(4)
    m = random_hpfm(rng, K=3, max_prob=0.5)
    S = m.S.copy()
    i = 0
    j = int(np.flatnonzero(m.partition.labels == 1)[0])
    d, r = m.degrees[i], m.frame.R[0, 1]
    S[i, j] += 0.1
    _, res = verify_block_stochastic(S, m.partition)
    # the perturbed row's block sum moves by 0.1 (1 - r) / (d + 0.1); the
    # community mean absorbs 1/n_0 of that shift
    shift = 0.1 * (1 - r) / (d + 0.1)
    assert res == pytest.approx(shift * (1 - 1 / m.partition.sizes[0]), rel=1e-9)


def test_zero_degree_row():
    with pytest.raises(ZeroDegreeRow):
        verify_block_stochastic(np.zeros((2, 2)), Partition.from_sizes([1, 1]))


def test_model_from_config_kinds():
    R = [[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7]]
    base = {"frame": {"R": R}, "sizes": [5, 6, 7], "seed": 1}
    m = model_from_config({**base, "type": "hpfm", "max_prob": 0.8})
    assert m.kind == "hpfm" and m.S.max() == pytest.approx(0.8)
    m = model_from_config({**base, "type": "pfm", "d_tot": 10.0})
    assert m.d_tot == pytest.approx(10.0)
    m = model_from_config({**base, "type": "general_pfm", "d_tot": 10.0, "mixing": 0.3,
                           "degree_spec": {"dist": "lognormal", "sigma": 0.3}})
    assert m.kind == "general_pfm"
    m = model_from_config({"type": "sbm_pq", "p": 0.5, "q": 0.1, "sizes": [4, 4]})
    assert m.kind == "sbm"
    with pytest.raises(ConfigError):
        model_from_config({"type": "hpfm"})
    with pytest.raises(ConfigError):
        model_from_config({**base, "type": "nonsense"})


def test_matrix_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    m = random_hpfm(rng, K=2, n_max=8)
    save_matrix_csv(tmp_path / "S.csv", m.S, m.K)
    S, K = load_matrix_csv(tmp_path / "S.csv")
    assert K == 2
    np.testing.assert_array_equal(S, m.S)


def test_sec42_instance_degree_band():
    from prefframe.harness import sec42_config
    m = model_from_config(sec42_config(seed=0)["model"])
    assert 60 <= m.d_min <= 95
    assert m.S.max() == pytest.approx(1.0)
