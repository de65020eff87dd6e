import numpy as np
import pytest

from prefframe.frame import FrameOptions, build_preference_frame
from prefframe.models import DegreeSpec, Partition, general_pfm, hpfm_matrix

ACCEPTANCE_LINES = []


def record(criterion, passed, detail=""):
    line = f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_frame(rng, K):
    """Reversible frame from a random symmetric flow matrix with a heavy diagonal."""
    for _ in range(100):
        F = rng.uniform(0.01, 1.0, (K, K))
        F = F + F.T + np.diag(rng.uniform(0.5, 3.0, K)) * K
        R = F / F.sum(axis=1, keepdims=True)
        try:
            return build_preference_frame(R, FrameOptions(row_normalize=False))
        except Exception:
            continue
    raise RuntimeError("could not draw a frame")


def random_hpfm(rng, K=None, n_max=40, max_prob=0.9):
    K = K or int(rng.integers(2, 6))
    frame = random_frame(rng, K)
    part = Partition.from_sizes(rng.integers(3, n_max, K))
    w = rng.uniform(0.5, 1.0, part.n)
    return hpfm_matrix(frame, part, w, max_prob=max_prob)


def random_general_pfm(rng, K=None, n_max=40, mixing=None, max_prob=0.9):
    K = K or int(rng.integers(2, 6))
    frame = random_frame(rng, K)
    part = Partition.from_sizes(rng.integers(3, n_max, K))
    pis = tuple(rng.dirichlet(np.full(s, 2.0)) for s in part.sizes)
    mix = float(rng.uniform(0.1, 0.9)) if mixing is None else mixing
    seed = int(rng.integers(2**31))
    unit = general_pfm(frame, part, DegreeSpec(pis, 1.0), mixing=mix, seed=seed)
    return general_pfm(frame, part, DegreeSpec(pis, max_prob / unit.S.max()), mixing=mix, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_frame():
    R = np.array([[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7]])
    return build_preference_frame(R)
