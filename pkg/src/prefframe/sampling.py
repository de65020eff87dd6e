"""Bernoulli realizations of a PFM and degree diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .models import PfmModel


def replicate_seed(master_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for replicate ``index`` of a run."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class SampledGraph:
    A: sp.csr_array
    degrees: np.ndarray
    seed: int | None = None
    model_digest: str | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def dhat_min(self) -> float:
        return float(self.degrees.min())

    @classmethod
    def from_adjacency(cls, A, seed=None, model_digest=None) -> "SampledGraph":
        A = sp.csr_array(A, dtype=np.float64)
        A.sum_duplicates()
        A.eliminate_zeros()
        return cls(A, np.asarray(A.sum(axis=1)).ravel(), seed, model_digest)

    def dense(self) -> np.ndarray:
        return self.A.toarray()


def sample_adjacency(model: PfmModel, seed: int) -> SampledGraph:
    """Draw ``A_ij ~ Bernoulli(S_ij)`` independently for ``i < j`` (and ``i = j``
    when self-loops are allowed), then mirror.

    Uniforms are consumed row by row over the upper triangle, so a given
    (model, seed) pair always yields the same graph.
    """
    S = model.S
    n = S.shape[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    offset = 0 if model.allow_self_loops else 1
    rows, cols = [], []
    for i in range(n - offset):
        start = i + offset
        u = rng.random(n - start)
        j = np.flatnonzero(u < S[i, start:]) + start
        rows.append(np.full(j.size, i, dtype=np.int64))
        cols.append(j)
    r = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    upper = r < c
    rr = np.concatenate([r, c[upper]])
    cc = np.concatenate([c, r[upper]])
    A = sp.coo_array((np.ones(rr.size), (rr, cc)), shape=(n, n)).tocsr()
    return SampledGraph.from_adjacency(A, seed=seed, model_digest=model.digest)


def chernoff_failure_bound(epsilon, d) -> np.ndarray:
    """Upper bound on ``P(|sqrt(dhat) - sqrt(d)| > epsilon)``."""
    d = np.asarray(d, dtype=float)
    return np.minimum(1.0, 2.0 * np.exp(-epsilon**2 / (2.0 + epsilon / np.sqrt(d))))


@dataclass(frozen=True)
class DegreeConcentration:
    epsilon: float
    deviation: np.ndarray  # |sqrt(dhat_i) - sqrt(d_i)|
    failure_bound: np.ndarray
    failed: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())


def degree_concentration_check(model: PfmModel, graph: SampledGraph, epsilon: float) -> DegreeConcentration:
    d = model.degrees
    dev = np.abs(np.sqrt(graph.degrees) - np.sqrt(d))
    return DegreeConcentration(float(epsilon), dev, chernoff_failure_bound(epsilon, d), dev > epsilon)


def degree_concentration_mc(model: PfmModel, epsilons, seeds) -> dict[float, dict]:
    """Empirical per-node failure fractions over many replicates.

    Returns, for each epsilon, the failure fraction per node, its Monte Carlo
    standard error and the Chernoff bound per node.
    """
    seeds = list(seeds)
    eps = [float(e) for e in epsilons]
    fails = {e: np.zeros(model.n) for e in eps}
    sd = np.sqrt(model.degrees)
    for s in seeds:
        g = sample_adjacency(model, s)
        dev = np.abs(np.sqrt(g.degrees) - sd)
        for e in eps:
            fails[e] += dev > e
    out = {}
    m = len(seeds)
    for e in eps:
        frac = fails[e] / m
        out[e] = {
            "fraction": frac,
            "stderr": np.sqrt(frac * (1 - frac) / m),
            "bound": chernoff_failure_bound(e, model.degrees),
        }
    return out


# --- edge-list I/O -------------------------------------------------------

def write_edge_list(graph: SampledGraph, path) -> None:
    """One ``i,j`` line per undirected edge with ``i <= j``, plus a JSON sidecar."""
    path = Path(path)
    U = sp.triu(graph.A, format="coo")
    order = np.lexsort((U.col, U.row))
    with open(path, "w") as fh:
        fh.write("i,j\n")
        for i, j in zip(U.row[order], U.col[order]):
            fh.write(f"{i},{j}\n")
    sidecar = {"seed": graph.seed, "n": graph.n, "model_hash": graph.model_digest}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_edge_list(path, n: int | None = None) -> SampledGraph:
    path = Path(path)
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    edges = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    n = n or meta.get("n") or (int(edges.max()) + 1 if edges.size else 0)
    r, c = (edges[:, 0], edges[:, 1]) if edges.size else (np.empty(0, int), np.empty(0, int))
    off = r != c
    rr = np.concatenate([r, c[off]])
    cc = np.concatenate([c, r[off]])
    A = sp.coo_array((np.ones(rr.size), (rr, cc)), shape=(n, n))
    return SampledGraph.from_adjacency(A, seed=meta.get("seed"), model_digest=meta.get("model_hash"))
