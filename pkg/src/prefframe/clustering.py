"""K-means on embedding rows, mis-clustering rate and cluster separation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateInput, SizeMismatch
from .frame import PreferenceFrame
from .models import Partition, PfmModel


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    history: tuple[float, ...] = field(default=())
    restart: int = 0

    @property
    def K(self) -> int:
        return self.centers.shape[0]


def _sq_dists(X, C):
    d = np.sum(X**2, 1)[:, None] + np.sum(C**2, 1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _objective(X, labels, centers):
    return float(np.sum((X - centers[labels]) ** 2))


def _kmeanspp(X, K, rng):
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            i = rng.integers(n)
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centers[k] = X[i]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))
    return centers


def _lloyd(X, centers, max_iter, tol):
    K = centers.shape[0]
    history = []
    labels = None
    for _ in range(max_iter):
        D = _sq_dists(X, centers)
        new = np.argmin(D, axis=1)  # ties go to the lowest index
        counts = np.bincount(new, minlength=K)
        for k in np.flatnonzero(counts == 0):
            # move an empty centre onto the point farthest from its own centre
            far = int(np.argmax(D[np.arange(X.shape[0]), new]))
            new[far] = k
            D[far] = 0.0
            counts = np.bincount(new, minlength=K)
        centers = np.zeros_like(centers)
        np.add.at(centers, new, X)
        centers /= counts[:, None]
        obj = _objective(X, new, centers)
        history.append(obj)
        if labels is not None and np.array_equal(new, labels):
            break
        if len(history) > 1 and history[-2] - obj <= tol * max(history[-2], 1e-300):
            labels = new
            break
        labels = new
    return labels, centers, history


def kmeans(points, K: int, restarts: int = 50, seed: int = 0, max_iter: int = 300,
           tol: float = 0.0) -> Clustering:
    """Best of ``restarts`` runs of Lloyd's algorithm with k-means++ seeding.

    Restart ``r`` uses a generator spawned from ``seed``; the returned
    clustering has the lowest objective, ties broken by restart index.

    Raises
    ------
    DegenerateInput
        If the points have fewer than ``K`` distinct rows.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] < K or restarts < 1:
        raise DegenerateInput("need at least K points and one restart")
    if np.unique(X, axis=0).shape[0] < K:
        raise DegenerateInput(f"fewer than {K} distinct points")
    best = None
    children = np.random.SeedSequence(seed).spawn(restarts)
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        labels, centers, hist = _lloyd(X, _kmeanspp(X, K, rng), max_iter, tol)
        obj = hist[-1]
        if best is None or obj < best.objective:
            best = Clustering(labels, centers, obj, tuple(hist), r)
    return best


def confusion_matrix(found, truth, K: int | None = None) -> np.ndarray:
    """``N[a, b]`` = number of nodes with found label ``a`` and true label ``b``."""
    f = np.asarray(getattr(found, "labels", found), dtype=np.int64)
    t = np.asarray(getattr(truth, "labels", truth), dtype=np.int64)
    if f.shape != t.shape:
        raise SizeMismatch(f"{f.size} vs {t.size} labels")
    K = K or int(max(f.max(initial=0), t.max(initial=0)) + 1)
    N = np.zeros((K, K), dtype=np.int64)
    np.add.at(N, (f, t), 1)
    return N


def misclustering_rate(found, truth, method: str = "auto") -> float:
    """``1 - max_phi sum_k |C_phi(k) ∩ Ĉ_k| / n`` over bijections ``phi``.

    ``method="brute"`` enumerates all permutations; ``"assignment"`` solves
    the assignment problem on the overlap matrix. ``"auto"`` uses brute force
    for ``K <= 8``.
    """
    N = confusion_matrix(found, truth)
    n = int(N.sum())
    if n == 0:
        raise SizeMismatch("empty labelings")
    K = N.shape[0]
    if method == "auto":
        method = "brute" if K <= 8 else "assignment"
    if method == "brute":
        perms = np.array(list(itertools.permutations(range(K))), dtype=np.intp)
        best = int(N[np.arange(K), perms].sum(axis=1).max())
    elif method == "assignment":
        r, c = linear_sum_assignment(N, maximize=True)
        best = int(N[r, c].sum())
    else:
        raise ValueError(f"unknown method {method!r}")
    return 1.0 - best / n


def save_labels_csv(path, labels) -> None:
    labels = np.asarray(labels)
    with open(path, "w") as fh:
        fh.write("node,label\n")
        for i, l in enumerate(labels):
            fh.write(f"{i},{int(l)}\n")


def save_confusion_csv(path, N) -> None:
    np.savetxt(path, np.asarray(N), delimiter=",", fmt="%d")


# --- separation ----------------------------------------------------------

@dataclass(frozen=True)
class SeparationReport:
    """Cluster separation constants.

    ``c_*`` use ``d_{C_k} / (d_tot rho_k)``; ``c_stmt_*`` use ``n rho_k`` in
    the denominator; ``c_col_*`` use ``n_k / (n rho_k)``. ``pairs`` maps
    ``(k, m)`` to ``g_km`` for the main variant.
    """

    c_max: float
    c_min: float
    g_max: float
    pairs: dict
    c_stmt_max: float
    c_stmt_min: float
    g_stmt: float
    c_col_max: float
    c_col_min: float
    g_col: float
    min_observed_center_distance2: float | None = None
    d_tot: float = 1.0

    @property
    def positive(self) -> bool:
        return self.g_max > 0

    def to_dict(self) -> dict:
        return {
            "c_max": self.c_max, "c_min": self.c_min, "g_max": self.g_max,
            "pairs": {f"{k},{m}": v for (k, m), v in self.pairs.items()},
            "c_stmt_max": self.c_stmt_max, "c_stmt_min": self.c_stmt_min, "g_stmt": self.g_stmt,
            "c_col_max": self.c_col_max, "c_col_min": self.c_col_min, "g_col": self.g_col,
            "min_observed_center_distance2": self.min_observed_center_distance2,
            "d_tot": self.d_tot,
        }


def pair_separation(rho, c_max: float, c_min: float) -> dict:
    """``g_km = (1/c_max)(1/rho_k + 1/rho_m) - (1/c_min - 1/c_max) / sqrt(rho_k rho_m)``."""
    rho = np.asarray(rho, dtype=float)
    out = {}
    for k, m in itertools.combinations(range(rho.size), 2):
        out[(k, m)] = float((1 / rho[k] + 1 / rho[m]) / c_max
                            - (1 / c_min - 1 / c_max) / np.sqrt(rho[k] * rho[m]))
    return out


def _gmin(pairs):
    return min(pairs.values()) if pairs else float("inf")


def separation_gmax(frame: PreferenceFrame, model: PfmModel, embedding=None) -> SeparationReport:
    """Separation constant ``g_max`` (minimum of ``g_km`` over pairs).

    If ``embedding`` (a :class:`~prefframe.spectral.SpectralEmbedding` of the
    expected model) is given, also reports the smallest squared distance
    between rows of ``V`` lying in different communities.
    """
    rho = frame.rho
    part = model.partition
    vol = model.cluster_volumes
    n = model.n
    c = vol / (model.d_tot * rho)
    c_stmt = vol / (n * rho)
    c_col = part.sizes / (n * rho)
    pairs = pair_separation(rho, c.max(), c.min())
    g_stmt = _gmin(pair_separation(rho, c_stmt.max(), c_stmt.min()))
    g_col = _gmin(pair_separation(rho, c_col.max(), c_col.min()))
    observed = None
    if embedding is not None:
        observed = min_cross_distance2(embedding.V, part)
    return SeparationReport(
        float(c.max()), float(c.min()), _gmin(pairs), pairs,
        float(c_stmt.max()), float(c_stmt.min()), g_stmt,
        float(c_col.max()), float(c_col.min()), g_col,
        observed, model.d_tot,
    )


def min_cross_distance2(V, partition: Partition) -> float:
    """Smallest ``||V_i - V_j||^2`` over node pairs in different communities."""
    V = np.asarray(V, dtype=float)
    best = np.inf
    mem = partition.members
    for k, m in itertools.combinations(range(partition.K), 2):
        A, B = V[mem[k]], V[mem[m]]
        for s in range(0, A.shape[0], 1024):
            best = min(best, float(_sq_dists(A[s:s + 1024], B).min()))
    return best
