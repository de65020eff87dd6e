"""Edge-probability matrices for graphs that admit a preference frame.

All matrices are dense. Symmetry of ``S`` is enforced by building the
upper block triangle once and mirroring it.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyCluster,
    InvalidProbability,
    InvalidSpec,
    ModelError,
    ProbabilityOverflow,
    ZeroDegreeRow,
)
from .frame import FrameOptions, PreferenceFrame, build_preference_frame

log = logging.getLogger(__name__)

TOL_BLOCK = 1e-9


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of ``n`` nodes to ``K`` communities labelled ``0..K-1``."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise ModelError("labels must be a vector")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise ModelError(f"labels must lie in [0, {self.K})")
        sizes = np.bincount(labels, minlength=self.K)
        if np.any(sizes == 0):
            raise EmptyCluster(f"empty communities: {np.flatnonzero(sizes == 0).tolist()}")

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "Partition":
        sizes = [int(s) for s in sizes]
        if any(s <= 0 for s in sizes):
            raise EmptyCluster(f"community sizes must be positive, got {sizes}")
        return cls(np.repeat(np.arange(len(sizes)), sizes), len(sizes))

    @property
    def n(self) -> int:
        return self.labels.size

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    @cached_property
    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == k) for k in range(self.K)]

    def indicator(self) -> np.ndarray:
        """n x K 0/1 membership matrix."""
        Z = np.zeros((self.n, self.K))
        Z[np.arange(self.n), self.labels] = 1.0
        return Z


@dataclass(frozen=True, eq=False)
class NodeWeights:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise InvalidSpec("node weights must be positive and finite")

    def cluster_sums(self, partition: Partition) -> np.ndarray:
        return np.bincount(partition.labels, weights=self.values, minlength=partition.K)

    @classmethod
    def uniform(cls, n: int, low: float, high: float, seed: int) -> "NodeWeights":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(low, high, size=n))


@dataclass(frozen=True, eq=False)
class DegreeSpec:
    """Per-community degree distributions ``pi_{C_k}`` and total volume ``d_tot``."""

    pis: tuple[np.ndarray, ...]
    d_tot: float

    def __post_init__(self):
        pis = tuple(np.asarray(p, dtype=float) for p in self.pis)
        object.__setattr__(self, "pis", pis)
        for k, p in enumerate(pis):
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise InvalidSpec(f"pi for community {k} is not a probability vector")
        if not self.d_tot > 0:
            raise InvalidSpec("d_tot must be positive")

    def node_vector(self, partition: Partition) -> np.ndarray:
        if len(self.pis) != partition.K:
            raise InvalidSpec("one distribution per community is required")
        out = np.empty(partition.n)
        for k, idx in enumerate(partition.members):
            if self.pis[k].size != idx.size:
                raise InvalidSpec(f"pi for community {k} has wrong length")
            out[idx] = self.pis[k]
        return out

    @classmethod
    def uniform(cls, partition: Partition, d_tot: float) -> "DegreeSpec":
        return cls(tuple(np.full(s, 1.0 / s) for s in partition.sizes), d_tot)


@dataclass(frozen=True, eq=False)
class PfmModel:
    """Expected graph ``S`` together with the frame it admits.

    ``frame`` is the frame realized by ``S``; ``nominal_frame`` is the one the
    model was requested with. They differ only when the construction could
    not honour the request exactly (unaligned HPFM weights, irreversible
    input frames).
    """

    frame: PreferenceFrame
    partition: Partition
    S: np.ndarray
    kind: str
    allow_self_loops: bool = True
    nominal_frame: PreferenceFrame | None = None
    block_residual: float = 0.0
    weights: np.ndarray | None = None
    notes: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def K(self) -> int:
        return self.partition.K

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.S.sum(axis=1)

    @property
    def d_tot(self) -> float:
        return float(self.degrees.sum())

    @cached_property
    def cluster_volumes(self) -> np.ndarray:
        return np.bincount(self.partition.labels, weights=self.degrees, minlength=self.K)

    @property
    def d_min(self) -> float:
        return float(self.degrees.min())

    @property
    def d_max_scaled(self) -> float:
        """``max_ij n S_ij``."""
        return float(self.n * self.S.max())

    @property
    def transition(self) -> np.ndarray:
        return self.S / self.degrees[:, None]

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.S).tobytes()).hexdigest()[:16]

    def frame_deviation(self) -> float:
        ref = self.nominal_frame or self.frame
        return float(np.abs(ref.R - self.frame.R).max())


def _symmetric_from_upper(S: np.ndarray, partition: Partition) -> np.ndarray:
    # order nodes so that block-upper entries sit in the matrix upper triangle
    order = np.argsort(partition.labels, kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    T = S[np.ix_(order, order)]
    T = np.triu(T) + np.triu(T, 1).T
    return T[np.ix_(inv, inv)]


def verify_block_stochastic(S, partition: Partition) -> tuple[np.ndarray, float]:
    """Block sums of ``P = D^{-1} S``.

    Returns ``R_hat`` (community means of the block row sums) and the largest
    deviation of any node's block sum from its community mean.
    """
    S = np.asarray(S, dtype=float)
    d = S.sum(axis=1)
    if np.any(d <= 0):
        raise ZeroDegreeRow(f"rows with zero sum: {np.flatnonzero(d <= 0)[:10].tolist()}")
    Z = partition.indicator()
    block = (S @ Z) / d[:, None]  # n x K: sum_{j in C_m} P_ij
    counts = partition.sizes.astype(float)
    R_hat = (Z.T @ block) / counts[:, None]
    residual = float(np.abs(block - R_hat[partition.labels]).max())
    return R_hat, residual


def _finalize(S, partition, frame, kind, allow_self_loops, tol_block, weights=None, notes=()):
    if not allow_self_loops:
        np.fill_diagonal(S, 0.0)
    smax = float(S.max())
    if smax > 1.0:
        raise ProbabilityOverflow(smax)
    if np.any(S < 0):
        raise InvalidProbability("negative edge probability")
    R_hat, residual = verify_block_stochastic(S, partition)
    notes = list(notes)
    if residual > tol_block:
        log.warning("%s model is block-stochastic only up to %.3g", kind, residual)
        notes.append(f"block residual {residual:.3g}")
    realized = frame
    if np.abs(R_hat - frame.R).max() > tol_block:
        opts = FrameOptions(row_normalize=True, tol_stoch_raw=1e-6, on_irreversible="symmetrize")
        realized = build_preference_frame(R_hat, opts)
        dev = float(np.abs(R_hat - frame.R).max())
        log.warning("%s model realizes a frame differing from the requested one by %.3g", kind, dev)
        notes.append(f"realized frame differs from requested by {dev:.3g}")
    return PfmModel(
        frame=realized,
        partition=partition,
        S=S,
        kind=kind,
        allow_self_loops=allow_self_loops,
        nominal_frame=frame,
        block_residual=residual,
        weights=weights,
        notes=tuple(notes),
    )


def hpfm_matrix(
    frame: PreferenceFrame,
    partition: Partition,
    weights: NodeWeights | np.ndarray,
    *,
    align_weights: bool = True,
    d_tot: float | None = None,
    max_prob: float | None = None,
    allow_self_loops: bool = True,
    tol_block: float = TOL_BLOCK,
) -> PfmModel:
    """Homogeneous PFM: ``S_ij = R_lm w_i w_j / rho_m`` for ``i in C_l, j in C_m``.

    Parameters
    ----------
    align_weights
        Rescale weights per community so that ``w_{C_l}`` is proportional to
        ``rho_l`` (total weight preserved). This is the condition under which
        ``S`` admits ``frame`` exactly; without it the realized frame differs.
    d_tot, max_prob
        Optional global scale: fix the total expected degree, or the largest
        edge probability. At most one may be given.
    """
    if partition.K != frame.K:
        raise ModelError("partition and frame disagree on K")
    if d_tot is not None and max_prob is not None:
        raise ModelError("give at most one of d_tot and max_prob")
    w = weights.values if isinstance(weights, NodeWeights) else NodeWeights(weights).values
    if w.size != partition.n:
        raise ModelError("one weight per node is required")
    lab = partition.labels
    if align_weights:
        wC = np.bincount(lab, weights=w, minlength=partition.K)
        w = w * (frame.rho * w.sum() / wC)[lab]
    T = frame.R / frame.rho[None, :]
    S = T[np.ix_(lab, lab)] * np.outer(w, w)
    S = _symmetric_from_upper(S, partition)
    scale = 1.0
    if d_tot is not None:
        scale = d_tot / S.sum()
    elif max_prob is not None:
        scale = max_prob / S.max()
    if scale != 1.0:
        S *= scale
        w = w * np.sqrt(scale)  # keep S_ij = R_lm w_i w_j / rho_m for the stored weights
    return _finalize(S, partition, frame, "hpfm", allow_self_loops, tol_block, weights=w)


def hpfm_expected_degrees(frame: PreferenceFrame, partition: Partition, w) -> np.ndarray:
    """Closed-form degrees ``d_i = w_i sum_l R_kl w_{C_l} / rho_l`` for ``i in C_k``."""
    w = np.asarray(w, dtype=float)
    wC = np.bincount(partition.labels, weights=w, minlength=partition.K)
    per_cluster = frame.R @ (wC / frame.rho)
    return w * per_cluster[partition.labels]


def pfm_from_degrees(
    frame: PreferenceFrame,
    partition: Partition,
    spec: DegreeSpec,
    *,
    allow_self_loops: bool = True,
    tol_block: float = TOL_BLOCK,
) -> PfmModel:
    """Canonical PFM with prescribed degrees ``d_i = d_tot rho_k pi_{C_k,i}``.

    Uses ``P_ij = R_kl pi_{C_l,j}``, i.e. ``S = D P``.
    """
    return general_pfm(frame, partition, spec, mixing=0.0,
                       allow_self_loops=allow_self_loops, tol_block=tol_block)


def _sinkhorn(G, a, b, symmetric=False, tol=1e-15, max_iter=20000):
    # scale positive G to a coupling with row sums a and column sums b
    if symmetric:
        x = np.sqrt(a / G.sum(axis=1))
        for _ in range(max_iter):
            x = np.sqrt(x * a / (G @ x))
            Q = x[:, None] * G * x[None, :]
            if np.abs(Q.sum(axis=1) - a).max() < tol:
                break
        return 0.5 * (Q + Q.T)
    u = np.ones_like(a)
    v = np.ones_like(b)
    for _ in range(max_iter):
        u = a / (G @ v)
        v = b / (G.T @ u)
        Q = u[:, None] * G * v[None, :]
        if np.abs(Q.sum(axis=1) - a).max() < tol:
            break
    return Q


def general_pfm(
    frame: PreferenceFrame,
    partition: Partition,
    spec: DegreeSpec,
    *,
    mixing: float = 0.5,
    seed: int = 0,
    allow_self_loops: bool = True,
    tol_block: float = TOL_BLOCK,
) -> PfmModel:
    """PFM whose blocks are not rank one.

    Block ``(k, l)`` is ``d_tot rho_k R_kl Q_kl`` where ``Q_kl`` couples
    ``pi_{C_k}`` with ``pi_{C_l}``: ``(1 - mixing)`` times the product
    coupling plus ``mixing`` times a random coupling. ``mixing=0`` is the
    canonical rank-one construction.
    """
    if not 0.0 <= mixing <= 1.0:
        raise InvalidSpec("mixing must lie in [0, 1]")
    if partition.K != frame.K:
        raise ModelError("partition and frame disagree on K")
    pi = spec.node_vector(partition)
    rng = np.random.default_rng(seed)
    n = partition.n
    S = np.zeros((n, n))
    members = partition.members
    flow = spec.d_tot * frame.rho[:, None] * frame.R
    for k in range(partition.K):
        for l in range(k, partition.K):
            a, b = spec.pis[k], spec.pis[l]
            Q = np.outer(a, b)
            if mixing > 0:
                G = rng.uniform(0.05, 1.0, size=(a.size, b.size))
                if k == l:
                    G = 0.5 * (G + G.T)
                Q = (1 - mixing) * Q + mixing * _sinkhorn(G, a, b, symmetric=(k == l))
            S[np.ix_(members[k], members[l])] = flow[k, l] * Q
    S = _symmetric_from_upper(S, partition)
    kind = "pfm" if mixing == 0 else "general_pfm"
    return _finalize(S, partition, frame, kind, allow_self_loops, tol_block, weights=pi)


def sbm_pq_frame(p: float, q: float, sizes: Sequence[int], allow_self_loops: bool = False,
                 options: FrameOptions | None = None) -> PreferenceFrame:
    """Closed-form frame of SBM(p, q)."""
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise InvalidProbability("p and q must lie in [0, 1]")
    sizes = np.asarray(sizes, dtype=float)
    n = sizes.sum()
    own = sizes if allow_self_loops else sizes - 1
    d = p * own + q * (n - sizes)
    R = q * sizes[None, :] / d[:, None]
    np.fill_diagonal(R, p * own / d)
    return build_preference_frame(R, options or FrameOptions(row_normalize=False, tol_stoch=1e-12))


def sbm_model(B, partition: Partition, *, allow_self_loops: bool = False,
              options: FrameOptions | None = None, tol_block: float = TOL_BLOCK) -> PfmModel:
    """SBM with connectivity matrix ``B``: ``S_ij = B_kl`` for ``i in C_k, j in C_l``."""
    B = np.asarray(B, dtype=float)
    if B.shape != (partition.K, partition.K):
        raise ModelError("B must be K x K")
    if np.any(B < 0) or np.any(B > 1):
        raise InvalidProbability("B entries must lie in [0, 1]")
    if not np.array_equal(B, B.T):
        raise ModelError("B must be symmetric for undirected sampling")
    S = B[np.ix_(partition.labels, partition.labels)].copy()
    if not allow_self_loops:
        np.fill_diagonal(S, 0.0)
    R_hat, _ = verify_block_stochastic(S, partition)
    frame = build_preference_frame(R_hat, options or FrameOptions(tol_stoch_raw=1e-9))
    return _finalize(S, partition, frame, "sbm", allow_self_loops, tol_block)


# --- configuration -------------------------------------------------------

def _frame_from_config(cfg: dict) -> PreferenceFrame:
    opts = FrameOptions(
        row_normalize=bool(cfg.get("row_normalize", True)),
        on_irreversible=cfg.get("on_irreversible", "error"),
    )
    return build_preference_frame(cfg["R"], opts)


def _weights_from_config(cfg: dict, n: int, seed: int) -> NodeWeights:
    if "values" in cfg:
        return NodeWeights(cfg["values"])
    dist = cfg.get("dist", "uniform")
    if dist == "uniform":
        return NodeWeights.uniform(n, float(cfg.get("low", 0.5)), float(cfg.get("high", 1.0)), seed)
    rng = np.random.default_rng(seed)
    if dist == "pareto":
        # heavy tailed propensities, shifted to start at `low`
        return NodeWeights(float(cfg.get("low", 1.0)) * (1.0 + rng.pareto(float(cfg.get("shape", 2.5)), size=n)))
    if dist == "lognormal":
        return NodeWeights(rng.lognormal(float(cfg.get("mean", 0.0)), float(cfg.get("sigma", 1.0)), size=n))
    raise ConfigError(f"unknown weight distribution {dist!r}")


def model_from_config(cfg: dict) -> PfmModel:
    """Build a model from the JSON-style configuration dictionary."""
    try:
        kind = cfg["type"]
        seed = int(cfg.get("seed", 0))
        loops = cfg.get("allow_self_loops")
        if kind == "sbm_pq":
            sizes = cfg["sizes"]
            part = Partition.from_sizes(sizes)
            p, q = float(cfg["p"]), float(cfg["q"])
            B = np.full((len(sizes), len(sizes)), q)
            np.fill_diagonal(B, p)
            return sbm_model(B, part, allow_self_loops=bool(loops) if loops is not None else False)
        if kind == "sbm":
            part = Partition.from_sizes(cfg["sizes"])
            return sbm_model(cfg["B"], part, allow_self_loops=bool(loops) if loops is not None else False)
        frame = _frame_from_config(cfg["frame"])
        part = Partition.from_sizes(cfg["sizes"])
        loops = True if loops is None else bool(loops)
        if kind == "hpfm":
            w = _weights_from_config(cfg.get("weights", {}), part.n, seed)
            return hpfm_matrix(
                frame, part, w,
                align_weights=bool(cfg.get("align_weights", True)),
                d_tot=cfg.get("d_tot"),
                max_prob=cfg.get("max_prob"),
                allow_self_loops=loops,
            )
        if kind in ("pfm", "general_pfm"):
            ds = cfg.get("degree_spec")
            if ds is None or "uniform" == ds:
                spec = DegreeSpec.uniform(part, float(cfg["d_tot"]))
            elif "pis" in ds:
                spec = DegreeSpec(tuple(ds["pis"]), float(cfg["d_tot"]))
            else:
                w = _weights_from_config(ds, part.n, seed)
                sums = w.cluster_sums(part)
                pis = tuple(w.values[idx] / sums[k] for k, idx in enumerate(part.members))
                spec = DegreeSpec(pis, float(cfg["d_tot"]))
            if kind == "pfm":
                return pfm_from_degrees(frame, part, spec, allow_self_loops=loops)
            return general_pfm(frame, part, spec, mixing=float(cfg.get("mixing", 0.5)),
                               seed=seed, allow_self_loops=loops)
    except KeyError as exc:
        raise ConfigError(f"missing model config field {exc}") from exc
    raise ConfigError(f"unknown model type {cfg.get('type')!r}")


def save_matrix_csv(path, S: np.ndarray, K: int) -> None:
    n = S.shape[0]
    with open(path, "w") as fh:
        fh.write(f"# n={n},K={K}\n")
        np.savetxt(fh, S, delimiter=",", fmt="%.17g")


def load_matrix_csv(path) -> tuple[np.ndarray, int]:
    with open(path) as fh:
        header = fh.readline().lstrip("# ").strip()
        meta = dict(item.split("=") for item in header.split(","))
        S = np.loadtxt(fh, delimiter=",", ndmin=2)
    return S, int(meta["K"])
