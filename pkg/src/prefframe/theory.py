"""Assumption checks, the mis-clustering bound and related-work conditions.

Every function is pure and returns plain dataclasses with a ``to_dict``
method. Logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AssumptionViolated, ZeroDegreeNode
from .models import Partition, PfmModel


@dataclass(frozen=True)
class TheoryConstants:
    kappa: float | None = None
    gamma: float = 1.0
    epsilon: float = 1.0
    C0: float = 1.0
    psi: float = 1.0
    qr_epsilon: float = 0.1
    cct_delta: float = 0.01


@dataclass(frozen=True)
class AssumptionRecord:
    id: int
    name: str
    observed: float | bool
    threshold: float | None
    passed: bool | None


@dataclass(frozen=True)
class AssumptionReport:
    records: tuple[AssumptionRecord, ...]
    log_n: float
    constants: TheoryConstants

    def __getitem__(self, i: int) -> AssumptionRecord:
        return self.records[i - 1]

    def to_dict(self) -> dict:
        return {
            "log_n": self.log_n,
            "constants": asdict(self.constants),
            "assumptions": [asdict(r) for r in self.records],
        }


def check_assumptions(model: PfmModel, graph, sep, spectrum,
                      constants: TheoryConstants = TheoryConstants()) -> AssumptionReport:
    """Evaluate the seven assumptions of the mis-clustering theorem.

    ``spectrum`` is the embedding of the expected Laplacian (A7 uses its
    eigengap); ``graph`` is the sample (A3).
    """
    n = model.n
    log_n = math.log(n)
    smax = float(model.S.max())
    dhat = float(graph.degrees.min())
    dmax = model.d_max_scaled
    kappa = constants.kappa
    sigma = spectrum.sigma
    recs = (
        AssumptionRecord(1, "hpfm", model.kind == "hpfm", None, model.kind == "hpfm"),
        AssumptionRecord(2, "max_S_le_1", smax, 1.0, smax <= 1.0),
        AssumptionRecord(3, "dhat_min_ge_log_n", dhat, log_n, dhat >= log_n),
        AssumptionRecord(4, "d_min_ge_log_n", model.d_min, log_n, model.d_min >= log_n),
        AssumptionRecord(5, "d_max_le_kappa_log_n", dmax,
                         None if kappa is None else kappa * log_n,
                         None if kappa is None else dmax <= kappa * log_n),
        AssumptionRecord(6, "g_max_positive", sep.g_max, 0.0, sep.g_max > 0),
        AssumptionRecord(7, "eigengap_positive", sigma, 0.0, sigma > spectrum.tol),
    )
    return AssumptionReport(recs, log_n, constants)


# --- mis-clustering bound -----------------------------------------------

def misclustering_bound(K, d_tot, n, d_min, dhat_min, g_max, gap, C0=1.0, gamma=1.0, epsilon=1.0):
    """``K d_tot / (n d_min g_max) [C0 gamma^4 / (gap^2 log n) + 4 eps^2 / dhat_min]``.

    ``gap`` is sigma for a PFM and lambda_K for an HPFM. Returns
    ``(bound, term1, term2)`` where the bound is ``term1 + term2``.
    """
    pre = K * d_tot / (n * d_min * g_max)
    t1 = pre * C0 * gamma**4 / (gap**2 * math.log(n))
    t2 = pre * 4.0 * epsilon**2 / dhat_min
    return t1 + t2, t1, t2


def simplified_bound(K, kappa, g_max, sigma, n, C0=1.0, gamma=1.0, epsilon=1.0):
    """``K kappa (C0 gamma^4 + 4 eps^2 sigma^2) / (g_max sigma^2 log n)``."""
    return K * kappa * (C0 * gamma**4 + 4 * epsilon**2 * sigma**2) / (g_max * sigma**2 * math.log(n))


def success_probability(n, gamma=1.0, epsilon=1.0):
    """``(1 - 2 exp(-eps^2 / (2 + eps/sqrt(log n)))) (1 - e^{-gamma})``."""
    return ((1 - 2 * math.exp(-epsilon**2 / (2 + epsilon / math.sqrt(math.log(n)))))
            * (1 - math.exp(-gamma)))


@dataclass(frozen=True)
class BoundReport:
    variant: str
    bound: float
    term_concentration: float
    term_degree: float
    probability: float
    simplified: float | None
    gap: float
    observed_p_err: float | None = None

    @property
    def holds(self) -> bool | None:
        if self.observed_p_err is None:
            return None
        return self.observed_p_err <= self.bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holds"] = self.holds
        return out


def theorem3_bound(report: AssumptionReport, model: PfmModel, graph, sep, spectrum,
                   variant: str | None = None, observed_p_err: float | None = None) -> BoundReport:
    """Mis-clustering bound for the given model and sample.

    Raises
    ------
    AssumptionViolated
        If ``g_max <= 0`` or the relevant spectral gap is zero.
    """
    c = report.constants
    variant = variant or ("HPFM" if model.kind == "hpfm" else "PFM")
    if not sep.g_max > 0:
        raise AssumptionViolated(f"g_max = {sep.g_max:.6g} is not positive")
    gap = abs(spectrum.lambda_K) if variant == "HPFM" else spectrum.sigma
    if not gap > spectrum.tol:
        raise AssumptionViolated("spectral gap is zero")
    dhat = float(graph.degrees.min())
    if dhat <= 0:
        raise AssumptionViolated("sampled graph has an isolated node")
    b, t1, t2 = misclustering_bound(model.K, model.d_tot, model.n, model.d_min, dhat,
                                    sep.g_max, gap, c.C0, c.gamma, c.epsilon)
    simp = None
    if c.kappa is not None:
        simp = simplified_bound(model.K, c.kappa, sep.g_max, gap, model.n, c.C0, c.gamma, c.epsilon)
    return BoundReport(variant, b, t1, t2, success_probability(model.n, c.gamma, c.epsilon),
                       simp, gap, observed_p_err)


# --- related work ---------------------------------------------------------

@dataclass(frozen=True)
class RelatedWorkCheck:
    name: str
    inputs: dict
    thresholds: dict
    observed: dict
    satisfied: bool
    parameters: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "satisfied" if self.satisfied else "violated"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["verdict"] = self.verdict
        return out


def qin_rohe_required(K: int, d_min: float, n: int, epsilon: float = 0.1,
                      log_argument: str = "4n/eps") -> float:
    """Smallest lambda_K compatible with ``lambda_K / (8 sqrt 3) >= sqrt(K ln(x) / d_min)``.

    ``log_argument`` selects ``x``: ``"4n/eps"`` (the default) or ``"K/eps"``.
    """
    if log_argument == "4n/eps":
        x = 4 * n / epsilon
    elif log_argument == "K/eps":
        x = K / epsilon
    else:
        raise ValueError(f"unknown log_argument {log_argument!r}")
    return 8 * math.sqrt(3) * math.sqrt(K * math.log(x) / d_min)


def check_qin_rohe(spectrum, model: PfmModel, epsilon: float = 0.1,
                   log_argument: str = "4n/eps") -> RelatedWorkCheck:
    req = qin_rohe_required(model.K, model.d_min, model.n, epsilon, log_argument)
    lam = abs(spectrum.lambda_K)
    return RelatedWorkCheck(
        "qin_rohe",
        {"K": model.K, "n": model.n, "d_min": model.d_min},
        {"required_lambda_K": req},
        {"lambda_K": lam},
        bool(req <= 1.0 and lam >= req),
        {"epsilon": epsilon, "log_argument": log_argument},
    )


def rohe_min_degree(n: int) -> float:
    """``n sqrt(2 / log n)``: the d_min at which ``tau_n^2 log n = 2``."""
    return n * math.sqrt(2.0 / math.log(n))


def check_rohe_chatterjee_yu(model: PfmModel) -> RelatedWorkCheck:
    n = model.n
    tau = model.d_min / n
    val = tau**2 * math.log(n)
    return RelatedWorkCheck(
        "rohe_chatterjee_yu",
        {"n": n, "d_min": model.d_min},
        {"tau_sq_log_n_min": 2.0, "required_d_min": rohe_min_degree(n)},
        {"tau_n": tau, "tau_sq_log_n": val},
        bool(val > 2.0),
    )


def _adjacency(graph):
    A = graph.A if hasattr(graph, "A") else graph
    return sp.csr_array(A) if sp.issparse(A) else sp.csr_array(np.asarray(A, dtype=float))


def balcan_count(A, labels) -> int:
    """Nodes with strictly more edges leaving their community than inside it."""
    A = _adjacency(A)
    labels = np.asarray(labels)
    Z = sp.csr_array((np.ones(labels.size), (np.arange(labels.size), labels)))
    per = (A @ Z).toarray()
    inside = per[np.arange(labels.size), labels]
    outside = per.sum(axis=1) - inside
    return int(np.sum(outside > inside))


def check_balcan(graph, truth: Partition) -> RelatedWorkCheck:
    count = balcan_count(graph, truth.labels)
    return RelatedWorkCheck(
        "balcan", {"n": truth.n}, {"max_count": 0}, {"count": count}, count == 0)


def njw_quantities(A, labels, K: int, degree: str = "within", exponent: float = 0.5,
                   include_diagonal: bool = False, delta_factor: float = 2 + 2 * math.sqrt(2)):
    """``(eps1, eps2, eps, delta_required)`` of the eigengap condition.

    ``degree="within"`` normalizes by within-community degree, ``"full"`` by
    the whole sampled degree. ``eps1`` maximizes over ordered pairs of
    distinct communities unless ``include_diagonal``.
    """
    A = _adjacency(A)
    labels = np.asarray(labels)
    n = labels.size
    Z = sp.csr_array((np.ones(n), (np.arange(n), labels)), shape=(n, K))
    per = (A @ Z).toarray()
    full = per.sum(axis=1)
    inside = per[np.arange(n), labels]
    if degree not in ("within", "full"):
        raise ValueError(f"unknown degree {degree!r}")
    d = inside if degree == "within" else full
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise ZeroDegreeNode(bad)
    inv = 1.0 / d
    A2 = A.multiply(A).tocoo()
    w = A2.data * inv[A2.row] * inv[A2.col]
    blocks = np.zeros((K, K))
    np.add.at(blocks, (labels[A2.row], labels[A2.col]), w)
    if include_diagonal or K == 1:
        eps1 = float(blocks.max())
    else:
        eps1 = float(blocks[~np.eye(K, dtype=bool)].max())
    out_ratio = (full - inside) * inv
    eps2 = 0.0
    for k in range(K):
        idx = labels == k
        eps2 = max(eps2, float(out_ratio[idx].max() * blocks[k, k] ** exponent))
    eps = math.sqrt(K * (K - 1) * eps1 + K * eps2**2)
    return eps1, eps2, eps, delta_factor * eps


def check_ng_jordan_weiss(graph, truth: Partition, **options) -> RelatedWorkCheck:
    """Eigengap condition ``lambda_2 < 1 - delta`` with ``delta > factor * eps``.

    Violated whenever the required delta is at least one, or when some node
    has no neighbour in its own community.
    """
    params = {"degree": "within", "exponent": 0.5, "include_diagonal": False,
              "delta_factor": 2 + 2 * math.sqrt(2)}
    params.update(options)
    try:
        eps1, eps2, eps, delta = njw_quantities(graph, truth.labels, truth.K, **options)
    except ZeroDegreeNode as exc:
        # undefined when a node has no edge inside its community; recorded as violated
        return RelatedWorkCheck(
            "ng_jordan_weiss", {"n": truth.n, "K": truth.K},
            {"delta_required": math.inf, "delta_max": 1.0},
            {"eps1": math.inf, "eps2": math.inf, "eps": math.inf,
             "zero_degree_nodes": len(exc.nodes)},
            False, params)
    return RelatedWorkCheck(
        "ng_jordan_weiss",
        {"n": truth.n, "K": truth.K},
        {"delta_required": delta, "delta_max": 1.0},
        {"eps1": eps1, "eps2": eps2, "eps": eps},
        bool(delta < 1.0),
        params,
    )


def cct_threshold(n: int, delta: float = 0.01) -> float:
    """``(128/9) ln(6n/delta)``."""
    return 128.0 / 9.0 * math.log(6 * n / delta)


def check_chaudhuri_chung_tsiatas(model: PfmModel, delta: float = 0.01) -> RelatedWorkCheck:
    thr = cct_threshold(model.n, delta)
    return RelatedWorkCheck(
        "chaudhuri_chung_tsiatas",
        {"n": model.n, "d_min": model.d_min},
        {"d_min_required": thr},
        {"d_min": model.d_min},
        bool(model.d_min >= thr),
        {"delta": delta},
    )


def related_work(model: PfmModel, graph, spectrum, truth: Partition,
                 constants: TheoryConstants = TheoryConstants(), njw_options: dict | None = None
                 ) -> list[RelatedWorkCheck]:
    """All five related-work checks for one sample."""
    return [
        check_qin_rohe(spectrum, model, constants.qr_epsilon),
        check_rohe_chatterjee_yu(model),
        check_balcan(graph, truth),
        check_ng_jordan_weiss(graph, truth, **(njw_options or {})),
        check_chaudhuri_chung_tsiatas(model, constants.cct_delta),
    ]
