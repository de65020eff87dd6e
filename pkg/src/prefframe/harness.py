"""Replicated experiments: generate, sample, embed, cluster, check, bound."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, spectral, theory
from .errors import AssumptionViolated, ConfigError, PrefFrameError, ReplicateError
from .models import PfmModel, model_from_config
from .sampling import SampledGraph, replicate_seed, sample_adjacency

log = logging.getLogger(__name__)

PRINTED_R = [
    [0.80, 0.07, 0.02, 0.02, 0.09],
    [0.04, 0.52, 0.24, 0.12, 0.08],
    [0.01, 0.20, 0.65, 0.15, 0.00],
    [0.01, 0.08, 0.12, 0.70, 0.08],
    [0.13, 0.21, 0.02, 0.32, 0.33],
]

# reference values printed alongside the reproduction; alt values are non-binding
SEC42_REFERENCE = {
    "main": {
        "d_min": 77.4, "dhat_min": 63, "log_n": 8.52, "g_max": 1.82, "p_err": 0.0008,
        "qin_rohe_required_lambda_K": 12.3, "rohe_required_d_min": 2422,
        "balcan_count": 1296, "njw_delta_required": 125.28, "cct_threshold": 212.11,
        "frame_eigenvalues": [1.0, 0.8, 0.6, 0.4, 0.2],
    },
    "alt": {
        "qin_rohe_required_lambda_K": 17.32, "rohe_required_d_min": 2422,
        "balcan_count": 1609, "njw_delta_required": 175.35, "cct_threshold": 212.11,
    },
}


@dataclass
class ExperimentConfig:
    model: dict
    seed: int
    replicates: int = 1
    restarts: int = 50
    max_iter: int = 300
    out: str | None = None
    expected_model: bool = False
    eigen_method: str = "auto"
    normalize_rows: bool = False
    separation_frame: str = "realized"
    constants: dict = field(default_factory=dict)
    njw: dict = field(default_factory=dict)
    qr_log_argument: str = "4n/eps"
    jobs: int = 1
    block_analysis: bool | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.seed is None:
            raise ConfigError("a seed is required")
        if self.separation_frame not in ("realized", "nominal"):
            raise ConfigError("separation_frame must be 'realized' or 'nominal'")
        self.seed = int(self.seed)
        self.theory_constants  # reject unknown constants up front

    @property
    def theory_constants(self) -> theory.TheoryConstants:
        try:
            return theory.TheoryConstants(**self.constants)
        except TypeError as exc:
            raise ConfigError(f"bad theory constants: {exc}") from exc

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        cfg = dict(cfg)
        if "model" not in cfg:
            raise ConfigError("config has no 'model' section")
        if "seed" not in cfg:
            raise ConfigError("config has no 'seed'")
        known = set(cls.__dataclass_fields__)
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(cfg)


# --- shared per-model state ----------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpectedState:
    model: PfmModel
    L: np.ndarray
    spectrum: spectral.SpectralEmbedding
    separation: clustering.SeparationReport
    L_operator: object
    blocks: spectral.BlockAnalysis | None = None


def prepare(model: PfmModel, cfg: ExperimentConfig) -> ExpectedState:
    L, d = spectral.normalized_laplacian(model.S)
    spec = spectral.top_k_eigen(L, model.K, degrees=d, method=cfg.eigen_method)
    frame = model.frame
    if cfg.separation_frame == "nominal" and model.nominal_frame is not None:
        frame = model.nominal_frame
    sep = clustering.separation_gmax(frame, model, spec)
    op = L
    # an HPFM Laplacian has rank K; use the factored form for fast products
    if model.kind == "hpfm" and spec.max_spurious <= 1e-10 and model.n > 600:
        op = spectral.low_rank_operator(spec)
    blocks = None
    do_blocks = cfg.block_analysis if cfg.block_analysis is not None else model.n <= 1000
    if do_blocks:
        try:
            blocks = spectral.block_analysis(L, model.partition, model.frame, tol=1e-8)
        except PrefFrameError as exc:
            log.warning("block analysis failed: %s", exc)
    return ExpectedState(model, L, spec, sep, op, blocks)


@dataclass
class ReplicateResult:
    index: int
    seed: int
    p_err: float
    norm_diff: float
    sigma_hat: float
    lambda_K_hat: float
    dhat_min: float
    objective: float
    assumptions: theory.AssumptionReport
    bound: theory.BoundReport | None
    bound_error: str | None
    related: list
    eigenvalues_hat: np.ndarray
    labels: np.ndarray
    V_hat: np.ndarray
    perturbation: dict = field(default_factory=dict)

    def row(self, gmax: float, sigma: float) -> dict:
        flags = {f"A{r.id}": r.passed for r in self.assumptions.records}
        rw = {c.name: c.satisfied for c in self.related}
        return {
            "replicate": self.index,
            "seed": self.seed,
            "p_err": self.p_err,
            "norm_diff": self.norm_diff,
            "sigma": sigma,
            "sigma_hat": self.sigma_hat,
            "lambda_K_hat": self.lambda_K_hat,
            "gmax": gmax,
            "dhat_min": self.dhat_min,
            "subspace_distance": self.perturbation.get("distance"),
            "bound": None if self.bound is None else self.bound.bound,
            "bound_holds": None if self.bound is None else self.bound.holds,
            **flags,
            **rw,
        }

    def to_dict(self) -> dict:
        return {
            "replicate": self.index,
            "seed": self.seed,
            "p_err": self.p_err,
            "norm_diff": self.norm_diff,
            "sigma_hat": self.sigma_hat,
            "lambda_K_hat": self.lambda_K_hat,
            "dhat_min": self.dhat_min,
            "kmeans_objective": self.objective,
            "eigenvalues_hat": self.eigenvalues_hat.tolist(),
            **self.assumptions.to_dict(),
            "bound": None if self.bound is None else self.bound.to_dict(),
            "bound_error": self.bound_error,
            "related_work": [c.to_dict() for c in self.related],
            "perturbation": self.perturbation,
        }


def run_replicate(state: ExpectedState, cfg: ExperimentConfig, index: int) -> ReplicateResult:
    model = state.model
    K = model.K
    seed = replicate_seed(cfg.seed, index)
    if cfg.expected_model:
        graph = SampledGraph.from_adjacency(model.S, seed=seed, model_digest=model.digest)
        spec_hat = state.spectrum
        norm_diff = 0.0
    else:
        graph = sample_adjacency(model, seed)
        L_hat, d_hat = spectral.normalized_laplacian(graph.A)
        spec_hat = spectral.top_k_eigen(L_hat, K, degrees=d_hat, method=cfg.eigen_method)
        norm_diff = spectral.spectral_norm_diff(L_hat, state.L_operator)
    hpfm = model.kind == "hpfm"
    dk = spectral.davis_kahan_report(state.spectrum, spec_hat, norm_diff,
                                     spectral.davis_kahan_delta(state.spectrum, hpfm))
    consts = cfg.theory_constants
    dk["concentration_ratio"] = norm_diff / spectral.concentration_rhs(model.n, consts.psi, consts.gamma)
    X = spec_hat.V
    if cfg.normalize_rows:
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    cl = clustering.kmeans(X, K, restarts=cfg.restarts, seed=seed, max_iter=cfg.max_iter)
    p_err = clustering.misclustering_rate(cl, model.partition)
    rep = theory.check_assumptions(model, graph, state.separation, state.spectrum, consts)
    bound, bound_error = None, None
    try:
        bound = theory.theorem3_bound(rep, model, graph, state.separation, state.spectrum,
                                      observed_p_err=p_err)
    except AssumptionViolated as exc:
        bound_error = str(exc)
    related = [
        theory.check_qin_rohe(state.spectrum, model, consts.qr_epsilon, cfg.qr_log_argument),
        theory.check_rohe_chatterjee_yu(model),
        theory.check_balcan(graph, model.partition),
        theory.check_ng_jordan_weiss(graph, model.partition, **cfg.njw),
        theory.check_chaudhuri_chung_tsiatas(model, consts.cct_delta),
    ]
    return ReplicateResult(
        index, seed, p_err, float(norm_diff), spec_hat.sigma, spec_hat.lambda_K,
        graph.dhat_min, cl.objective, rep, bound, bound_error, related,
        spec_hat.eigenvalues, cl.labels, X, dk,
    )


# --- aggregation and output ---------------------------------------------

def _quartiles(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "min": float(v.min()), "max": float(v.max())}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    state: ExpectedState
    replicates: list[ReplicateResult]

    @property
    def model(self) -> PfmModel:
        return self.state.model

    def rows(self) -> list[dict]:
        g = self.state.separation.g_max
        s = self.state.spectrum.sigma
        return [r.row(g, s) for r in self.replicates]

    def aggregate(self) -> dict:
        out = {}
        for key in ("p_err", "norm_diff", "dhat_min", "lambda_K_hat", "sigma_hat"):
            out[key] = _quartiles([getattr(r, key) for r in self.replicates])
        n = self.model.n
        out["norm_diff_sqrt_log_n"] = _quartiles(
            [r.norm_diff * math.sqrt(math.log(n)) for r in self.replicates])
        counts = [next(c for c in r.related if c.name == "balcan").observed["count"]
                  for r in self.replicates]
        out["balcan_count"] = _quartiles(counts)
        delta = [next(c for c in r.related if c.name == "ng_jordan_weiss").thresholds["delta_required"]
                 for r in self.replicates]
        out["njw_delta_required"] = _quartiles(delta)
        return out

    def model_summary(self) -> dict:
        m = self.model
        f = m.frame
        out = {
            "kind": m.kind, "n": m.n, "K": m.K, "digest": m.digest,
            "sizes": m.partition.sizes.tolist(),
            "d_min": m.d_min, "d_tot": m.d_tot, "d_max_scaled": m.d_max_scaled,
            "max_S": float(m.S.max()), "block_residual": m.block_residual,
            "frame": {"R": f.R.tolist(), "rho": f.rho.tolist(), "eigenvalues": f.eigenvalues.tolist(),
                      "symmetrized": f.symmetrized, "notes": list(f.notes)},
            "frame_deviation_from_nominal": m.frame_deviation(),
            "notes": list(m.notes),
        }
        if m.nominal_frame is not None and m.nominal_frame is not f:
            nf = m.nominal_frame
            out["nominal_frame"] = {"R": nf.R.tolist(), "rho": nf.rho.tolist(),
                                    "eigenvalues": nf.eigenvalues.tolist()}
        return out

    def to_dict(self) -> dict:
        st = self.state
        out = {
            "config": self.config.to_dict(),
            "model": self.model_summary(),
            "expected_spectrum": {
                "top": st.spectrum.eigenvalues[: self.model.K + 1].tolist(),
                "sigma": st.spectrum.sigma, "lambda_K": st.spectrum.lambda_K,
                "max_spurious": st.spectrum.max_spurious,
            },
            "separation": st.separation.to_dict(),
            "aggregate": self.aggregate(),
            "replicates": [r.to_dict() for r in self.replicates],
        }
        if st.blocks is not None:
            out["block_analysis"] = {"c": st.blocks.c, "pair_asymmetry": st.blocks.pair_asymmetry,
                                     "flagged": list(st.blocks.flagged)}
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_outputs(result: ExperimentResult, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(
        json.dumps(result.to_dict(), indent=2, default=_json_default, allow_nan=True) + "\n")
    _write_csv(out / "replicates.csv", result.rows())
    scree = [{"source": "expected", "rank": i + 1, "eigenvalue": float(v)}
             for i, v in enumerate(result.state.spectrum.eigenvalues[: result.model.K + 10])]
    for r in result.replicates:
        scree += [{"source": f"replicate_{r.index}", "rank": i + 1, "eigenvalue": float(v)}
                  for i, v in enumerate(r.eigenvalues_hat)]
    _write_csv(out / "scree.csv", scree)
    first = result.replicates[0]
    emb = []
    for i in range(result.model.n):
        row = {"node": i, "true_label": int(result.model.partition.labels[i]),
               "found_label": int(first.labels[i])}
        row.update({f"v{k + 1}": float(first.V_hat[i, k]) for k in range(result.model.K)})
        emb.append(row)
    _write_csv(out / "embedding.csv", emb)
    return out


def run_experiment(cfg: ExperimentConfig | dict, model: PfmModel | None = None) -> ExperimentResult:
    """Run every replicate of ``cfg`` and write outputs if ``cfg.out`` is set.

    Raises
    ------
    ConfigError
        For an invalid configuration.
    ReplicateError
        Wrapping any numerical failure, with the replicate index attached.
    """
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    if model is None:
        model_cfg = dict(cfg.model)
        model_cfg.setdefault("seed", cfg.seed)
        model = model_from_config(model_cfg)
    state = prepare(model, cfg)

    def task(i):
        try:
            return run_replicate(state, cfg, i)
        except PrefFrameError as exc:
            raise ReplicateError(i, exc) from exc

    if cfg.jobs > 1 and cfg.replicates > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            reps = list(pool.map(task, range(cfg.replicates)))
    else:
        reps = [task(i) for i in range(cfg.replicates)]
    result = ExperimentResult(cfg, state, reps)
    if cfg.out:
        write_outputs(result, cfg.out)
    return result


# --- the K = 5, n = 5000 reproduction -----------------------------------

def sec42_config(seed: int = 0, replicates: int = 10, variant: str = "main") -> dict:
    """Built-in configuration of the five-community HPFM experiment.

    ``variant="alt"`` keeps the raw uniform weights without aligning their
    community sums to the stationary distribution, so the separation
    constant (computed against the requested frame) is no longer positive.
    """
    if variant not in ("main", "alt"):
        raise ConfigError(f"unknown variant {variant!r}")
    model = {
        "type": "hpfm",
        "frame": {"R": PRINTED_R, "row_normalize": True, "on_irreversible": "symmetrize"},
        "sizes": [500, 1000, 1500, 1000, 1000],
        "weights": {"dist": "uniform", "low": 0.5, "high": 1.0},
        "align_weights": variant == "main",
        "max_prob": 1.0,
        "allow_self_loops": True,
        "seed": seed,
    }
    return {
        "model": model,
        "seed": seed,
        "replicates": replicates,
        "restarts": 20,
        "separation_frame": "realized" if variant == "main" else "nominal",
        "block_analysis": False,
    }


def comparison_table(result: ExperimentResult, variant: str = "main") -> list[dict]:
    """Rows of (quantity, reference, observed, verdict) for the reproduction."""
    ref = SEC42_REFERENCE[variant]
    agg = result.aggregate()
    m = result.model
    first = result.replicates[0]
    rw = {c.name: c for c in first.related}
    rows = [
        ("frame_eigenvalues", ref.get("frame_eigenvalues"), m.frame.eigenvalues.round(4).tolist(), None),
        ("d_min", ref.get("d_min"), m.d_min, None),
        ("dhat_min", ref.get("dhat_min"), agg["dhat_min"]["median"], None),
        ("log_n", ref.get("log_n"), first.assumptions.log_n, None),
        ("g_max", ref.get("g_max"), result.state.separation.g_max,
         "positive" if result.state.separation.g_max > 0 else "not positive"),
        ("p_err", ref.get("p_err"), agg["p_err"]["median"], None),
        ("qin_rohe_required_lambda_K", ref.get("qin_rohe_required_lambda_K"),
         rw["qin_rohe"].thresholds["required_lambda_K"], rw["qin_rohe"].verdict),
        ("rohe_required_d_min", ref.get("rohe_required_d_min"),
         rw["rohe_chatterjee_yu"].thresholds["required_d_min"], rw["rohe_chatterjee_yu"].verdict),
        ("balcan_count", ref.get("balcan_count"), agg["balcan_count"]["median"], rw["balcan"].verdict),
        ("njw_delta_required", ref.get("njw_delta_required"), agg["njw_delta_required"]["median"],
         rw["ng_jordan_weiss"].verdict),
        ("cct_threshold", ref.get("cct_threshold"),
         rw["chaudhuri_chung_tsiatas"].thresholds["d_min_required"], rw["chaudhuri_chung_tsiatas"].verdict),
    ]
    return [{"quantity": q, "reference": r, "observed": o, "verdict": v} for q, r, o, v in rows]


def reproduce_sec42(out=None, replicates: int = 10, seed: int = 0, variant: str = "main",
                    jobs: int = 1) -> tuple[ExperimentResult, list[dict]]:
    cfg = ExperimentConfig.from_dict({**sec42_config(seed, replicates, variant), "out": None, "jobs": jobs})
    result = run_experiment(cfg)
    table = comparison_table(result, variant)
    if out is not None:
        out = Path(out)
        cfg.out = str(out)
        write_outputs(result, out)
        (out / "comparison.json").write_text(json.dumps(table, indent=2, default=_json_default) + "\n")
        _write_csv(out / "comparison.csv",
                   [{**r, "reference": json.dumps(r["reference"]), "observed": json.dumps(r["observed"], default=_json_default)}
                    for r in table])
    return result, table
