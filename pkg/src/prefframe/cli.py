"""Command-line interface.

Failed assumptions and violated conditions are reported as data; the exit
status is nonzero only for configuration, I/O or numerical errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import clustering, harness, spectral, theory
from .errors import ConfigError, PrefFrameError
from .models import model_from_config, save_matrix_csv
from .sampling import read_edge_list, replicate_seed, sample_adjacency, write_edge_list

log = logging.getLogger("prefframe")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _experiment_dict(args) -> dict:
    """Experiment config from --config; a bare model config is wrapped."""
    cfg = _read_json(args.config)
    if "model" not in cfg:
        cfg = {"model": cfg, "seed": cfg.get("seed", 0)}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _model(cfg: dict):
    m = dict(cfg["model"])
    m.setdefault("seed", cfg["seed"])
    return model_from_config(m)


def _emit(obj, fmt: str, out=None) -> None:
    if fmt == "csv" and isinstance(obj, list) and obj and isinstance(obj[0], dict):
        keys = list(obj[0])
        lines = [",".join(keys)] + [",".join(json.dumps(r[k], default=harness._json_default)
                                             if isinstance(r[k], (list, dict)) else harness._fmt(r[k])
                                             for k in keys) for r in obj]
        text = "\n".join(lines) + "\n"
    elif fmt == "csv" and isinstance(obj, dict):
        flat = {k: v for k, v in obj.items() if not isinstance(v, (list, dict))}
        text = "key,value\n" + "".join(f"{k},{harness._fmt(v)}\n" for k, v in flat.items())
    else:
        text = json.dumps(obj, indent=2, default=harness._json_default) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> int:
    cfg = _experiment_dict(args)
    model = _model(cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_matrix_csv(out / "S.csv", model.S, model.K)
    summary = {
        "kind": model.kind, "n": model.n, "K": model.K, "digest": model.digest,
        "d_min": model.d_min, "d_tot": model.d_tot, "max_S": float(model.S.max()),
        "block_residual": model.block_residual,
        "R": model.frame.R.tolist(), "rho": model.frame.rho.tolist(),
        "eigenvalues": model.frame.eigenvalues.tolist(),
        "labels": model.partition.labels.tolist(), "notes": list(model.notes),
    }
    (out / "model.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit({k: v for k, v in summary.items() if k != "labels"}, args.format)
    return 0


def cmd_sample(args) -> int:
    cfg = _experiment_dict(args)
    model = _model(cfg)
    seed = replicate_seed(cfg["seed"], args.replicate)
    g = sample_adjacency(model, seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, out / "edges.csv")
    _emit({"seed": seed, "n": g.n, "edges": int(g.A.nnz), "dhat_min": g.dhat_min,
           "model_hash": model.digest}, args.format)
    return 0


def cmd_cluster(args) -> int:
    cfg = _experiment_dict(args)
    model = _model(cfg)
    if args.edges:
        g = read_edge_list(args.edges, n=model.n)
    else:
        g = sample_adjacency(model, replicate_seed(cfg["seed"], args.replicate))
    emb = spectral.embed(g.A, model.K)
    cl = clustering.kmeans(emb.V, model.K, restarts=cfg.get("restarts", 50), seed=cfg["seed"])
    p_err = clustering.misclustering_rate(cl, model.partition)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        clustering.save_labels_csv(out / "labels.csv", cl.labels)
        clustering.save_confusion_csv(out / "confusion.csv",
                                      clustering.confusion_matrix(cl, model.partition, model.K))
    _emit({"p_err": p_err, "objective": cl.objective, "lambda_K_hat": emb.lambda_K,
           "sigma_hat": emb.sigma}, args.format)
    return 0


def cmd_verify(args) -> int:
    """Structural identities of the expected model."""
    cfg = _experiment_dict(args)
    model = _model(cfg)
    L, d = spectral.normalized_laplacian(model.S)
    spec = spectral.top_k_eigen(L, model.K, degrees=d, method="full" if model.n <= 3000 else "auto")
    s = np.sqrt(d)
    report = {
        "n": model.n, "K": model.K, "kind": model.kind,
        "block_residual": model.block_residual,
        "frame_deviation_from_nominal": model.frame_deviation(),
        "top_eigenvalues_minus_frame": float(np.abs(spec.top - model.frame.eigenvalues).max()),
        "Ls_minus_s": float(np.abs(L @ s - s).max()),
        "max_spurious": spec.max_spurious,
        "sigma": spec.sigma,
        "piecewise_constant": spectral.piecewise_constant_check(spec.V, model.partition),
    }
    if spec.full:
        report["spurious_orthogonality"] = spectral.spurious_orthogonality_check(spec, model.partition)
    if model.n <= 2000:
        try:
            blocks = spectral.block_analysis(L, model.partition, model.frame)
            cert = spectral.spurious_bound_certificate(blocks, model.frame, spec, raise_on_violation=False)
            report.update({"c": blocks.c, "frame_factor": cert.frame_factor,
                           "spurious_bound": cert.bound, "certificate_holds": cert.holds})
        except PrefFrameError as exc:
            report["block_analysis_error"] = str(exc)
    sep = clustering.separation_gmax(model.frame, model, spec)
    report.update({"g_max": sep.g_max, "min_cross_distance2": sep.min_observed_center_distance2,
                   "g_max_over_d_tot": sep.g_max / model.d_tot})
    _emit(report, args.format)
    return 0


def cmd_bound(args) -> int:
    cfg = harness.ExperimentConfig.from_dict({**_experiment_dict(args), "replicates": 1, "out": None})
    res = harness.run_experiment(cfg)
    rep = res.replicates[0]
    _emit({
        "p_err": rep.p_err,
        **rep.assumptions.to_dict(),
        "bound": None if rep.bound is None else rep.bound.to_dict(),
        "bound_error": rep.bound_error,
        "related_work": [c.to_dict() for c in rep.related],
    }, args.format)
    return 0


def cmd_run(args) -> int:
    cfg = _experiment_dict(args)
    for key in ("replicates", "out", "jobs"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if args.expected_model:
        cfg["expected_model"] = True
    res = harness.run_experiment(harness.ExperimentConfig.from_dict(cfg))
    _emit(res.aggregate() if args.format == "json" else res.rows(), args.format)
    return 0


def cmd_reproduce(args) -> int:
    _, table = harness.reproduce_sec42(
        out=args.out, replicates=args.replicates or 10, seed=args.seed or 0,
        variant=args.variant, jobs=args.jobs or 1)
    _emit(table, args.format)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prefframe",
                                 description="Spectral clustering under preference frame models")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON experiment or model config")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        return p

    p = common(sub.add_parser("generate", help="build the expected matrix S"))
    p.set_defaults(func=cmd_generate)
    p = common(sub.add_parser("sample", help="draw one adjacency matrix"))
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_sample)
    p = common(sub.add_parser("cluster", help="spectral clustering of one sample"))
    p.add_argument("--edges", default=None, help="edge list written by 'sample'")
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_cluster)
    p = common(sub.add_parser("verify", help="structural checks on the expected model"))
    p.set_defaults(func=cmd_verify)
    p = common(sub.add_parser("bound", help="assumptions, bound and related work for one sample"))
    p.set_defaults(func=cmd_bound)
    p = common(sub.add_parser("run", help="replicated experiment"))
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--expected-model", action="store_true", help="cluster the noiseless model")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_run)
    p = common(sub.add_parser("reproduce-sec42", help="the K=5, n=5000 HPFM experiment"), config=False)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--variant", choices=("main", "alt"), default="main")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PrefFrameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
