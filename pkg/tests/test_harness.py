import csv
import json

import numpy as np
import pytest

from prefframe import cli, harness
from prefframe.errors import ConfigError

R3 = [[0.5, 0.3, 0.2], [0.3, 0.45, 0.25], [0.2, 0.25, 0.55]]


def small_config(seed=3, replicates=3, **extra):
    cfg = {
        "model": {
            "type": "hpfm",
            "frame": {"R": R3},
            "sizes": [40, 40, 80],
            "weights": {"dist": "uniform", "low": 0.5, "high": 1.0},
            "max_prob": 0.9,
        },
        "seed": seed,
        "replicates": replicates,
        "restarts": 5,
    }
    cfg.update(extra)
    return cfg


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_config()))
    return path


def test_outputs_written(tmp_path):
    out = tmp_path / "run"
    res = harness.run_experiment(small_config(out=str(out)))
    assert len(res.replicates) == 3
    doc = json.loads((out / "results.json").read_text())
    assert {"config", "model", "expected_spectrum", "separation", "aggregate", "replicates"} <= set(doc)
    with open(out / "replicates.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert {"p_err", "norm_diff", "A1", "A7", "qin_rohe", "ng_jordan_weiss"} <= set(rows[0])
    with open(out / "embedding.csv") as fh:
        emb = list(csv.DictReader(fh))
    assert len(emb) == 160 and list(emb[0])[:3] == ["node", "true_label", "found_label"]
    with open(out / "scree.csv") as fh:
        scree = list(csv.DictReader(fh))
    assert scree[0]["source"] == "expected" and float(scree[0]["eigenvalue"]) == pytest.approx(1.0)


def test_determinism_byte_identical(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    harness.run_experiment(small_config(out=str(a)))
    harness.run_experiment(small_config(out=str(b)))
    harness.run_experiment(small_config(out=str(c), jobs=2))
    ref = (a / "replicates.csv").read_bytes()
    assert (b / "replicates.csv").read_bytes() == ref
    assert (c / "replicates.csv").read_bytes() == ref
    assert (b / "embedding.csv").read_bytes() == (a / "embedding.csv").read_bytes()


def test_replicate_seeds_differ():
    res = harness.run_experiment(small_config())
    seeds = [r.seed for r in res.replicates]
    assert len(set(seeds)) == len(seeds)


def test_expected_model_recovers_exactly():
    res = harness.run_experiment(small_config(expected_model=True, replicates=2))
    assert all(r.p_err == 0.0 for r in res.replicates)
    assert all(r.norm_diff < 1e-10 for r in res.replicates)


@pytest.mark.parametrize("bad", [
    {"replicates": 0},
    {"bogus_field": 1},
    {"separation_frame": "other"},
    {"constants": {"nope": 1}},
])
def test_config_errors(bad):
    cfg = small_config(**bad)
    with pytest.raises(ConfigError):
        harness.run_experiment(cfg)


def test_config_missing_sections(tmp_path):
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict({"seed": 0})
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict({"model": {}})
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        harness.run_experiment({"model": {"type": "nope"}, "seed": 0})


def test_sec42_config_shape():
    cfg = harness.sec42_config(seed=1, replicates=2)
    assert sum(cfg["model"]["sizes"]) == 5000
    assert harness.sec42_config(variant="alt")["model"]["align_weights"] is False
    with pytest.raises(ConfigError):
        harness.sec42_config(variant="x")


# --- CLI ------------------------------------------------------------------

def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_cli_generate(config_file, tmp_path, capsys):
    out = tmp_path / "gen"
    assert cli.main(["generate", "--config", str(config_file), "--out", str(out)]) == 0
    doc = _json_out(capsys)
    assert doc["n"] == 160 and doc["K"] == 3
    assert (out / "S.csv").exists() and (out / "model.json").exists()


def test_cli_sample_then_cluster(config_file, tmp_path, capsys):
    out = tmp_path / "s"
    assert cli.main(["sample", "--config", str(config_file), "--out", str(out), "--replicate", "1"]) == 0
    sampled = _json_out(capsys)
    assert sampled["n"] == 160
    assert cli.main(["cluster", "--config", str(config_file), "--edges", str(out / "edges.csv"),
                     "--out", str(out)]) == 0
    from_file = _json_out(capsys)
    assert cli.main(["cluster", "--config", str(config_file), "--replicate", "1"]) == 0
    direct = _json_out(capsys)
    assert from_file["p_err"] == direct["p_err"]
    assert (out / "labels.csv").exists() and (out / "confusion.csv").exists()


def test_cli_verify(config_file, capsys):
    assert cli.main(["verify", "--config", str(config_file)]) == 0
    doc = _json_out(capsys)
    assert doc["top_eigenvalues_minus_frame"] < 1e-10
    assert doc["Ls_minus_s"] < 1e-12
    assert doc["certificate_holds"] is True


def test_cli_bound(config_file, capsys):
    assert cli.main(["bound", "--config", str(config_file)]) == 0
    doc = _json_out(capsys)
    assert len(doc["assumptions"]) == 7 and len(doc["related_work"]) == 5


def test_cli_run_formats(config_file, tmp_path, capsys):
    out = tmp_path / "r"
    assert cli.main(["run", "--config", str(config_file), "--replicates", "2", "--out", str(out)]) == 0
    agg = _json_out(capsys)
    assert "p_err" in agg
    assert cli.main(["run", "--config", str(config_file), "--replicates", "2", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("replicate,seed,p_err") and len(lines) == 3


def test_cli_run_expected_model(config_file, capsys):
    assert cli.main(["run", "--config", str(config_file), "--expected-model", "--replicates", "1"]) == 0
    assert _json_out(capsys)["p_err"]["median"] == 0.0


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err
