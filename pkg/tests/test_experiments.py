import copy
import json
import subprocess
import sys

import numpy as np
import pytest

from rwnn_pde import ExperimentConfig, fit_loglog_slope, run_experiment, scaling_table
from rwnn_pde.experiments import rel_error, result_to_csv


def _small_calls_config(**overrides):
    params = dict(
        experiment="bs-calls", paths=4000, nodes=40, seed=3, steps=8
    )
    params.update(overrides)
    return ExperimentConfig(**params)


def _strip_wall_times(doc):
    doc = copy.deepcopy(doc)
    doc.pop("wall_times", None)
    return doc


def test_loglog_slope_synthetic_rates():
    ks = (10, 100, 1000)
    assert fit_loglog_slope([(k, 1.0 / k) for k in ks]) == pytest.approx(-1.0, abs=1e-12)
    assert fit_loglog_slope([(k, 0.37) for k in ks]) == pytest.approx(0.0, abs=1e-12)
    assert fit_loglog_slope([(k, k**-0.5) for k in ks]) == pytest.approx(-0.5, abs=1e-12)


def test_loglog_slope_needs_two_sizes():
    with pytest.raises(ValueError):
        fit_loglog_slope([(100, 1.0)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(100, 1.0), (100, 2.0)])


def test_rel_error_sign_convention():
    # Estimate above the reference gives a negative relative error.
    assert rel_error(2.0, 2.2) == pytest.approx(-0.1)
    assert rel_error(2.0, 1.8) == pytest.approx(0.1)


def test_unknown_experiment_rejected():
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="bs-puts")


def test_bs_calls_document_shape_and_determinism():
    config = _small_calls_config()
    doc = run_experiment(config)
    assert doc["schema"] == 1
    assert doc["experiment"] == "bs-calls"
    assert len(doc["sigma"]) == 5
    assert set(doc["rel_errors"]) == {
        "pde_with_absorption", "pde_without_absorption", "mc"
    }
    assert all(len(v) == 5 for v in doc["rel_errors"].values())
    again = run_experiment(_small_calls_config())
    assert json.dumps(_strip_wall_times(doc), sort_keys=True) == json.dumps(
        _strip_wall_times(again), sort_keys=True
    )
    different = run_experiment(_small_calls_config(seed=4))
    assert json.dumps(_strip_wall_times(doc), sort_keys=True) != json.dumps(
        _strip_wall_times(different), sort_keys=True
    )


def test_convergence_document_records():
    config = ExperimentConfig(
        experiment="bs-convergence", paths=2000, nodes=(10, 40), repeats=3,
        steps=6, seed=1,
    )
    doc = run_experiment(config)
    assert doc["absorption"] is True
    assert doc["settings"]["connectivity"] == 1.0
    assert [rec["nodes"] for rec in doc["records"]] == [10, 40]
    for rec in doc["records"]:
        assert len(rec["mse"]) == 3
        assert rec["q10"] <= rec["mean_mse"] <= rec["q90"] or rec["q10"] <= rec["q90"]
    assert "slope" in doc
    assert "reference" in doc


def test_rb_call_small_run():
    config = ExperimentConfig(
        experiment="rb-call", paths=3000, nodes=30, steps=6, seed=2,
        reference_paths=20_000, reference_steps=30,
    )
    doc = run_experiment(config)
    assert doc["schema"] == 1
    assert doc["reference"] > 0
    assert doc["pde_without_absorption"] > 0
    assert set(doc["rel_errors"]) == {
        "pde_with_absorption", "pde_without_absorption", "mc"
    }


def test_scaling_row_matches_bs_calls_run():
    config = _small_calls_config(paths=3000, nodes=30)
    rows = scaling_table(dims=(5,), config=config)
    doc = run_experiment(config)
    assert rows[0][0] == 5
    assert rows[0][1] == pytest.approx(doc["total_mse"]["pde_with_absorption"], rel=1e-12)


def test_result_csv_has_sigma_rows():
    doc = run_experiment(_small_calls_config(paths=2000, nodes=20))
    text = result_to_csv(doc)
    lines = text.strip().splitlines()
    assert lines[0].startswith("sigma,")
    assert len(lines) == 6


def _run_cli(*args, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "rwnn_pde.cli", *args],
        capture_output=True, text=True, env=full_env,
    )


def test_cli_json_output(tmp_path):
    out = tmp_path / "result.json"
    proc = _run_cli(
        "bs-calls", "--paths", "2000", "--nodes", "20", "--steps", "6",
        "--seed", "5", "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1
    assert doc["experiment"] == "bs-calls"


def test_cli_csv_format(tmp_path):
    out = tmp_path / "result.csv"
    proc = _run_cli(
        "bs-calls", "--paths", "1000", "--nodes", "10", "--steps", "4",
        "--format", "csv", "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("sigma,")


def test_cli_error_document(tmp_path):
    out = tmp_path / "error.json"
    proc = _run_cli("bs-calls", "--steps", "0", "--out", str(out))
    assert proc.returncode == 1
    doc = json.loads(out.read_text())
    assert "error" in doc and doc["error"]["type"] == "ValueError"


def test_cli_dump_weights_and_paths(tmp_path):
    weights = tmp_path / "weights.json"
    paths_csv = tmp_path / "paths.csv"
    proc = _run_cli(
        "bs-calls", "--paths", "200", "--nodes", "8", "--steps", "3",
        "--dump-weights", str(weights), "--dump-paths", str(paths_csv),
        "--out", str(tmp_path / "res.json"),
    )
    assert proc.returncode == 0, proc.stderr
    wdoc = json.loads(weights.read_text())
    assert wdoc["schema"] == 1
    assert len(wdoc["steps"]) == 3
    assert len(wdoc["steps"][0]["readout"]) == 5  # five outputs
    header = paths_csv.read_text().splitlines()[0]
    assert header.split(",")[:2] == ["path", "time_index"]
