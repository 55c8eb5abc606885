import json
import os
import subprocess
import sys

import numpy as np
import pytest

from contactfie.cli import main
from contactfie.datagen import contact_active, load_dataset, save_dataset, hopper_dataset
from contactfie.model import save_model


def run(*argv):
    return main([str(a) for a in argv])


def files_of(d):
    return {name: (d / name).read_bytes() for name in sorted(os.listdir(d))}


def assert_rerun_identical(tmp_path, out):
    again = tmp_path / (out.name + "_again")
    record = json.loads((out / "run.json").read_text())
    code = run("rerun", out / "run.json", "--out", again)
    assert code == record["exit_code"]
    assert files_of(again) == files_of(out)


@pytest.fixture(scope="module")
def short_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("short")
    assert run("simulate", "--steps", 20, "--out", d) == 0
    return d / "dataset.jsonl"


# --- simulate / corrupt --------------------------------------------------------

def test_simulate_default_hopper(tmp_path, capsys):
    out = tmp_path / "sim"
    assert run("simulate", "--out", out) == 0
    assert "touchdowns" in capsys.readouterr().out
    ds = load_dataset(out / "dataset.jsonl")
    a = contact_active(ds.lambda_n)[:, 0].astype(int)
    assert np.sum(np.diff(a) == 1) >= 3
    rec = json.loads((out / "run.json").read_text())
    assert rec["command"] == "simulate" and rec["exit_code"] == 0
    assert rec["outputs"] == ["dataset.csv", "dataset.jsonl"]
    assert rec["config"]["steps"] == 100 and rec["config"]["seed"] == 0
    assert set(rec["versions"]) >= {"contactfie", "numpy", "scipy", "python"}
    assert "out" not in rec["config"]
    # the bundled defaults reproduce the library dataset exactly
    assert (out / "dataset.jsonl").read_text() == hopper_dataset().to_text()
    assert_rerun_identical(tmp_path, out)


def test_simulate_usage_and_io_errors(tmp_path, capsys):
    assert run("simulate", "--steps", 0, "--out", tmp_path / "a") == 2
    assert run("simulate", "--stepper", "rk4", "--out", tmp_path / "b") == 2
    assert run("simulate", "--noise", "colour=1", "--out", tmp_path / "c") == 2
    assert run("simulate", "--schedule", "gain=3", "--out", tmp_path / "d") == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("simulate", "--out", blocker / "sub") == 1
    assert run("simulate", "--model", tmp_path / "missing.json", "--q0", "0,0,0,0",
               "--out", tmp_path / "e") == 1
    capsys.readouterr()


def test_simulate_custom_model_and_stepper(tmp_path, hopper):
    path = tmp_path / "hopper.json"
    path.write_text(save_model(hopper))
    out = tmp_path / "sim"
    assert run("simulate", "--model", path, "--out", out) == 2      # q0 required
    assert run("simulate", "--model", path, "--q0", "0,0.52,0,0", "--steps", 10,
               "--stepper", "smoothed", "--kappa", 5000, "--out", out) == 0
    ds = load_dataset(out / "dataset.jsonl")
    assert ds.stepper == "smoothed" and ds.kappa == 5000.0 and ds.T == 10
    assert_rerun_identical(tmp_path, out)


def test_corrupt(tmp_path, short_dataset):
    out = tmp_path / "cor"
    assert run("corrupt", "--dataset", short_dataset, "--seed", 9, "--noise", "angle_bias=0.05",
               "--noise", "base_angle=0", "--out", out) == 0
    a, b = load_dataset(short_dataset), load_dataset(out / "dataset.jsonl")
    np.testing.assert_array_equal(a.xs, b.xs)
    np.testing.assert_allclose(b.y[:, 2] - b.xs[:, 2], 0.05, atol=1e-15)
    assert b.noise.seed == 9
    assert_rerun_identical(tmp_path, out)


# --- estimate ----------------------------------------------------------------------

def test_estimate_writes_solution_and_summary(tmp_path, short_dataset, capsys):
    out = tmp_path / "est"
    assert run("estimate", "--dataset", short_dataset, "--mass-bias", 1.3, "--out", out) == 0
    text = capsys.readouterr().out
    assert "pfie" in text and "raw" in text
    names = set(os.listdir(out))
    assert {"solution.json", "trace.csv", "comparison.csv", "summary.json", "run.json"} <= names
    summary = json.loads((out / "summary.json").read_text())
    torso = summary["inertia"][0]
    assert torso["mass_true"] == 5.0
    assert summary["prior"][0]["mass"] == pytest.approx(6.5)
    assert summary["converged"]
    sol = json.loads((out / "solution.json").read_text())
    assert sol["solver"] == "pfie-fddp"
    assert_rerun_identical(tmp_path, out)


def test_estimate_without_identification(tmp_path, short_dataset, hopper):
    out = tmp_path / "fie"
    assert run("estimate", "--dataset", short_dataset, "--mass-bias", 1.3, "--no-id",
               "--out", out) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["solver"] == "fddp"
    assert sol["pi"][0][0] == pytest.approx(1.3 * 5.0, rel=1e-12)
    assert sol["pi"][1] == pytest.approx(list(hopper.links[1].pi2), rel=1e-12)


def test_estimate_with_baseline(tmp_path, short_dataset):
    out = tmp_path / "base"
    assert run("estimate", "--dataset", short_dataset, "--baseline", "--out", out) == 0
    assert {"baseline.json", "baseline_trace.csv"} <= set(os.listdir(out))
    rows = (out / "comparison.csv").read_text().splitlines()
    assert rows[0].startswith("method,")
    assert [r.split(",")[0] for r in rows[1:]] == ["raw", "pfie", "baseline"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["baseline"]["flags"]["threshold"] == 0.02


def test_estimate_non_convergence_exit_code(tmp_path, short_dataset):
    out = tmp_path / "stop"
    assert run("estimate", "--dataset", short_dataset, "--max-iter", 1, "--mass-bias", 1.3,
               "--out", out) == 3
    sol = json.loads((out / "solution.json").read_text())
    assert not sol["converged"] and sol["iterations"] == 1
    assert json.loads((out / "run.json").read_text())["exit_code"] == 3
    assert_rerun_identical(tmp_path, out)


def test_estimate_bad_options(tmp_path, short_dataset, capsys):
    assert run("estimate", "--dataset", tmp_path / "nope.jsonl", "--out", tmp_path / "a") == 1
    assert run("estimate", "--dataset", short_dataset, "--id-links", 5,
               "--out", tmp_path / "b") == 2
    assert run("estimate", "--dataset", short_dataset, "--weight", "colour=3",
               "--out", tmp_path / "c") == 2
    assert run("estimate", "--dataset", short_dataset, "--kappa", -1, "--out", tmp_path / "d") == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    assert run("estimate", "--dataset", bad, "--out", tmp_path / "e") == 1
    capsys.readouterr()


# --- gradcheck / sweep / eval / plot ------------------------------------------------

def test_gradcheck_command(tmp_path, capsys):
    out = tmp_path / "gc"
    assert run("gradcheck", "--samples", 5, "--out", out) == 0
    rep = json.loads((out / "gradcheck.json").read_text())
    assert rep["samples"] == 5 and rep["ok"]
    assert all(v <= 1e-4 for v in rep["errors"].values())
    assert "resampled" in capsys.readouterr().out
    assert_rerun_identical(tmp_path, out)
    assert run("gradcheck", "--samples", 0, "--out", tmp_path / "zero") == 2


def test_sweep_command(tmp_path, short_dataset, dataset):
    full = tmp_path / "full.jsonl"
    save_dataset(full, dataset)
    out = tmp_path / "sw"
    assert run("sweep-kappa", "--dataset", full, "--no-estimate", "--out", out) == 0
    rows = json.loads((out / "sweep.json").read_text())
    gaps = [r["gap_socp"] for r in rows]
    assert [r["kappa"] for r in rows] == [50, 100, 500, 1000, 5000]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert (out / "sweep.svg").read_text().startswith("<svg")
    assert_rerun_identical(tmp_path, out)

    one = tmp_path / "one"
    assert run("sweep-kappa", "--dataset", short_dataset, "--kappas", 5000, "--out", one) == 0
    lines = (one / "sweep.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("kappa,gap_socp,iterations")
    assert run("sweep-kappa", "--dataset", short_dataset, "--kappas", "",
               "--out", tmp_path / "none") == 2


def test_eval_command(tmp_path, short_dataset):
    est = tmp_path / "est"
    assert run("estimate", "--dataset", short_dataset, "--out", est) == 0
    out = tmp_path / "ev"
    assert run("eval", "--dataset", short_dataset, "--solution", est / "solution.json",
               "--out", out) == 0
    m = json.loads((out / "metrics.json").read_text())
    assert m["estimate"]["rmse_state"] < m["raw_measurements"]["rmse_state"]
    assert_rerun_identical(tmp_path, out)
    assert run("eval", "--dataset", short_dataset, "--solution", short_dataset,
               "--out", tmp_path / "bad") == 1


def test_plot_command(tmp_path, short_dataset, capsys):
    est = tmp_path / "est"
    assert run("estimate", "--dataset", short_dataset, "--out", est) == 0
    out = tmp_path / "pl"
    assert run("plot", short_dataset, "--channels", "base_y,lambda_n0", "--name", "y.svg",
               "--out", out) == 0
    svg = (out / "y.svg").read_text()
    assert svg.count("<polyline") == 3         # truth and measured base_y, truth lambda_n0
    assert "truth" in svg and "measured" in svg
    assert_rerun_identical(tmp_path, out)

    again = tmp_path / "pl2"
    assert run("plot", short_dataset, "--channels", "base_y,lambda_n0", "--name", "y.svg",
               "--out", again) == 0
    assert (again / "y.svg").read_bytes() == (out / "y.svg").read_bytes()

    assert run("plot", est / "solution.json", est / "trace.csv", "--channels", "base_y,cost",
               "--out", tmp_path / "mixed") == 0

    capsys.readouterr()
    assert run("plot", short_dataset, "--channels", "base_z", "--out", tmp_path / "bad") == 2
    err = capsys.readouterr().err
    assert "base_z" in err and "base_y" in err and "lambda_n0" in err


def test_log_level_from_environment(tmp_path):
    env = dict(os.environ, PRIME_LOG="INFO")
    res = subprocess.run([sys.executable, "-m", "contactfie.cli", "gradcheck", "--samples", "1",
                          "--out", str(tmp_path / "g")], env=env, capture_output=True, text=True)
    assert res.returncode == 0
    assert "INFO" in res.stderr


def test_console_script_help():
    res = subprocess.run(["contactfie", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "corrupt", "estimate", "gradcheck", "sweep-kappa", "eval", "plot"):
        assert cmd in res.stdout
