"""Command-line interface: artifact layout, exit codes, config merging."""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from tvnets.cli import main
from tvnets.serialize import read_manifest


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One simulate -> estimate chain shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    sim = root / "sim"
    est = root / "est"
    r = runner.invoke(main, ["simulate", "--example", "1", "--d", "4", "--n", "100",
                             "--seed", "5", "--out", str(sim)])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["estimate", "--input", str(sim / "panel.csv"),
                             "--lambda3", "0.3", "--out", str(est)])
    assert r.exit_code == 0, r.output
    return root


def test_simulate_artifacts(workspace):
    sim = workspace / "sim"
    assert (sim / "panel.csv").exists()
    assert (sim / "truth" / "A1.npy").exists()
    assert (sim / "truth" / "Omega.npy").exists()
    assert (sim / "truth" / "meta.json").exists()
    manifest = read_manifest(sim / "manifest.json")
    assert manifest["config"]["example"] == 1
    assert manifest["config"]["d"] == 4
    assert "panel.csv" in manifest["artifacts"]


def test_simulate_is_byte_deterministic(tmp_path):
    runner = CliRunner()
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        r = runner.invoke(main, ["simulate", "--example", "2", "--d", "4",
                                 "--n", "60", "--seed", "3", "--out", str(out)])
        assert r.exit_code == 0, r.output
        outs.append((out / "panel.csv").read_bytes())
    assert outs[0] == outs[1]


def test_estimate_artifacts(workspace):
    est = workspace / "est"
    coef = est / "coefficients"
    assert sorted(os.listdir(coef)) == [f"resp_{i}.bin" for i in range(1, 5)]
    assert (est / "precision.bin").exists()
    assert (est / "edges.csv").exists()
    stage2 = est / "stage2"
    assert len(os.listdir(stage2)) == 4
    blob = json.loads((stage2 / "resp_1.json").read_text())
    assert "lambda2" in blob and "gic_values" in blob
    manifest = read_manifest(est / "manifest.json")
    assert "selected" in manifest


def test_networks_rebuilds_identical_edges(workspace, tmp_path):
    runner = CliRunner()
    out = tmp_path / "net"
    r = runner.invoke(main, ["networks", "--input", str(workspace / "est"),
                             "--profiles", "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert (out / "edges.csv").read_bytes() == (workspace / "est" / "edges.csv").read_bytes()
    assert (out / "granger_profiles.csv").exists()
    assert (out / "partial_profiles.csv").exists()


def test_metrics_report(workspace, tmp_path):
    runner = CliRunner()
    out = tmp_path / "report"
    r = runner.invoke(main, ["metrics", "--truth", str(workspace / "sim"),
                             "--est", str(workspace / "est"), "--out", str(out)])
    assert r.exit_code == 0, r.output
    lines = (out / "report.csv").read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["example", "d", "n", "method"]
    graphs = {dict(zip(header, l.split(",")))["graph"] for l in lines[1:]}
    assert graphs == {"granger", "partial"}


def test_factor_adjust_command(tmp_path, rng):
    # exact rank-2 panel: the adjusted values should be near zero
    n, d = 80, 10
    F = rng.standard_normal((n, 2)) * 3.0
    L = rng.standard_normal((d, 2))
    Z = F @ L.T + 0.01 * rng.standard_normal((n, d))
    src = tmp_path / "panel.csv"
    np.savetxt(src, Z, delimiter=",", header=",".join(f"s{i}" for i in range(d)),
               comments="")
    runner = CliRunner()
    out = tmp_path / "fa"
    r = runner.invoke(main, ["factor-adjust", "--input", str(src), "--k", "2",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    adjusted = np.loadtxt(out / "adjusted.csv", delimiter=",", skiprows=1)
    assert np.sqrt(np.mean(adjusted ** 2)) < 0.05
    assert (out / "factors.csv").exists()
    assert (out / "loadings.csv").exists()


def test_benchmark_command(tmp_path):
    runner = CliRunner()
    out = tmp_path / "bench"
    r = runner.invoke(main, ["benchmark", "--example", "2", "--d", "4", "--n", "80",
                             "--seed", "2", "--reps", "2", "--methods",
                             "wglasso,oracle", "--threads", "1", "--out", str(out)])
    assert r.exit_code == 0, r.output
    lines = (out / "benchmark.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    blob = json.loads((out / "benchmark.json").read_text())
    assert {row["method"] for row in blob["rows"]} == {"wglasso", "oracle"}


def test_toml_config_with_cli_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('example = 2\nd = 4\nseed = 3\nn = 60\n')
    runner = CliRunner()
    out = tmp_path / "sim"
    r = runner.invoke(main, ["simulate", "--config", str(cfg), "--n", "80",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    manifest = read_manifest(out / "manifest.json")
    assert manifest["config"]["example"] == 2
    assert manifest["config"]["n"] == 80  # flag beats file


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("exmaple = 2\n")
    runner = CliRunner()
    r = runner.invoke(main, ["simulate", "--config", str(cfg), "--out",
                             str(tmp_path / "x")])
    assert r.exit_code != 0
    assert not (tmp_path / "x").exists()


def test_validation_error_exits_1_and_cleans_up(tmp_path, workspace):
    runner = CliRunner()
    out = tmp_path / "bad"
    r = runner.invoke(main, ["estimate", "--input",
                             str(workspace / "sim" / "panel.csv"),
                             "--p", "0", "--out", str(out)])
    assert r.exit_code == 1
    assert not out.exists()


def test_missing_input_exits_with_usage_error(tmp_path):
    runner = CliRunner()
    r = runner.invoke(main, ["estimate", "--input", str(tmp_path / "nope.csv"),
                             "--out", str(tmp_path / "o")])
    assert r.exit_code != 0


def test_malformed_csv_exits_3(tmp_path):
    src = tmp_path / "bad.csv"
    src.write_text("a,b\n1,2\n3,zebra\n")
    runner = CliRunner()
    out = tmp_path / "o"
    r = runner.invoke(main, ["estimate", "--input", str(src), "--out", str(out)])
    assert r.exit_code == 3
    assert not out.exists()


def test_mutually_exclusive_order_flags(tmp_path, workspace):
    runner = CliRunner()
    r = runner.invoke(main, ["estimate", "--input",
                             str(workspace / "sim" / "panel.csv"),
                             "--p", "1", "--auto-order",
                             "--out", str(tmp_path / "o")])
    assert r.exit_code == 1
