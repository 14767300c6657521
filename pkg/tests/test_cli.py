"""Command-line entry point: dispatch, config handling, exit semantics."""

import json

import pytest

import bridgelab.cli as cli
from bridgelab.errors import SolverError


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_list_prints_the_catalog(capsys):
    code, out, _ = run(["list"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[-1] == "13 experiments registered"
    names = {line.split()[0] for line in lines[:-1]}
    assert {"characteristic", "stein", "verify-all", "list"} <= names


def test_characteristic_passes_and_reports_verdict(capsys):
    code, out, err = run(["characteristic"], capsys)
    assert code == 0
    payload = json.loads(out.strip().splitlines()[0])
    assert payload["verdict"] == "pass"
    assert "# characteristic: PASS" in err
    assert "# total runtime" in err


def test_coupling_reports_the_sinh_envelope_value(capsys):
    code, out, _ = run(["coupling"], capsys)
    assert code == 0
    payload = json.loads(out.strip().splitlines()[0])
    assert payload["measured"]["bound_at_t"] == pytest.approx(0.3240271368,
                                                              abs=1e-9)


def test_csv_output_is_written_to_file(tmp_path, capsys):
    out_file = tmp_path / "paths.csv"
    code, out, _ = run(["simulate", "--paths", "3", "--steps", "16",
                        "--format", "csv", "--out", str(out_file)], capsys)
    assert code == 0
    text = out_file.read_text()
    assert text.splitlines()[0] == "t,mean,sd,path0"
    assert len(text.splitlines()) == 18  # header + 17 nodes
    assert out.splitlines()[0] == "t,mean,sd,path0"


def test_unknown_config_key_is_exit_two(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus=1\n")
    code, _, err = run(["characteristic", "--config", str(cfg)], capsys)
    assert code == 2
    assert "unknown config key" in err


def test_bad_value_is_exit_two(capsys):
    code, _, err = run(["characteristic", "--points", "lots"], capsys)
    assert code == 2
    assert "error" in err


def test_nonpositive_workers_is_exit_two(capsys):
    code, _, err = run(["characteristic", "--workers", "0"], capsys)
    assert code == 2
    assert "--workers" in err


def test_cli_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("points=5\n")
    code, out, _ = run(["characteristic", "--config", str(cfg),
                        "--points", "9"], capsys)
    assert code == 0
    # the digest must reflect the overridden value, not the file's
    payload = json.loads(out.strip().splitlines()[0])
    code2, out2, _ = run(["characteristic", "--points", "9"], capsys)
    assert json.loads(out2.strip().splitlines()[0])["config"] == payload["config"]


def test_failing_bound_is_exit_one(capsys):
    # near the pins the Gaussian tail bound drops below any Wilson upper
    # limit the budget can certify, so this cell must fail
    code, out, err = run(["concentration", "--t", "0.9", "--budget", "20000"],
                         capsys)
    assert code == 1
    payloads = [json.loads(line) for line in out.strip().splitlines()]
    assert any(p["verdict"] == "fail" for p in payloads)
    assert "FAIL" in err


def test_solver_breakdown_is_exit_three(monkeypatch, capsys):
    def broken(cfg):
        raise SolverError("synthetic breakdown")

    claim, schema, _ = cli.EXPERIMENTS["project"]
    monkeypatch.setitem(cli.EXPERIMENTS, "project", (claim, schema, broken))
    code, _, err = run(["project"], capsys)
    assert code == 3
    assert "SolverError" in err


def test_gradient_observable_flag(capsys):
    code, out, _ = run(["gradient", "--f", "tanh", "--budget", "512"], capsys)
    assert code == 0
    payload = json.loads(out.strip().splitlines()[0])
    assert payload["verdict"] == "pass"


def test_project_subcommand_reports_oracle_gap(capsys):
    code, out, _ = run(["project", "--S", "2", "--N", "2", "--cost", "square"],
                       capsys)
    assert code == 0
    payload = json.loads(out.strip().splitlines()[0])
    assert payload["measured"]["oracle_gap"] <= 1e-6
    assert payload["measured"]["endpoint_residual"] <= 1e-8


def test_no_subcommand_prints_help_and_exits_two(capsys):
    code, out, _ = run([], capsys)
    assert code == 2
    assert "usage" in out.lower()
