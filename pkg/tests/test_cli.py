"""
Tests for the flemvi command line
"""

import json
import math
from pathlib import Path

import pandas as pd
import pytest

from cli.main import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main

MINIMAL_CONFIG = Path(__file__).parent.parent / "data" / "configs" / "minimal.json"


def test_parser_subcommands():
    """Test argument parsing and defaults"""
    args = build_parser().parse_args(["verify", "--preset", "fixed_point", "--seed", "3"])
    assert args.command == "verify"
    assert args.suite == "all"
    assert args.seed == 3
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["verify", "--suite", "bogus"])
    assert exc.value.code == 2


def test_presets_command(clean_env, capsys):
    """Test listing presets"""
    assert main(["presets"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "fixed_point" in out and "rectangle" in out


def test_simulate_writes_artifacts(clean_env):
    """Test trajectory, jump log and manifest from the minimal config"""
    out = clean_env / "sim"
    assert main(["simulate", "--config", str(MINIMAL_CONFIG), "--out", str(out)]) == EXIT_OK
    frame = pd.read_csv(out / "trajectory.csv")
    assert list(frame.columns) == ["time", "h_1", "h_1*h_2", "jump_count"]
    assert len(frame) == 11
    assert frame["time"].iloc[-1] == pytest.approx(0.1)
    jumps = pd.read_csv(out / "jump_log.csv")
    assert len(jumps) == frame["jump_count"].iloc[-1]
    manifest = json.loads((out / "simulate_manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 7
    assert manifest["n"] == 10
    assert manifest["artifacts"] == ["final_config.csv", "initial_config.csv", "jump_log.csv", "trajectory.csv"]
    initial = pd.read_csv(out / "initial_config.csv")
    assert list(initial.columns) == ["x1", "boundary"]
    assert len(initial) == 10 and initial["boundary"].eq(0).all()


def test_simulate_is_byte_reproducible(clean_env):
    """Test that two runs with the same seed write identical files"""
    first, second = clean_env / "a", clean_env / "b"
    for out in (first, second):
        assert main(["simulate", "--config", str(MINIMAL_CONFIG), "--out", str(out), "--n", "4"]) == EXIT_OK
    for name in ("trajectory.csv", "jump_log.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_simulate_rejects_zero_particles(clean_env):
    """Test that n = 0 is a configuration error"""
    code = main(["simulate", "--config", str(MINIMAL_CONFIG), "--out", str(clean_env), "--n", "0"])
    assert code == EXIT_CONFIG


def test_missing_inputs_are_config_errors(clean_env):
    """Test exit code 2 for missing config and bad values"""
    assert main(["flow"]) == EXIT_CONFIG
    assert main(["flow", "--config", str(clean_env / "missing.json")]) == EXIT_CONFIG
    assert main(["flow", "--preset", "fixed_point", "--times", "-2"]) == EXIT_CONFIG
    assert main(["verify", "--preset", "fixed_point", "--jobs", "0"]) == EXIT_CONFIG


def test_bad_environment_is_config_error(clean_env, monkeypatch):
    """Test that unparsable FLEMVI_ values stop the run"""
    monkeypatch.setenv("FLEMVI_SEED", "abc")
    assert main(["flow", "--preset", "fixed_point"]) == EXIT_CONFIG


def test_flow_at_fixed_point(clean_env):
    """Test that the fixed point is stationary with z = exp(-t/2)"""
    out = clean_env / "flow"
    assert main(["flow", "--preset", "fixed_point", "--out", str(out)]) == EXIT_OK
    frame = pd.read_csv(out / "flow.csv")
    assert list(frame.columns[:4]) == ["component", "t", "z", "c_1"]
    assert frame["t"].tolist() == [0.0, 0.25, 0.5, 1.0]
    for _, row in frame.iterrows():
        assert row["z"] == pytest.approx(math.exp(-row["t"] / 2.0), rel=1e-12)
    coeffs = frame.filter(like="c_")
    assert (coeffs.sub(coeffs.iloc[0], axis=1).abs().to_numpy() < 1e-12).all()
    assert (out / "flow_manifest.json").exists()


def test_flow_mixture_has_component_blocks(clean_env):
    """Test one block of rows per mixture component"""
    out = clean_env / "mix"
    assert main(["flow", "--preset", "mixture", "--out", str(out), "--times", "0", "0.5"]) == EXIT_OK
    frame = pd.read_csv(out / "flow.csv")
    assert frame["component"].tolist() == [0, 0, 1, 1]
    assert frame["z"].iloc[0] == pytest.approx(1.0)


def test_flow_environment_and_cli_precedence(clean_env, monkeypatch):
    """Test FLEMVI_OUT is used unless --out is given"""
    monkeypatch.setenv("FLEMVI_OUT", str(clean_env / "from_env"))
    assert main(["flow", "--preset", "fixed_point"]) == EXIT_OK
    assert (clean_env / "from_env" / "flow.csv").exists()
    assert main(["flow", "--preset", "fixed_point", "--out", str(clean_env / "from_cli")]) == EXIT_OK
    assert (clean_env / "from_cli" / "flow.csv").exists()


def test_unwritable_output_is_io_error(clean_env):
    """Test exit code 3 when the output directory is a file"""
    blocker = clean_env / "blocker"
    blocker.write_text("x")
    assert main(["flow", "--preset", "fixed_point", "--out", str(blocker)]) == EXIT_IO


def test_verify_identities(clean_env):
    """Test the deterministic identity suite end to end"""
    out = clean_env / "verify"
    code = main(["verify", "--preset", "fixed_point", "--suite", "identities", "--out", str(out), "--jobs", "1"])
    assert code == EXIT_OK
    report = json.loads((out / "verify_identities.json").read_text(encoding="utf-8"))
    assert report["seed"] == 20240501
    assert report["reports"]
    assert all(r["status"] == "PASS" for r in report["reports"])
    assert (out / "verify_manifest.json").exists()


def test_simulate_from_initial_configuration(clean_env):
    """Test --init restarts from a written final configuration"""
    first, second = clean_env / "first", clean_env / "second"
    assert main(["simulate", "--config", str(MINIMAL_CONFIG), "--out", str(first), "--n", "5"]) == EXIT_OK
    start = first / "final_config.csv"
    assert main(["simulate", "--config", str(MINIMAL_CONFIG), "--out", str(second), "--init", str(start)]) == EXIT_OK
    manifest = json.loads((second / "simulate_manifest.json").read_text(encoding="utf-8"))
    assert manifest["n"] == 5
    assert manifest["init"] == str(start)
    initial = pd.read_csv(second / "initial_config.csv")
    expected = pd.read_csv(start)
    assert initial["x1"].to_numpy() == pytest.approx(expected["x1"].to_numpy(), abs=0.0)


def test_simulate_initial_configuration_errors(clean_env):
    """Test exit codes for boundary atoms, count mismatch and missing files"""
    start = clean_env / "start.csv"
    pd.DataFrame({"x1": [0.5, 1.0, 2.0], "boundary": [0, 0, 0]}).to_csv(start, index=False)
    base = ["simulate", "--config", str(MINIMAL_CONFIG), "--out", str(clean_env / "out")]
    assert main(base + ["--init", str(start), "--n", "4"]) == EXIT_CONFIG
    with_boundary = clean_env / "boundary.csv"
    pd.DataFrame({"x1": [0.5, 0.0, 2.0], "boundary": [0, 1, 0]}).to_csv(with_boundary, index=False)
    assert main(base + ["--init", str(with_boundary)]) == EXIT_CONFIG
    outside = clean_env / "outside.csv"
    pd.DataFrame({"x1": [0.5, 4.0], "boundary": [0, 0]}).to_csv(outside, index=False)
    assert main(base + ["--init", str(outside)]) == EXIT_CONFIG
    assert main(base + ["--init", str(clean_env / "missing.csv")]) == EXIT_IO
