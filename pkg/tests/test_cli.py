import csv
import sys
from pathlib import Path
from unittest.mock import patch

import pytest
import yaml

from voipomdp.cli import PlannerCLI, RunConfig, parse_grid, parse_root, run
from voipomdp.errors import ModelValidationError
from voipomdp.modelfile import read_model_file

MODELS = Path(__file__).resolve().parent.parent / "models"

PUMP = """\
name: pump
discount: 0.9
states: [good, worn]
maintenance_actions: [run, repair]
observation_actions:
  - name: none
  - name: inspect
    observations: [ok, alarm]
    cost: -0.5
    model: [[0.9, 0.1], [0.1, 0.9]]
transition:
  run: [[0.8, 0.2], [0.0, 1.0]]
  repair: [[1.0, 0.0], [1.0, 0.0]]
rewards:
  maintenance: {repair: -6.0}
  damage: [0.0, -4.0]
"""


def _argv(tmp_path, *args):
    return ["--log-file", str(tmp_path / "test.log"), *args, "--out", str(tmp_path), "--threads", "1"]


def test_parser_defaults():
    """
    Solver and rollout options fall back to their documented defaults.
    """
    parser = PlannerCLI().get_parser()
    args = parser.parse_args(["solve", "--model", "m.yaml"])
    assert args.solver == "gap"
    assert args.epsilon == 0.01
    assert args.max_iterations == 1000
    assert args.max_seconds is None
    assert args.horizon is None
    assert args.log_file == "voipomdp.log"
    assert args.verbose is False


def test_parser_environment(monkeypatch):
    """
    VOIPOMDP_* variables provide defaults; flags still win.
    """
    monkeypatch.setenv("VOIPOMDP_EPSILON", "0.5")
    monkeypatch.setenv("VOIPOMDP_SOLVER", "perseus")
    parser = PlannerCLI().get_parser()
    args = parser.parse_args(["solve", "--model", "m.yaml"])
    assert args.epsilon == 0.5
    assert args.solver == "perseus"
    args = parser.parse_args(["solve", "--model", "m.yaml", "--epsilon", "0.1"])
    assert args.epsilon == 0.1


def test_log_file_argument():
    """
    The log file is configurable before the subcommand.
    """
    parser = PlannerCLI().get_parser()
    args = parser.parse_args(["--log-file", "run.log", "-v", "sweep"])
    assert args.log_file == "run.log"
    assert args.verbose is True
    assert args.grid == "0.50:1.00:0.05"


def test_run_config_validation():
    """
    Out-of-range settings are rejected before any work starts.
    """
    with pytest.raises(ModelValidationError):
        RunConfig(episodes=1).validate()
    with pytest.raises(ModelValidationError):
        RunConfig(confidence=1.0).validate()
    with pytest.raises(ModelValidationError):
        RunConfig(epsilon=-1.0).validate()
    RunConfig().validate()


def test_parse_grid():
    """
    Grids are inclusive ranges or explicit lists.
    """
    grid = parse_grid("0.50:1.00:0.05")
    assert len(grid) == 11
    assert grid[0] == 0.5 and grid[-1] == 1.0
    assert parse_grid("0.6, 0.9") == [0.6, 0.9]
    with pytest.raises(ModelValidationError):
        parse_grid("1:0:-0.1")
    with pytest.raises(ModelValidationError):
        parse_grid("a,b")


def test_parse_root(machine_model):
    """
    Root beliefs are comma-separated probabilities, the model's start by default.
    """
    assert parse_root("0.25,0.75", machine_model).probs.tolist() == [0.25, 0.75]
    assert parse_root(None, machine_model).probs.tolist() == [1.0, 0.0]
    with pytest.raises(ModelValidationError):
        parse_root("half,half", machine_model)


@pytest.mark.asyncio
async def test_solve_writes_outputs(tmp_path, capsys):
    """
    Solving the single-state model writes a one-row convergence file and a
    bounds archive.
    """
    code = await PlannerCLI().main(_argv(tmp_path, "solve", "--model", str(MODELS / "single_state.yaml")))
    assert code == 0
    with open(tmp_path / "single_state-convergence.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 1
    assert float(rows[0]["lower"]) == pytest.approx(-20.0)
    assert (tmp_path / "single_state-bounds.npz").exists()
    assert "single-state: lower=-20" in capsys.readouterr().out


@pytest.mark.asyncio
async def test_solve_budget_exhausted(tmp_path):
    """
    A solve that runs out of iterations still writes its bounds and exits 3.
    """
    model = tmp_path / "pump.yaml"
    model.write_text(PUMP)
    argv = _argv(tmp_path, "solve", "--model", str(model), "--max-iterations", "1", "--epsilon", "1e-9")
    code = await PlannerCLI().main(argv)
    assert code == 3
    assert (tmp_path / "pump-bounds.npz").exists()
    assert (tmp_path / "pump-convergence.csv").exists()


@pytest.mark.asyncio
async def test_metrics_report(tmp_path):
    """
    The VoPI of a fully observed single state is zero.
    """
    code = await PlannerCLI().main(
        _argv(tmp_path, "metrics", "--model", str(MODELS / "single_state.yaml"), "--metric", "vopi")
    )
    assert code == 0
    document = yaml.safe_load((tmp_path / "single_state-vopi.yaml").read_text())
    assert document["metrics"][0]["name"] == "vopi"
    assert abs(document["metrics"][0]["value"]) < 1e-6


@pytest.mark.asyncio
async def test_rvoci_metric(tmp_path):
    """
    RVoCI of the inspection channel is reported with its error budget.
    """
    model = tmp_path / "pump.yaml"
    model.write_text(PUMP)
    code = await PlannerCLI().main(
        _argv(tmp_path, "metrics", "--model", str(model), "--metric", "rvoci", "--observation-action", "inspect")
    )
    assert code == 0
    metric = yaml.safe_load((tmp_path / "pump-rvoci.yaml").read_text())["metrics"][0]
    assert metric["value"] >= -metric["uncertainty"]
    assert [s["setting"] for s in metric["settings"]] == ["pump", "pump"]


@pytest.mark.asyncio
async def test_simulate_baseline(tmp_path):
    """
    Simulating the do-nothing baseline of the single-state model returns -20.
    """
    argv = _argv(
        tmp_path, "simulate", "--model", str(MODELS / "single_state.yaml"), "--policy", "do-nothing", "--episodes", "20", "--trace"
    )
    code = await PlannerCLI().main(argv)
    assert code == 0
    with open(tmp_path / "single_state-rollout.csv", newline="") as handle:
        row = next(csv.DictReader(handle))
    assert float(row["mean"]) == pytest.approx(-20.0, abs=0.01)
    assert (tmp_path / "single_state-trace.csv").exists()


@pytest.mark.asyncio
async def test_simulate_from_bounds(tmp_path):
    """
    A bounds archive written by solve drives the greedy policy.
    """
    model = tmp_path / "pump.yaml"
    model.write_text(PUMP)
    assert await PlannerCLI().main(_argv(tmp_path, "solve", "--model", str(model))) in (0, 3)
    argv = _argv(
        tmp_path, "simulate", "--model", str(model), "--policy", str(tmp_path / "pump-bounds.npz"), "--episodes", "50"
    )
    assert await PlannerCLI().main(argv) == 0
    assert (tmp_path / "pump-rollout.csv").exists()


@pytest.mark.asyncio
async def test_convert(tmp_path):
    """
    The plain-text machine converts to an equivalent model file.
    """
    target = tmp_path / "machine.yaml"
    code = await PlannerCLI().main(
        ["--log-file", str(tmp_path / "test.log"), "convert", str(MODELS / "machine.pomdp"), str(target)]
    )
    assert code == 0
    converted = read_model_file(target)
    assert converted.maintenance_actions == ("run", "repair")
    assert converted.default_observations == ("ok", "alarm")


def test_run_maps_validation_errors(tmp_path):
    """
    A malformed model exits with code 2.
    """
    model = tmp_path / "broken.yaml"
    model.write_text(PUMP.replace("[0.8, 0.2]", "[0.8, 0.3]"))
    argv = ["voipomdp", *_argv(tmp_path, "solve", "--model", str(model))]
    with patch.object(sys, "argv", argv):
        with pytest.raises(SystemExit) as info:
            run()
    assert info.value.code == 2


def test_run_maps_incompatible_settings(tmp_path):
    """
    Comparing settings with different states exits with code 4.
    """
    argv = [
        "voipomdp",
        *_argv(
            tmp_path,
            "metrics",
            "--model",
            str(MODELS / "three_component.yaml"),
            "--model2",
            str(MODELS / "single_state.yaml"),
            "--metric",
            "voshm",
        ),
    ]
    with patch.object(sys, "argv", argv):
        with pytest.raises(SystemExit) as info:
            run()
    assert info.value.code == 4


@pytest.mark.asyncio
async def test_sweep_writes_one_row_per_accuracy(tmp_path):
    """
    A short sweep writes the header and one consistent row per grid point,
    even when the solves stop on their iteration budget.
    """
    argv = _argv(tmp_path, "sweep", "--grid", "0.9,1.0", "--epsilon", "50", "--max-iterations", "3")
    code = await PlannerCLI().main(argv)
    assert code in (0, 3)
    with open(tmp_path / "sweep.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [float(row["p"]) for row in rows] == [0.9, 1.0]
    for row in rows:
        v1, v2, v_blind, v_mdp = (float(row[key]) for key in ("v1", "v2", "v_blind", "v_mdp"))
        assert max(v1, v2, v_blind) <= v_mdp + 1e-6
        assert float(row["voi1"]) == pytest.approx(v1 - v_blind)
        assert float(row["voi2"]) == pytest.approx(v2 - v_blind)
        assert float(row["voshm"]) == pytest.approx(v2 - v1)


@pytest.mark.asyncio
async def test_simulate_output_is_bit_identical(tmp_path):
    """
    Two runs with the same seed write byte-for-byte identical rollout files,
    whatever the thread count.
    """
    outputs = []
    for threads in ("1", "3"):
        out = tmp_path / f"threads-{threads}"
        argv = [
            "--log-file", str(tmp_path / "test.log"),
            "simulate", "--model", str(MODELS / "three_component_condition.yaml"), "--policy", "condition:3",
            "--episodes", "300", "--seed", "11", "--out", str(out), "--threads", threads,
        ]
        assert await PlannerCLI().main(argv) == 0
        outputs.append((out / "three_component_condition-rollout.csv").read_bytes())
    assert outputs[0] == outputs[1]
