import json

import pytest
from click.testing import CliRunner

from seal_kd.cli.main import cli
from seal_kd.utils.io_utils import read_json, read_jsonl


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, config, *args):
    return runner.invoke(cli, ["-c", str(config), *args], obj={})


def test_help_lists_commands_and_config_keys(runner):
    result = runner.invoke(cli, ["--help"], obj={})
    assert result.exit_code == 0
    for command in ("gen-data", "train-teacher", "train-student", "eval", "diagnose", "energy"):
        assert command in result.output
    assert "distill:" in result.output and "beta_sta=0.15" in result.output


def test_validate_command(runner, tiny_config):
    result = _invoke(runner, tiny_config(), "validate")
    assert result.exit_code == 0
    assert "✅" in result.output
    bad = _invoke(runner, tiny_config(network={"timesteps": 1}, distill={"method": "seal"}), "validate")
    assert bad.exit_code == 1
    assert "timesteps >= 2" in bad.output


def test_full_pipeline(runner, tiny_config, tmp_path):
    config = tiny_config()
    for command in (["gen-data"], ["train-teacher"], ["train-student"], ["eval", "--split", "test"],
                    ["diagnose"], ["energy"]):
        result = _invoke(runner, config, *command)
        assert result.exit_code == 0, result.output
        assert "✅" in result.output

    run = tmp_path / "run"
    expected = {
        "train.csv", "test.csv", "manifest.json",
        "teacher_checkpoint.json", "teacher_logits_train.jsonl", "teacher_logits_test.jsonl", "teacher_metrics.jsonl",
        "student_epoch_0001.json", "student_checkpoint.json", "metrics.jsonl", "run_config.json",
        "eval_test.json", "diagnostics.jsonl", "heatmap.csv", "energy.json",
    }
    assert {p.name for p in run.iterdir()} == expected

    manifest = read_json(run / "manifest.json")
    assert manifest["classes"] == 3 and manifest["dim"] == 4
    assert manifest["splits"]["train"]["samples"] == 36
    metrics = read_jsonl(run / "metrics.jsonl")
    assert [m["epoch"] for m in metrics] == [1, 2]
    assert set(metrics[0]["terms"]) == {"cls", "ela", "sta"}
    evaluation = read_json(run / "eval_test.json")
    assert len(evaluation["per_timestep_accuracy"]) == 2
    assert read_jsonl(run / "diagnostics.jsonl")[-1]["record"] == "temporal_accuracy"

    energy = read_json(run / "energy.json")
    assert energy["sop_pj"] == pytest.approx(energy["e_ac"] * energy["acs"] + energy["e_mac"] * energy["macs"])
    assert energy["ann_reference"]["macs"] == 4 * 8 + 8 * 3


def test_gen_data_is_byte_identical(runner, tiny_config, tmp_path):
    config = tiny_config()
    assert _invoke(runner, config, "gen-data").exit_code == 0
    first = {name: (tmp_path / "run" / name).read_bytes() for name in ("train.csv", "test.csv", "manifest.json")}
    assert _invoke(runner, config, "gen-data").exit_code == 0
    second = {name: (tmp_path / "run" / name).read_bytes() for name in first}
    assert first == second


def test_invalid_spec_writes_nothing(runner, tiny_config, tmp_path):
    result = _invoke(runner, tiny_config(data={"spread": 0.0}), "gen-data")
    assert result.exit_code == 1
    assert "❌" in result.output
    assert not (tmp_path / "run").exists()


def test_unknown_key_is_reported(runner, tiny_config):
    result = _invoke(runner, tiny_config(plan={"epochz": 3}), "gen-data")
    assert result.exit_code == 1
    assert "plan.epochz" in result.output


def test_teacher_methods_need_teacher_logits(runner, tiny_config, tmp_path):
    config = tiny_config()
    assert _invoke(runner, config, "gen-data").exit_code == 0
    result = _invoke(runner, config, "train-student")
    assert result.exit_code == 1
    assert "train-teacher" in result.output
    assert not (tmp_path / "run" / "student_checkpoint.json").exists()

    result = _invoke(runner, config, "--method", "ce-only", "train-student")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "run" / "student_checkpoint.json").exists()


def test_student_commands_need_data(runner, tiny_config):
    result = _invoke(runner, tiny_config(), "--method", "ce-only", "train-student")
    assert result.exit_code == 1
    assert "gen-data" in result.output


def test_diagnose_rejects_mismatched_checkpoint(runner, tiny_config):
    config = tiny_config(distill={"method": "uta"})
    assert _invoke(runner, config, "gen-data").exit_code == 0
    assert _invoke(runner, config, "train-student").exit_code == 0
    widened = tiny_config(distill={"method": "uta"}, network={"hidden": [7]})
    result = _invoke(runner, widened, "diagnose")
    assert result.exit_code == 1
    assert "checkpoint" in result.output


def test_diagnose_is_deterministic(runner, tiny_config, tmp_path):
    config = tiny_config(distill={"method": "sta"})
    assert _invoke(runner, config, "gen-data").exit_code == 0
    assert _invoke(runner, config, "train-student").exit_code == 0
    outputs = []
    for _ in range(2):
        assert _invoke(runner, config, "diagnose").exit_code == 0
        outputs.append((tmp_path / "run" / "diagnostics.jsonl").read_bytes())
    assert outputs[0] == outputs[1]
    records = [json.loads(line) for line in outputs[0].decode("utf-8").splitlines()]
    assert all(r["method"] == "sta" for r in records if r["record"] == "layer_stat")


def test_heatmap_index_out_of_range(runner, tiny_config, tmp_path):
    config = tiny_config(distill={"method": "ce-only"}, diagnostics={"samples": 2, "heatmap_sample": 500})
    assert _invoke(runner, config, "gen-data").exit_code == 0
    assert _invoke(runner, config, "train-student").exit_code == 0
    result = _invoke(runner, config, "diagnose")
    assert result.exit_code == 1
    assert not (tmp_path / "run" / "diagnostics.jsonl").exists()
