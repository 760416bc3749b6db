from pathlib import Path

import pytest
from typer.testing import CliRunner

from mmforge.cli import cli
from mmforge.cli.__cli__ import exit_code_for
from mmforge.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataError,
    IntegrityError,
    NumericError,
    PipelineStepError,
    TrainingDivergedError,
)
from mmforge.models import TrainingHistory

runner = CliRunner()


def test_help_lists_commands() -> None:
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("preprocess", "train", "evaluate", "ablate", "forecast"):
        assert command in result.output


@pytest.mark.parametrize(
    ("error", "code"),
    [
        (DataError("x"), 2),
        (IntegrityError(["gap"]), 2),
        (ConfigurationError("x"), 2),
        (CheckpointError("x"), 2),
        (NumericError("x"), 1),
        (TrainingDivergedError("x", TrainingHistory(mode="plain")), 1),
        (PipelineStepError("load", DataError("x")), 2),
        (PipelineStepError("normalize", NumericError("x")), 1),
    ],
)
def test_exit_codes(error: Exception, code: int) -> None:
    assert exit_code_for(error) == code


def test_synth_writes_raw_csv(tmp_path: Path) -> None:
    out = tmp_path / "synth"
    result = runner.invoke(
        cli,
        [
            "--output-dir",
            str(out),
            "--set",
            "synth.entities=2",
            "--set",
            "synth.length=10",
            "synth",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "Complete!" in result.output
    lines = (out / "raw.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 10
    assert (out / "config.resolved").is_file()


def test_non_empty_output_needs_force(tmp_path: Path) -> None:
    (tmp_path / "keep.txt").write_text("x")
    args = ["--output-dir", str(tmp_path), "--set", "synth.length=10", "synth"]
    assert runner.invoke(cli, args).exit_code == 2
    assert runner.invoke(cli, ["--force", *args]).exit_code == 0


def test_missing_input_file(tmp_path: Path) -> None:
    result = runner.invoke(
        cli,
        [
            "--output-dir",
            str(tmp_path / "out"),
            "preprocess",
            "--input",
            str(tmp_path / "absent.csv"),
        ],
    )
    assert result.exit_code == 2


def test_bad_override(tmp_path: Path) -> None:
    result = runner.invoke(
        cli, ["--output-dir", str(tmp_path), "--set", "model.nope=1", "synth"]
    )
    assert result.exit_code == 2
    assert "synth failed" in result.output


def test_missing_config_file(tmp_path: Path) -> None:
    result = runner.invoke(
        cli, ["--config", str(tmp_path / "absent.toml"), "synth"]
    )
    assert result.exit_code == 2


def test_train_without_data(tmp_path: Path) -> None:
    result = runner.invoke(cli, ["--output-dir", str(tmp_path), "train"])
    assert result.exit_code == 2
