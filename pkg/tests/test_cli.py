"""Tests the command line interface."""

import argparse
import json
import subprocess
from pathlib import Path

import pytest
import yaml
from pytest import CaptureFixture

from avatar.talking.__main__ import (
    apply_updates,
    main,
    parse_override,
    read_config_file,
)
from avatar.talking._run_dir import RunDirectory
from avatar.talking.models.reports import MetricReport
from avatar.talking.models.run_config import RunConfig
from avatar.talking.synthetic.corpus import read_corpus_index


@pytest.fixture
def config_file(tmp_path: Path, tiny_config: RunConfig) -> Path:
    """``tiny_config`` written as JSON."""
    path = tmp_path / "config.json"
    path.write_text(tiny_config.model_dump_json(), encoding="utf-8")
    return path


def test_cli_help() -> None:
    """Sanity check on the module invocation."""
    output = subprocess.check_output(["python", "-m", "avatar.talking", "-h"])
    assert "talking-avatar" in str(output)


def test_parse_override() -> None:
    """Tests that values are parsed as JSON where they can be."""
    assert parse_override("sampler.steps=7") == ("sampler.steps", 7)
    assert parse_override("pose_mode.fixed=[0, 0.1, 0]") == (
        "pose_mode.fixed",
        [0, 0.1, 0],
    )
    assert parse_override("device=cpu") == ("device", "cpu")
    with pytest.raises(argparse.ArgumentTypeError, match="key=value"):
        parse_override("steps")


def test_read_config_file(tmp_path: Path) -> None:
    """Tests YAML and JSON configs, and missing or invalid files."""
    yml = tmp_path / "run.yml"
    yml.write_text(yaml.safe_dump({"seed": 5, "sampler": {"steps": 9}}))
    config = read_config_file(yml)
    assert config.seed == 5
    assert config.sampler.steps == 9

    with pytest.raises(FileNotFoundError, match="not found"):
        read_config_file(tmp_path / "missing.json")

    bad = tmp_path / "bad.json"
    bad.write_text('{"sampler": {"steps": "many"}}')
    with pytest.raises(ValueError, match="Invalid run configuration"):
        read_config_file(bad)


def test_apply_updates(tiny_config: RunConfig) -> None:
    """Tests dot-notation overrides."""
    updated = apply_updates(tiny_config, {"sampler.steps": 11, "seed": 3})
    assert updated.sampler.steps == 11
    assert updated.seed == 3
    assert tiny_config.sampler.steps == 4
    with pytest.raises(ValueError, match="Invalid configuration overrides"):
        apply_updates(tiny_config, {"sampler.steps": "many"})


def test_schema(capsys: CaptureFixture[str]) -> None:
    """Tests that the schema command prints the run config schema."""
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "sampler" in schema["properties"]


def test_init(
    tmp_path: Path, config_file: Path, capsys: CaptureFixture[str]
) -> None:
    """Tests that init writes the resolved config and refuses to overwrite."""
    run = tmp_path / "run"
    args = ["init", "--run", str(run), "--config", str(config_file), "--seed", "4"]
    assert main(args) == 0
    assert str(run) in capsys.readouterr().out

    config = RunDirectory(run).load_config()
    assert config.seed == 4
    assert config.sampler.seed == 4
    assert config.corpus.seed == 4
    assert config.shape.H == 32

    assert main(["init", "--run", str(run)]) == 1
    assert "error:" in capsys.readouterr().err


def test_corpus(
    tmp_path: Path, config_file: Path, capsys: CaptureFixture[str]
) -> None:
    """Tests that the corpus command writes one clip per identity."""
    out = tmp_path / "corpus"
    code = main(
        [
            "corpus",
            "--out",
            str(out),
            "--config",
            str(config_file),
            "--set",
            "corpus.n_identities=2",
        ]
    )
    assert code == 0
    assert "2 clips written" in capsys.readouterr().out
    assert len(read_corpus_index(out).clips) == 2


def test_missing_inputs_exit_with_error(
    tmp_path: Path, capsys: CaptureFixture[str]
) -> None:
    """Tests that expected failures are reported with exit code 1."""
    code = main(
        ["filter", "--corpus", str(tmp_path / "nowhere"), "--out", str(tmp_path)]
    )
    assert code == 1
    assert "Corpus index not found" in capsys.readouterr().err

    code = main(["generate", "--run", str(tmp_path / "run"), "--reference", "x"])
    assert code == 1
    assert "No run directory found" in capsys.readouterr().err


def test_train_generate_evaluate(
    tmp_path: Path,
    corpus_dir: Path,
    config_file: Path,
    capsys: CaptureFixture[str],
) -> None:
    """Tests the train, generate and evaluate commands on one run."""
    run = tmp_path / "run"
    code = main(
        [
            "train",
            "--run",
            str(run),
            "--corpus",
            str(corpus_dir),
            "--config",
            str(config_file),
        ]
    )
    assert code == 0
    assert "Trained the VAE for 3 steps" in capsys.readouterr().out

    reference = corpus_dir / read_corpus_index(corpus_dir).clips[0]
    frames = tmp_path / "frames"
    code = main(
        [
            "generate",
            "--run",
            str(run),
            "--reference",
            str(reference),
            "--out",
            str(frames),
            "--fixed-pose",
            "0",
            "0.1",
            "0",
        ]
    )
    assert code == 0
    assert "30 frames written" in capsys.readouterr().out
    assert (frames / "video.json").exists()

    code = main(["evaluate", "--run", str(run), "--corpus", str(corpus_dir)])
    assert code == 0
    capsys.readouterr()
    report = RunDirectory(run).read_json_model("reports/metrics.json", MetricReport)
    assert len(report.per_clip) == 3
    assert report.self_reconstruction is not None
