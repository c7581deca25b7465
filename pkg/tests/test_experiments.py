"""End-to-end runs of the shipped sample configs, cut down to a few trials."""

import json
from pathlib import Path

import pytest

from lab.harness import runner
from lab.models.experiments import config_adapter

SAMPLES = Path(__file__).parents[1] / "config" / "samples"

# Smaller boxes where the shipped sample is sized for a full run.
SHRINK = {
    "msa-step": {
        "box": {"kind": "S", "center": [[0.0], [20.0]], "side": 12.0},
        "verdict": "ses",
        "params": {},
    },
}

EXACT = ["ct", "ni-decompose", "resolvent-identity", "identity-check", "msa-step"]
STATISTICAL = ["wegner", "wegner-pair", "prob-lemma", "transport", "correlator"]
DIAGNOSTIC = ["msa-recursion", "event-R"]


def sample(kind: str, tmp_path, trials: int = 3):
    data = json.loads((SAMPLES / f"{kind}.json").read_text())
    data.update(SHRINK.get(kind, {}))
    data.update(trials=trials, output_dir=str(tmp_path))
    return config_adapter.validate_python(data)


@pytest.mark.parametrize("kind", EXACT + STATISTICAL + DIAGNOSTIC)
def test_sample_runs(kind, tmp_path):
    """Test that each sample kind runs to a passing manifest with its summary."""
    outcome = runner.run(sample(kind, tmp_path))
    assert outcome.exit_code == 0
    assert outcome.manifest.kind == kind
    assert {"trials.csv", "summary.json", "verdicts.jsonl"} <= set(outcome.manifest.outputs)
    rows = (outcome.run_dir / "trials.csv").read_text().splitlines()
    assert len(rows) == 4
    summary = json.loads((outcome.run_dir / "summary.json").read_text())
    assert summary["master_seed"] == outcome.manifest.master_seed


@pytest.mark.parametrize("kind", ["transport", "correlator", "prob-lemma", "msa-recursion"])
def test_series_written(kind, tmp_path):
    """Test that kinds with a curve write series.csv."""
    outcome = runner.run(sample(kind, tmp_path))
    assert "series.csv" in outcome.manifest.outputs


@pytest.mark.parametrize("kind", ["ni-decompose", "resolvent-identity", "ct"])
def test_replay_exact_kinds(kind, tmp_path):
    """Test that replaying a trial of an exact check regenerates its archived row."""
    outcome = runner.run(sample(kind, tmp_path))
    assert runner.replay(outcome.run_dir / "manifest.json", 1).matches_archive
