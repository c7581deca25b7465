"""Tests for OpenTelemetry metrics instrumentation in the harness."""

from unittest.mock import patch

from lab.hamiltonian import assemble
from lab.harness import runner
from lab.harness.experiments import WegnerExperiment
from lab.harness.pool import map_trials
from lab.models.experiments import config_adapter
from lab.spectral import eig
from lab.storage import FilesystemStore
from tests.fixtures import collected, make_config, make_field, make_model, make_path


def total(points) -> float:
    return sum(p.value for p in points)


def test_trial_metrics_recorded(metrics_reader):
    """Test completed and hit counters and the duration histogram per experiment."""
    map_trials(lambda i, s: {"hit": i % 2 == 0}, 4, 0, experiment="wegner")
    points = collected(metrics_reader)
    assert total(points["lab.trials.completed"]) == 4
    assert total(points["lab.trials.hits"]) == 2
    assert sum(p.count for p in points["lab.trial.duration"]) == 4
    assert points["lab.trials.completed"][0].attributes == {"experiment": "wegner"}


def test_trials_without_hit_flag(metrics_reader):
    """Test that results without a hit flag count as completed only."""
    map_trials(lambda i, s: s, 3, 0, experiment="plain")
    points = collected(metrics_reader)
    assert total(points["lab.trials.completed"]) == 3
    assert total(points.get("lab.trials.hits", [])) == 0


def test_eigensolve_duration_recorded(metrics_reader):
    """Test that dense eigensolves land in the size bucket histogram."""
    model = make_model(n=1)
    region = make_path(side=6)
    eig(assemble(region, make_field(model, region), model))
    points = collected(metrics_reader)["lab.eigensolve.duration"]
    assert sum(p.count for p in points) >= 1
    assert points[0].attributes == {"size_bucket": "le100"}


def test_artifact_counter(metrics_reader, tmp_path):
    """Test one artifact count per write, keyed by format."""
    store = FilesystemStore(tmp_path)
    store.write_json("a.json", {})
    store.write_text("b.txt", "")
    store.write_text("c.txt", "")
    by_format = {p.attributes["format"]: p.value for p in collected(metrics_reader)["lab.artifacts.written"]}
    assert by_format == {"json": 1, "txt": 2}


def test_assertion_failures_recorded(metrics_reader, output_dir):
    """Test that failed hard assertions are counted per check."""
    config = config_adapter.validate_python(
        make_config(
            "wegner",
            model={"lattice": {"n": 1, "d": 1}},
            box={"kind": "inf", "center": [[0.0]], "side": 2.0},
            energy=-100.0,
            eps_grid=[0.1],
            trials=2,
        )
    )
    with patch.object(WegnerExperiment, "check", return_value=["wegner", "wegner-monotone"]):
        runner.run(config)
    points = collected(metrics_reader)["lab.assertions.failed"]
    assert {p.attributes["check"] for p in points} == {"wegner", "wegner-monotone"}
    assert total(points) == 2
