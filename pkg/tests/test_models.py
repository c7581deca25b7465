"""Tests for experiment configs, reports and manifests."""

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from lab.estimates import single_bound
from lab.geometry import BoxSpec, RectangleSpec
from lab.models.experiments import (
    GeometryAuditConfig,
    MSAStepConfig,
    RunManifest,
    WegnerConfig,
    config_adapter,
)
from lab.models.reports import EnsembleReport, TrialRecord
from tests.fixtures import make_config

SAMPLES = sorted((Path(__file__).parents[1] / "config" / "samples").glob("*.json"))

BOX = {"kind": "S", "center": [[0.0], [0.0]], "side": 4.0}


def test_samples_validate():
    """Test that every shipped sample config validates as its own kind."""
    assert len(SAMPLES) == 13
    for path in SAMPLES:
        config = config_adapter.validate_python(json.loads(path.read_text()))
        assert config.kind == path.stem


def test_wegner_sample_is_full_size():
    """Test that the Wegner sample is the 10^5-trial ensemble whose bound is 0.0512 at the smallest eps."""
    config = config_adapter.validate_python(json.loads((SAMPLES[0].parent / "wegner.json").read_text()))
    assert config.trials >= 100_000
    eps = min(config.eps_grid)
    side = config.box.side
    bound = single_bound(config.box.kind, 2, 1, config.model.effective_density_sup, eps, side)
    assert bound == pytest.approx(0.0512)


def test_dispatch_on_kind():
    """Test that the discriminator picks the config class."""
    config = config_adapter.validate_python(make_config("wegner", box=BOX, energy=1.0, eps_grid=[0.1]))
    assert isinstance(config, WegnerConfig)
    assert isinstance(config.box, BoxSpec)
    assert config.workers is None
    assert config.generator == "numpy.SeedSequence/Philox4x64"


def test_wegner_accepts_rectangles():
    """Test that the Wegner box may be a rectangle."""
    rect = {"symmetrized": True, "center": [[0.0], [10.0]], "sides": [3.0, 3.0]}
    config = config_adapter.validate_python(make_config("wegner", box=rect, energy=1.0, eps_grid=[0.1]))
    assert isinstance(config.box, RectangleSpec)


def test_unknown_kind():
    """Test that an unregistered kind is a validation error."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("nope"))


def test_extra_fields_rejected():
    """Test that misspelled fields are not silently ignored."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("wegner", box=BOX, energy=1.0, eps_grid=[0.1], epsgrid=[0.1]))


def test_eps_grid_must_be_positive():
    """Test that non-positive widths are rejected."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("wegner", box=BOX, energy=1.0, eps_grid=[0.1, 0.0]))
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("wegner", box=BOX, energy=1.0, eps_grid=[]))


def test_combes_thomas_eps_in_unit_interval():
    """Test that Combes-Thomas widths outside (0, 1) are rejected."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("ct", box=BOX, energy_range=[0.0, 1.0], eps_grid=[1.0]))


def test_trials_positive():
    """Test that zero trials are rejected."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("wegner", box=BOX, energy=1.0, eps_grid=[0.1], trials=0))


def test_decomposition_sides_on_half_integers():
    """Test that rectangle sides off the half-integer grid are rejected."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(make_config("ni-decompose", sides=[2.3, 3.0], energy=0.0))


def test_geometry_audit_side_range():
    """Test that side_range needs 1 <= lo <= hi."""
    assert GeometryAuditConfig(model={"lattice": {"n": 2, "d": 1}}).side_range == (2.0, 12.0)
    with pytest.raises(ValidationError):
        GeometryAuditConfig(model={"lattice": {"n": 2, "d": 1}}, side_range=(5.0, 3.0))


def test_msa_step_far_box_required():
    """Test that two-from-one and preregularity checks need a far box, and preregularity needs kappa."""
    base = {"model": {"lattice": {"n": 2, "d": 1}}, "box": BOX, "energy": -1.0, "ell": 3.0}
    with pytest.raises(ValidationError):
        MSAStepConfig(**base, checks=["two-from-one"])
    far = {"kind": "S", "center": [[0.0], [20.0]], "side": 6.0}
    with pytest.raises(ValidationError):
        MSAStepConfig(**base, checks=["preregularity"], far_box=far)
    config = MSAStepConfig(**base, checks=["step", "preregularity"], far_box=far, kappa=0.1)
    assert config.far_box.side == 6.0


def test_msa_recursion_schedule_validated():
    """Test that the nested schedule runs its own validators."""
    with pytest.raises(ValidationError):
        config_adapter.validate_python(
            make_config("msa-recursion", schedule={"variant": "first", "initial_side": 4.0}, energy=0.0)
        )


def test_ensemble_report_verdicts():
    """Test PASS when the lower interval end stays below the bound, and DIAGNOSTIC without a bound."""
    records = [TrialRecord(trial=i, seed=i, statistic=1.0, hit=i < 2) for i in range(10)]
    passing = EnsembleReport.from_records("wegner", records, 0.5)
    assert passing.hits == 2
    assert passing.estimate == 0.2
    assert passing.verdict == "PASS"
    assert EnsembleReport.from_records("wegner", records, 1e-6).verdict == "FAIL"
    assert EnsembleReport.from_records("wegner", records, None).verdict == "DIAGNOSTIC"
    assert EnsembleReport.from_records("wegner", records, 2.0).vacuous


def test_report_dump_excludes_records():
    """Test that per-trial records stay out of the summary."""
    records = [TrialRecord(trial=0, seed=1, statistic=0.5, hit=False)]
    assert "records" not in EnsembleReport.from_records("wegner", records, 0.1).model_dump()


def test_manifest_rejects_unknown_fields():
    """Test the manifest schema."""
    manifest = {
        "kind": "wegner",
        "config": {},
        "config_sha256": "0" * 64,
        "code_version": "0.1.0",
        "generator": "numpy.SeedSequence/Philox4x64",
        "master_seed": 1,
        "trials": 2,
        "started_at": "2026-01-01T00:00:00+00:00",
        "finished_at": "2026-01-01T00:00:01+00:00",
        "outputs": {},
        "exit_code": 0,
    }
    assert RunManifest(**manifest).failures == []
    with pytest.raises(ValidationError):
        RunManifest(**manifest, extra="x")
