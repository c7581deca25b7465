"""Tests for the brute-force geometry oracles and the audit experiment."""

import numpy as np

from lab.geometry import DistanceKind, Separation
from lab.harness import runner
from lab.harness.geometry_audit import (
    box_oracle_audit,
    cover_audit,
    distance_oracle_audit,
    metric_chain_audit,
    oracle_cube,
    oracle_distance2,
    oracle_separation,
    separation_audit,
)
from lab.models.experiments import config_adapter
from tests.fixtures import make_config, make_rectangle


def test_oracle_distances_on_swapped_pair():
    """Test that swapping two particles costs nothing in the symmetrized and Hausdorff distances."""
    a, b = ((0,), (4,)), ((4,), (0,))
    assert oracle_distance2(DistanceKind.INFINITY, a, b) == 4
    assert oracle_distance2(DistanceKind.SYMMETRIZED, a, b) == 0
    assert oracle_distance2(DistanceKind.HAUSDORFF, a, b) == 0


def test_oracle_cube():
    """Test integer points within side/2 of a half-integer center."""
    assert oracle_cube((0.5,), 2) == {(0,), (1,)}
    assert len(oracle_cube((0, 0), 2)) == 9


def test_oracle_separation():
    """Test the three separation classes from explicit cube sets."""
    near = make_rectangle(center=((0,), (10,)), sides=(3, 3))
    assert oracle_separation(near, make_rectangle(center=((40,), (50,)), sides=(3, 3))) is Separation.FULLY
    assert oracle_separation(near, make_rectangle(center=((0,), (30,)), sides=(3, 3))) is Separation.PARTIALLY
    assert oracle_separation(near, near) is Separation.NEITHER


def test_metric_chain():
    """Test H <= S <= inf on a full grid, with H == S for two particles."""
    result = metric_chain_audit(2, 2, 1)
    assert result["configurations"] == 25
    assert result["violations"] == 0
    assert result["n2_mismatches"] == 0


def test_metric_chain_skips_large_grids():
    """Test that grids above the exhaustive limit are skipped."""
    assert metric_chain_audit(6, 3, 2)["skipped"]


def test_random_oracles_agree():
    """Test distances, boxes, covers and separation classes against their oracles."""
    rng = np.random.default_rng(0)
    assert distance_oracle_audit(rng, 50, 3, 3, 1)["mismatches"] == 0
    assert box_oracle_audit(rng, 2, 2, 1)["mismatches"] == 0
    covers = cover_audit(rng, 2, 1, (3.0, 9.0))
    assert covers["checked"] == 2
    assert covers["failures"] == 0
    assert separation_audit(rng, 50, 3, 1)["mismatches"] == 0


def test_audit_run_passes(tmp_path):
    """Test a small geometry audit end to end."""
    config = config_adapter.validate_python(
        make_config(
            "geometry-audit",
            trials=3,
            coordinate_range=2,
            max_particles=2,
            random_pairs=50,
            oracle_boxes=1,
            cover_boxes=1,
            separation_pairs=20,
            output_dir=str(tmp_path),
        )
    )
    outcome = runner.run(config)
    assert outcome.exit_code == 0
    assert outcome.result.summary["boundary_lemma"]["boxes"] == 3
