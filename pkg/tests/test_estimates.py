"""Tests for the Wegner, pair-Wegner, Combes-Thomas and probability-lemma checks."""

import math

import numpy as np
import pytest

from lab.errors import PreconditionError, ResonantEnergyError
from lab.estimates import (
    combes_thomas_bound,
    combes_thomas_check,
    enclosing_truncation_bound,
    independence_report,
    initial_scale_length,
    pair_bound,
    pair_independence,
    probability_lemma_check,
    probability_lemma_setup,
    probability_lemma_summary,
    single_bound,
    spectral_gap,
    wegner_constant,
    wegner_pair,
    wegner_single,
    wegner_sweep,
    wegner_trace,
)
from lab.geometry import enumerate_box
from tests.fixtures import make_box, make_field, make_model, make_path, make_rectangle, zero_field

# ==================== Constants ====================


def test_wegner_constants():
    """Test C_n = n, n*n!, n^(2n+1) for infinity-, S- and H-boxes."""
    assert wegner_constant("inf", 2) == 2
    assert wegner_constant("S", 2) == 4
    assert wegner_constant("S", 3) == 18
    assert wegner_constant("H", 2) == 32


def test_single_bound():
    """Test 2 C_n ||rho|| eps L^{nd} for an S-box of side 8."""
    assert single_bound("S", 2, 1, 1.0, 1e-4, 8) == pytest.approx(0.0512)


def test_pair_bound():
    """Test 16 ||rho|| eps L^{4d} at side 6."""
    assert pair_bound(1, 1.0, 1e-4, 6) == pytest.approx(2.0736)
    assert pair_bound(1, 1.0, 1e-5, 6) == pytest.approx(0.20736)


def test_initial_scale_length():
    """Test that L(eps) inverts the Wegner budget p0 = 2 C ||rho|| sqrt(eps) L^{(theta+2nd)/2}."""
    length = initial_scale_length(0.5, 4.0, 1.0, 1e-6, 2.0, 2, 1)
    assert 2 * 4.0 * math.sqrt(1e-6) * length ** ((2.0 + 4) / 2) == pytest.approx(0.5)


def test_spectral_gap():
    """Test min |x - y| over two spectra."""
    assert spectral_gap(np.array([0.0, 5.0]), np.array([7.0, 2.0])) == pytest.approx(2.0)
    assert math.isinf(spectral_gap(np.array([]), np.array([1.0])))


# ==================== Wegner ====================


def test_wegner_far_energy_never_hits():
    """Test that E far below the spectrum gives no hits and a passing, non-vacuous report."""
    box = make_box(center=((0,), (3,)), side=2)
    report = wegner_single(box, make_model(), -100.0, 1e-3, trials=5, seed=3)
    assert report.hits == 0
    assert report.verdict == "PASS"
    assert report.bound == pytest.approx(0.032)
    assert not report.vacuous
    assert all(r.statistic > 99 for r in report.records)


def test_wegner_sweep_is_monotone():
    """Test that hit counts never decrease with eps on one coupled ensemble."""
    box = make_box(center=((0,), (3,)), side=2)
    reports = wegner_sweep(box, make_model(), 3.0, [1e-3, 0.1, 1.0, 10.0], trials=6, seed=1)
    hits = [r.hits for r in reports]
    assert hits == sorted(hits)
    assert hits[-1] == 6
    assert reports[-1].vacuous


def test_wegner_sweep_rejects_negative_eps():
    """Test that negative widths raise PreconditionError."""
    with pytest.raises(PreconditionError):
        wegner_sweep(make_box(), make_model(), 0.0, [-0.1], trials=2, seed=1)


def test_wegner_independent_of_workers():
    """Test that the per-trial statistics do not depend on the worker count."""
    box = make_box(center=((0,), (3,)), side=2)
    serial = wegner_single(box, make_model(), 3.0, 0.1, trials=6, seed=9, workers=1)
    threaded = wegner_single(box, make_model(), 3.0, 0.1, trials=6, seed=9, workers=3)
    assert [r.statistic for r in serial.records] == [r.statistic for r in threaded.records]
    assert [r.seed for r in serial.records] == [r.seed for r in threaded.records]


def test_wegner_trace_counts_all_eigenvalues():
    """Test E tr chi_I(H) = |box| when I encloses the spectrum."""
    box = make_box(center=((0,),), side=4, kind="inf")
    report = wegner_trace(box, make_model(n=1), (0.0, 100.0), trials=3, seed=2)
    assert report.mean_count == 5.0
    assert report.bound == pytest.approx(400.0)
    assert report.passed


def test_wegner_trace_rejects_empty_interval():
    """Test that I = [b, a] with b >= a is rejected."""
    with pytest.raises(PreconditionError):
        wegner_trace(make_box(), make_model(), (1.0, 1.0), trials=1, seed=0)


# ==================== Pairs ====================


def test_wegner_pair_partially_separated():
    """Test a pair ensemble on partially separated rectangles."""
    a = make_rectangle(center=((0,), (10,)), sides=(3, 3))
    b = make_rectangle(center=((0,), (30,)), sides=(3, 3))
    report = wegner_pair(a, b, make_model(), 1e-5, trials=4, seed=5)
    assert report.params["separation"] == "partially"
    assert report.bound == pytest.approx(16 * 1e-5 * 3**4)
    assert report.trials == 4


def test_wegner_pair_rejects_unseparated():
    """Test that rectangles in the NEITHER class are rejected."""
    a = make_rectangle(center=((0,), (10,)), sides=(3, 3))
    with pytest.raises(PreconditionError):
        wegner_pair(a, a, make_model(), 1e-3, trials=1, seed=0)


def test_wegner_pair_needs_symmetrized_rectangles():
    """Test that plain rectangles are rejected."""
    a = make_rectangle(center=((0,), (1,)), sides=(3, 3), symmetrized=False)
    b = make_rectangle(center=((20,), (21,)), sides=(3, 3))
    with pytest.raises(PreconditionError):
        wegner_pair(a, b, make_model(), 1e-3, trials=1, seed=0)


def test_independence_needs_full_separation():
    """Test that partially separated rectangles are rejected by the independence check."""
    a = make_rectangle(center=((0,), (10,)), sides=(3, 3))
    b = make_rectangle(center=((0,), (30,)), sides=(3, 3))
    with pytest.raises(PreconditionError):
        pair_independence(a, b, make_model(), 3.0, 0.5, trials=2, seed=0)


def test_independence_report():
    """Test |corr| <= 3/sqrt(N) on decorrelated and on identical indicators."""
    a = np.array([1, 1, 0, 0] * 25, dtype=bool)
    b = np.array([1, 0, 1, 0] * 25, dtype=bool)
    good = independence_report(np.column_stack([a, b]))
    assert good.tolerance == pytest.approx(0.3)
    assert good.p_joint == pytest.approx(0.25)
    assert good.passed
    assert not independence_report(np.column_stack([a, a])).passed


def test_pair_independence_runs():
    """Test the full-separation independence ensemble end to end."""
    a = make_rectangle(center=((0,), (1,)), sides=(3, 3))
    b = make_rectangle(center=((20,), (21,)), sides=(3, 3))
    report = pair_independence(a, b, make_model(), 3.0, 0.5, trials=8, seed=4)
    assert report.trials == 8
    assert 0 <= report.p_joint <= min(report.p_a, report.p_b)


# ==================== Combes-Thomas ====================


def test_combes_thomas_holds(two_particle_model):
    """Test max |G| / bound <= 1 over every pair and eps."""
    region = enumerate_box(make_box(center=((0,), (3,)), side=4))
    field = make_field(two_particle_model, region)
    report = combes_thomas_check(region, field, two_particle_model, -3.0 + 0.0j)
    assert report.passed
    assert report.max_ratio <= 1
    assert report.eta > 3
    assert report.window_eta == pytest.approx(3.0)


def test_combes_thomas_with_imaginary_part(two_particle_model):
    """Test the bound for z off the real axis."""
    region = enumerate_box(make_box(center=((0,), (3,)), side=4))
    field = make_field(two_particle_model, region)
    assert combes_thomas_check(region, field, two_particle_model, 2.5 + 0.4j).passed


def test_combes_thomas_rejects_eps_outside_unit_interval(two_particle_model):
    """Test that eps = 1 raises PreconditionError."""
    region = enumerate_box(make_box(center=((0,), (3,)), side=2))
    field = make_field(two_particle_model, region)
    with pytest.raises(PreconditionError):
        combes_thomas_check(region, field, two_particle_model, -1.0, eps_grid=(0.5, 1.0))


def test_combes_thomas_rejects_resonant_z():
    """Test that z on the spectrum raises ResonantEnergyError."""
    region = make_path(side=2)
    with pytest.raises(ResonantEnergyError):
        combes_thomas_check(region, zero_field(region), make_model(n=1, coupling=0.0), 2.0)


# ==================== Probability lemma ====================


def test_probability_lemma_setup():
    """Test the default u, the enclosing box and the gamma precondition."""
    box = make_box(center=((0,), (3,)), side=4)
    setup = probability_lemma_setup(box, make_model(), 2.0, 0.1)
    assert setup.gamma == 3
    assert len(setup.big_region) == len(enumerate_box(box.with_side(16)))
    assert len(setup.big_region) > len(setup.region)
    assert np.all(setup.ks >= 0)
    with pytest.raises(PreconditionError):
        probability_lemma_setup(box, make_model(), 2.0, 0.1, gamma=2.0)


def test_probability_lemma_check():
    """Test both tail bounds and their constants on a small ensemble."""
    box = make_box(center=((0,), (3,)), side=4)
    report = probability_lemma_check(box, make_model(), 2.0, 0.1, [0.5, 1.0], trials=3, seed=6)
    assert report.p0 == pytest.approx(2.0)
    assert report.eps_term[0] == pytest.approx(2**1.5 * 4 * math.sqrt(0.2) * 16)
    assert all(0 <= p <= 1 for p in report.lhs_complex)
    assert report.passed


def test_enclosing_truncation_bound_shrinks_with_enlargement():
    """Test the truncation bound on a path: two boundary edges at l1 distance 1, then 9."""
    box = make_box(center=((0,),), side=4, kind="inf")
    near = probability_lemma_setup(box, make_model(n=1), 2.0, 0.5, enlargement=2)
    far = probability_lemma_setup(box, make_model(n=1), 2.0, 0.5, enlargement=6)
    assert near.truncation == pytest.approx(4 * combes_thomas_bound(0.5, 0.5, 1, 1))
    assert far.truncation == pytest.approx(4 * combes_thomas_bound(0.5, 0.5, 1, 9))
    assert far.truncation < near.truncation
    assert enclosing_truncation_bound(far.big_region, far.ks, 0.5) == far.truncation


def test_probability_lemma_rhs_includes_truncation():
    """Test that both right-hand sides add the truncation bound to the boundary mean."""
    box = make_box(center=((0,),), side=4, kind="inf")
    setup = probability_lemma_setup(box, make_model(n=1), 2.0, 0.5, enlargement=2)
    k = len(setup.ks)
    rows = [(0.1, 0.1, np.full(k, 0.2)), (0.3, 0.3, np.full(k, 0.4))]
    report = probability_lemma_summary(setup, rows, [1.0])
    scale = 4.0**4
    assert report.sup_mean_green == pytest.approx(0.3)
    assert report.truncation_term == setup.truncation
    assert report.p0 == pytest.approx(0.5)
    assert report.rhs_complex[0] == pytest.approx(4 * scale * (0.3 + setup.truncation) + 0.5)
    assert report.rhs_real[0] == pytest.approx(8 * scale * (0.3 + setup.truncation) + report.eps_term[0] + 0.5)
