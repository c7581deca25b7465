"""Tests for energy filters, transport moments and exponent fits."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from lab.errors import PreconditionError
from lab.geometry import DistanceKind
from lab.hamiltonian import DisorderField, assemble
from lab.spectral import eig
from lab.transport import (
    EnergyFilter,
    MomentSeries,
    TransportParams,
    amplitude,
    core_sites,
    filter_eval,
    fit_transport_exponents,
    free_amplitude,
    free_random_moment,
    free_time_avg_moment,
    growth_order_check,
    initial_condition_gate,
    moment_resolvent_identity_check,
    random_moment,
    smooth_step,
    time_avg_moment,
    time_avg_moment_quadrature,
    time_avg_moment_residue,
    translation_check,
)
from tests.fixtures import make_box, make_field, make_model, make_path, zero_field


def random_path(side: float = 6, seed: int = 7):
    model = make_model(n=1)
    region = make_path(side=side)
    return region, eig(assemble(region, make_field(model, region, seed=seed), model))


def synthetic_series(grid: list[float], values: list[float], p: float = 2.0) -> MomentSeries:
    return MomentSeries(
        mode="time_avg",
        p=p,
        grid=grid,
        ys=[(0,)],
        values=[values],
        ci_low=[values],
        ci_high=[values],
        sup_curve=values,
        trial_count=1,
    )


# ==================== Filters ====================


def test_smooth_step():
    """Test h = 0 below 0, 1 above 1 and 1/2 at the midpoint."""
    assert smooth_step(0.5) == pytest.approx(0.5)
    assert smooth_step(-1.0) == 0.0
    assert smooth_step(2.0) == 1.0


def test_filter_needs_plateau():
    """Test that a + width > b - width is rejected."""
    with pytest.raises(ValidationError):
        EnergyFilter(a=0.0, b=1.0, width=0.6)


def test_filter_for_interval():
    """Test g = 1 on I, 0 outside the support, 1/2 mid-transition."""
    g = EnergyFilter.for_interval(0.0, 10.0)
    assert float(g(0.0)) == pytest.approx(1.0)
    assert float(g(10.0)) == pytest.approx(1.0)
    assert float(g(-1.0)) == 0.0
    assert float(g(-0.5)) == pytest.approx(0.5)
    assert filter_eval(g, 5.0) == 1.0


# ==================== Moments ====================


def test_amplitude_at_time_zero():
    """Test that g(H) delta_y = delta_y when g = 1 on the spectrum."""
    region, spectral = random_path()
    g = EnergyFilter.covering(-1.0, 6.0)
    amp = amplitude(spectral, region, g, (1,), 0.0)
    expected = np.zeros(len(region))
    expected[region.index_of((1,))] = 1.0
    assert np.allclose(amp, expected, atol=1e-12)


def test_random_moment_at_time_zero():
    """Test M(p, g, 0, y) = 1 for a filter covering the spectrum."""
    region, spectral = random_path()
    g = EnergyFilter.covering(-1.0, 6.0)
    assert random_moment(spectral, region, g, (0,), TransportParams(p=2.0)) == pytest.approx(1.0)


def test_closed_form_matches_time_quadrature():
    """Test the kernel closed form against quadrature of the time average."""
    region, spectral = random_path()
    g = EnergyFilter.for_interval(1.0, 4.0)
    params = TransportParams(p=2.0, T=2.0)
    closed = time_avg_moment(spectral, region, g, (0,), params)
    assert closed == pytest.approx(time_avg_moment_quadrature(spectral, region, g, (0,), params), rel=1e-6)


def test_moment_resolvent_identity():
    """Test closed form, pole sum and resolvent energy quadrature agree."""
    region, spectral = random_path(side=10, seed=3)
    g = EnergyFilter.covering(-1.0, 6.0)
    report = moment_resolvent_identity_check(spectral, region, g, (0,), TransportParams(p=2.0, T=3.0))
    assert report.closed_vs_residue <= 1e-10
    assert report.passed


def test_residue_form_matches_dense_resolvent_solves():
    """Test the pole sum against (2i/T) sum_j <phi, (H - lambda_j + 2i/T)^{-1} W P_j phi> solved on the assembled H."""
    model = make_model(n=1)
    region = make_path(side=8)
    op = assemble(region, make_field(model, region, seed=5), model)
    spectral = eig(op)
    g = EnergyFilter.for_interval(1.0, 3.0)
    params = TransportParams(p=3.0, T=4.0)
    y = (1,)
    values, vectors = spectral.eigenvalues, spectral.eigenvectors
    iy = region.index_of(y)
    w = (1 + (region.flat[:, 0] - 1).astype(float) ** 2) ** 1.5
    phi = vectors @ (g(values) * vectors[iy])
    total = 0j
    for j, lam in enumerate(values):
        projected = g(lam) * vectors[iy, j] * vectors[:, j]
        solved = np.linalg.solve(op.dense - (lam - 2j / params.T) * np.eye(len(region)), phi)
        total += solved @ (w * projected)
    expected = (2j / params.T * total).real
    residue = time_avg_moment_residue(spectral, region, g, y, params)
    assert residue == pytest.approx(expected, rel=1e-10)
    assert residue == pytest.approx(time_avg_moment(spectral, region, g, y, params), rel=1e-10)


def test_residue_form_without_filtered_states():
    """Test that a filter vanishing on the spectrum gives a zero pole sum."""
    region, spectral = random_path()
    g = EnergyFilter(a=50.0, b=60.0, width=1.0)
    assert time_avg_moment_residue(spectral, region, g, (0,), TransportParams(p=2.0, T=2.0)) == 0.0


def test_free_moment_conserves_norm():
    """Test sum_x J_|x|(2t)^2 = 1."""
    assert free_random_moment(0.0, 3.0) == pytest.approx(1.0)


def test_finite_free_path_matches_bessel():
    """Test the free chain moment against a long Dirichlet path before the wave reaches the edge."""
    region = make_path(side=60)
    spectral = eig(assemble(region, zero_field(region), make_model(n=1, coupling=0.0)))
    g = EnergyFilter.covering(0.0, 4.0)
    params = TransportParams(p=2.0, t=2.0, kind=DistanceKind.INFINITY)
    finite = random_moment(spectral, region, g, (0,), params)
    assert finite == pytest.approx(free_random_moment(2.0, 2.0), rel=1e-8)


def test_finite_free_path_amplitudes():
    """Test e^{-itH} delta_0 on a long path against e^{-2it} i^|x| J_|x|(2t)."""
    region = make_path(side=60)
    spectral = eig(assemble(region, zero_field(region), make_model(n=1, coupling=0.0)))
    amp = amplitude(spectral, region, EnergyFilter.covering(0.0, 4.0), (0,), 2.0)
    xs = np.arange(-5, 6)
    finite = np.array([amp[region.index_of((int(x),))] for x in xs])
    assert np.allclose(finite, free_amplitude(xs, 2.0), atol=1e-8)


def test_free_time_average_at_order_zero():
    """Test that the p = 0 time average of the free chain is 1."""
    assert free_time_avg_moment(0.0, 2.0) == pytest.approx(1.0, rel=1e-8)


def test_core_sites():
    """Test that only sites within L/4 of the center are kept."""
    box = make_box(center=((0,),), side=8, kind="inf")
    region = make_path(side=8)
    assert sorted(core_sites(box, region)) == [(-2,), (-1,), (0,), (1,), (2,)]


# ==================== Exponents ====================


def test_fit_recovers_exponent():
    """Test beta-hat = 0.5 on M(T) = T^{p/2}."""
    grid = [1.0, 3.0, 10.0, 30.0, 100.0]
    fit = fit_transport_exponents(synthetic_series(grid, [t**1.0 for t in grid]), p=2.0)
    assert fit.beta_hat == pytest.approx(0.5)
    assert fit.beta_minus == pytest.approx(0.5)
    assert fit.beta_plus == pytest.approx(0.5)
    assert fit.within_unit_interval


def test_fit_rejects_degenerate_grid():
    """Test that fewer than 1.5 decades raise PreconditionError."""
    grid = [1.0, 2.0, 3.0, 4.0, 5.0]
    with pytest.raises(PreconditionError):
        fit_transport_exponents(synthetic_series(grid, grid), p=2.0)


def test_fit_rejects_zero_order():
    """Test that p = 0 raises PreconditionError."""
    grid = [1.0, 3.0, 10.0, 30.0, 100.0]
    with pytest.raises(PreconditionError):
        fit_transport_exponents(synthetic_series(grid, grid), p=0.0)


def test_growth_order_check():
    """Test polynomial growth against floor(p + nd) + 2."""
    times = [10.0, 20.0, 40.0]
    ok = growth_order_check(times, [t**2 for t in times], p=2.0, n=1, d=1)
    assert ok.order == 5
    assert ok.passed
    assert not growth_order_check(times, [t**10 for t in times], p=2.0, n=1, d=1).passed


def test_initial_condition_gate():
    """Test p > (theta + 2nd) alpha + 6 theta + 15nd with theta > 2nd."""
    assert initial_condition_gate(34.0, 0.0, 3.0, 1, 1)
    assert not initial_condition_gate(33.0, 0.0, 3.0, 1, 1)
    assert not initial_condition_gate(100.0, 0.0, 2.0, 1, 1)


def test_translation_covariance_on_torus():
    """Test M for the shifted field at the shifted site equals M at the original site."""
    field = DisorderField(1, 0, {(k,): math.sin(k + 1) ** 2 for k in range(5)})
    report = translation_check(
        5,
        field,
        make_model(n=1),
        EnergyFilter.covering(-1.0, 6.0),
        (1,),
        (2,),
        TransportParams(p=2.0, t=1.5, kind=DistanceKind.INFINITY),
    )
    assert report.passed
