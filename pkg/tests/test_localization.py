"""Tests for eigenfunction correlators, decay fits and Z/W weights."""

import math

import numpy as np
import pytest

from lab.errors import PreconditionError
from lab.hamiltonian import assemble
from lab.localization import (
    CorrelatorGrid,
    correlator,
    correlator_grid,
    correlator_matrix,
    decay_fit,
    dominance_check,
    eigen_clusters,
    guarded_pairs,
    zw_weights,
)
from lab.spectral import SpectralData, eig
from tests.fixtures import make_box, make_field, make_path


def localized_spectrum(values=(0.5, 1.5, 2.5)) -> SpectralData:
    """Eigenvectors are the site indicators."""
    return SpectralData(eigenvalues=np.array(values, dtype=float), eigenvectors=np.eye(len(values)))


def grid_from(distances: list[float], means: list[float]) -> CorrelatorGrid:
    return CorrelatorGrid(
        interval=(0.0, 1.0),
        distances=distances,
        mean_q=means,
        ci_low=means,
        ci_high=means,
        pair_counts=[1] * len(distances),
        trial_count=1,
    )


# ==================== Correlators ====================


def test_localized_eigenvectors_have_diagonal_correlator():
    """Test Q(x, y) = 0 for x != y and Q(x, x) = 1 inside I."""
    region = make_path(side=2)
    spectral = localized_spectrum()
    x, y = tuple(region.flat[1].tolist()), tuple(region.flat[2].tolist())
    assert correlator(spectral, region, (1.0, 2.0), x, x) == pytest.approx(1.0)
    assert correlator(spectral, region, (1.0, 2.0), x, y) == 0.0
    assert correlator(spectral, region, (3.0, 4.0), x, x) == 0.0


def test_degenerate_cluster_uses_projector():
    """Test that a rotated basis of a degenerate eigenspace gives the same Q."""
    c, s = math.cos(0.3), math.sin(0.3)
    rotated = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    values = np.array([1.0, 1.0, 2.0])
    plain = SpectralData(eigenvalues=values, eigenvectors=np.eye(3))
    turned = SpectralData(eigenvalues=values, eigenvectors=rotated)
    assert [len(cl) for cl in eigen_clusters(turned)] == [2, 1]
    q = correlator_matrix(turned, (0.0, 3.0))
    assert np.allclose(q, correlator_matrix(plain, (0.0, 3.0)))
    assert q[0, 1] == pytest.approx(1.0)
    assert q[0, 2] == pytest.approx(0.0)


def test_correlator_symmetric_with_norm_diagonal(one_particle_model):
    """Test Q(x, y) = Q(y, x) and Q(x, x) = sum of |psi_j(x)|^2 over I."""
    region = make_path(side=8)
    spectral = eig(assemble(region, make_field(one_particle_model, region), one_particle_model))
    q = correlator_matrix(spectral, (1.0, 3.0))
    assert np.allclose(q, q.T)
    inside = (spectral.eigenvalues >= 1.0) & (spectral.eigenvalues <= 3.0)
    assert np.allclose(np.diag(q), (spectral.eigenvectors[:, inside] ** 2).sum(axis=1))


def test_dominance(one_particle_model):
    """Test |<delta_x, f(H) chi_I(H) delta_y>| <= Q_I(x, y) for the test functions."""
    region = make_path(side=8)
    spectral = eig(assemble(region, make_field(one_particle_model, region), one_particle_model))
    report = dominance_check(spectral, region, (0.0, 5.0), (-1,), (2,))
    assert report.passed
    assert report.worst_value <= report.correlator + 1e-10


# ==================== Grids and fits ====================


def test_guarded_pairs():
    """Test that only core sites pair up, each pair once."""
    box = make_box(center=((0,),), side=8, kind="inf")
    pairs, dist = guarded_pairs(box, make_path(side=8))
    assert len(pairs) == 10
    assert np.all(pairs[:, 0] < pairs[:, 1])
    assert sorted(dist.tolist()) == [1, 1, 1, 1, 2, 2, 2, 3, 3, 4]


def test_correlator_grid_bins():
    """Test per-distance means over trials and pair counts."""
    distances = np.array([1.0, 1.0, 2.0])
    grid = correlator_grid([np.array([0.2, 0.4, 0.1]), np.array([0.4, 0.6, 0.3])], distances, (0.0, 1.0))
    assert grid.distances == [1.0, 2.0]
    assert grid.pair_counts == [2, 1]
    assert grid.mean_q == pytest.approx([0.4, 0.2])
    assert grid.trial_count == 2
    assert len(grid.rows()) == 2


def test_decay_fit_recovers_rate():
    """Test the slope of log E[Q] against dist^zeta on exact stretched-exponential data."""
    r = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    fit = decay_fit(grid_from(r, [math.exp(-0.7 * x**0.5) for x in r]), zeta=0.5)
    assert fit.slope == pytest.approx(-0.7)
    assert fit.bins_used == 6
    assert not fit.no_decay_resolved


def test_decay_fit_needs_bins():
    """Test that fewer than six positive-distance bins raise PreconditionError."""
    with pytest.raises(PreconditionError):
        decay_fit(grid_from([0.0, 1.0, 2.0], [1.0, 0.5, 0.2]), zeta=0.5)


def test_decay_fit_all_zero():
    """Test that vanishing off-diagonal means give slope -inf."""
    r = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    fit = decay_fit(grid_from(r, [0.0] * 6), zeta=0.5)
    assert fit.slope == -math.inf
    assert fit.bins_used == 0


def test_flat_correlator_is_unresolved():
    """Test that a constant mean correlator reports no resolved decay."""
    r = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert decay_fit(grid_from(r, [0.3] * 6), zeta=0.5).no_decay_resolved


# ==================== Z / W ====================


def test_zw_weights_on_localized_state():
    """Test Z = W = 1 at the support site and 0 elsewhere."""
    region = make_path(side=2)
    spectral = localized_spectrum()
    j = region.index_of((0,))
    record = zw_weights(spectral, region, j, (0,))
    assert record.multiplicity == 1
    assert record.z == pytest.approx(1.0)
    assert record.w == pytest.approx(1.0)
    away = zw_weights(spectral, region, j, (1,))
    assert away.z == 0.0
    assert away.w == pytest.approx(0.0, abs=1e-12)
