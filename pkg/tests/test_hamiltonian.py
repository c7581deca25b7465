"""Tests for model specs, disorder sampling and operator assembly."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from lab.errors import PreconditionError
from lab.geometry import LatticeConfig, enumerate_box
from lab.hamiltonian import (
    DisorderField,
    DisorderLaw,
    InteractionEntry,
    InteractionSpec,
    ModelSpec,
    assemble,
    assemble_periodic,
    minimum_image,
    operator_norm_bounds,
    sample_disorder,
    sample_for_regions,
    site_uniform,
    with_particles,
)
from tests.fixtures import make_box, make_field, make_model, make_path, zero_field

# ==================== Model specs ====================


def test_uniform_density_sup():
    """Test ||rho|| = 1/M+ for the uniform law."""
    assert DisorderLaw(m_plus=2.0).density_sup == 0.5


def test_beta_density_sup():
    """Test that Beta(2, 2) peaks at 1.5."""
    assert DisorderLaw(kind="beta", a=2, b=2).density_sup == pytest.approx(1.5)


def test_beta_shapes_below_one_rejected():
    """Test that unbounded beta densities are rejected."""
    with pytest.raises(ValidationError):
        DisorderLaw(kind="beta", a=0.5, b=2)


def test_ppf_scales_to_support():
    """Test that quantiles land in [0, M+]."""
    assert DisorderLaw(m_plus=2.0).ppf(0.5) == pytest.approx(1.0)
    values = DisorderLaw(kind="beta", a=2, b=3, m_plus=3.0).ppf(np.linspace(0, 1, 11))
    assert values.min() >= 0
    assert values.max() <= 3.0


def test_effective_density_sup():
    """Test ||rho||/lambda, and infinity without disorder."""
    assert make_model(coupling=2.0).effective_density_sup == 0.5
    assert math.isinf(make_model(coupling=0.0).effective_density_sup)


def test_interaction_table_must_be_symmetric():
    """Test that U~(y) != U~(-y) is rejected."""
    with pytest.raises(ValidationError):
        InteractionSpec(r0=1, table=(InteractionEntry(offset=(1,), value=1.0),))


def test_interaction_table_support():
    """Test that entries beyond r0 are rejected."""
    with pytest.raises(ValidationError):
        InteractionSpec(
            r0=1,
            table=(InteractionEntry(offset=(2,), value=1.0), InteractionEntry(offset=(-2,), value=1.0)),
        )


def test_interaction_table_dimension_checked_against_lattice():
    """Test that table offsets must live in Z^d."""
    table = (InteractionEntry(offset=(1, 0), value=1.0), InteractionEntry(offset=(-1, 0), value=1.0))
    with pytest.raises(ValidationError):
        ModelSpec(lattice=LatticeConfig(n=2, d=1), interaction=InteractionSpec(r0=1, table=table))


def test_interaction_evaluate():
    """Test the constant-strength and tabulated interactions."""
    diffs = np.array([[0], [1], [-1], [2]])
    assert InteractionSpec(r0=1, u0=3.0).evaluate(diffs).tolist() == [3.0, 3.0, 3.0, 0.0]
    table = (
        InteractionEntry(offset=(0,), value=5.0),
        InteractionEntry(offset=(1,), value=1.0),
        InteractionEntry(offset=(-1,), value=1.0),
    )
    spec = InteractionSpec(r0=1, table=table)
    assert spec.evaluate(diffs).tolist() == [5.0, 1.0, 1.0, 0.0]
    assert spec.max_value == 5.0


def test_with_particles():
    """Test that only the particle count changes."""
    model = make_model(n=2, u0=1.5, coupling=3.0)
    one = with_particles(model, 1)
    assert one.n == 1
    assert one.d == model.d
    assert one.coupling == 3.0
    assert one.interaction == model.interaction
    assert with_particles(model, 2) is model


# ==================== Disorder ====================


def test_site_values_depend_only_on_seed_and_site():
    """Test that overlapping regions see the same value at shared sites."""
    model = make_model(n=1)
    small = sample_for_regions(model, [make_path(side=2)], 11)
    large = sample_for_regions(model, [make_path(side=10)], 11)
    for site, value in small.values.items():
        assert large.values[site] == value
    assert small.values[(0,)] == site_uniform(11, (0,))


def test_seeds_give_independent_fields():
    """Test that different trial seeds give different values."""
    model = make_model(n=1)
    region = make_path(side=6)
    a = sample_for_regions(model, [region], 1)
    b = sample_for_regions(model, [region], 2)
    assert a.values != b.values


def test_disorder_values_in_range():
    """Test that lambda*omega lies in [0, lambda*M+]."""
    model = make_model(n=1, coupling=4.0)
    field = sample_disorder(model, [(k,) for k in range(-50, 51)], 5)
    values = np.array(list(field.values.values()))
    assert values.min() >= 0
    assert values.max() <= 4.0


def test_field_covers_two_particle_support():
    """Test that a two-particle region's field has every single-particle coordinate."""
    model = make_model()
    box = make_box(center=((0,), (3,)), side=2)
    field = make_field(model, enumerate_box(box))
    assert set(field.values) == {(k,) for k in range(-1, 5)}


def test_field_array_missing_site():
    """Test that reading an unsampled site raises PreconditionError."""
    field = zero_field(make_path(side=2))
    with pytest.raises(PreconditionError):
        field.array(np.array([[5]]))


def test_field_shift():
    """Test omega'(x) = omega(x - a), plain and on a torus."""
    field = DisorderField(1, 0, {(0,): 0.25, (1,): 0.75})
    assert field.shifted((2,)).values == {(2,): 0.25, (3,): 0.75}
    assert field.shifted((3,), period=4).values == {(3,): 0.25, (0,): 0.75}


def test_field_dump_reloads_exactly():
    """Test that the text dump keeps the seed and every float bit."""
    field = sample_for_regions(make_model(n=1), [make_path(side=4)], 99)
    loaded = DisorderField.load(field.dump())
    assert loaded.seed == 99
    assert loaded.values == field.values


# ==================== Assembly ====================


def test_free_path_spectrum():
    """Test the Dirichlet spectrum {2 - sqrt2, 2, 2 + sqrt2} of a three-site path."""
    region = make_path(side=2)
    op = assemble(region, zero_field(region), make_model(n=1, coupling=0.0))
    values = np.linalg.eigvalsh(op.dense)
    assert values == pytest.approx([2 - math.sqrt(2), 2, 2 + math.sqrt(2)])


def test_two_particle_diagonal():
    """Test 2nd + U on the diagonal when lambda = 0."""
    model = make_model(n=2, coupling=0.0, u0=3.0)
    region = enumerate_box(make_box(center=((0,), (0,)), side=2))
    op = assemble(region, zero_field(region), model)
    assert op.diagonal[region.index_of((0, 0))] == 7.0
    assert op.diagonal[region.index_of((-1, 1))] == 4.0
    assert op.diagonal[region.index_of((0, 1))] == 7.0


def test_assembly_is_symmetric_nearest_neighbor():
    """Test symmetry and -1 hopping between nearest neighbors only."""
    model = make_model(n=2, u0=1.0)
    region = enumerate_box(make_box(center=((0,), (3,)), side=3))
    op = assemble(region, make_field(model, region), model)
    dense = op.dense
    assert np.array_equal(dense, dense.T)
    off = dense - np.diag(np.diag(dense))
    rows, cols = np.nonzero(off)
    steps = np.abs(region.flat[rows] - region.flat[cols]).sum(axis=1)
    assert np.all(steps == 1)
    assert np.all(off[rows, cols] == -1)


def test_particle_exchange_covariance():
    """Test that swapping the particles of a box center maps the operator entrywise onto the swapped box."""
    model = make_model(n=2, u0=1.0)
    left = enumerate_box(make_box(center=((0,), (3,)), side=3, kind="inf"))
    right = enumerate_box(make_box(center=((3,), (0,)), side=3, kind="inf"))
    field = make_field(model, left, right)
    a = assemble(left, field, model).dense
    b = assemble(right, field, model).dense
    swap = right.lookup(left.sites[:, ::-1, :])
    assert np.all(swap >= 0)
    assert np.allclose(a, b[np.ix_(swap, swap)], rtol=0, atol=1e-14)
    assert np.linalg.eigvalsh(a) == pytest.approx(np.linalg.eigvalsh(b), abs=1e-12)


def test_restriction_to_subregion():
    """Test that the operator on a sub-box is the corresponding block of the operator on the larger box."""
    model = make_model(n=2, u0=2.0)
    small = enumerate_box(make_box(center=((0,), (2,)), side=2))
    big = enumerate_box(make_box(center=((0,), (2,)), side=4))
    field = make_field(model, big)
    idx = big.lookup(small.sites)
    assert np.all(idx >= 0)
    block = assemble(big, field, model).dense[np.ix_(idx, idx)]
    assert np.array_equal(block, assemble(small, field, model).dense)


def test_assembly_dimension_mismatch():
    """Test that a one-particle region with a two-particle model is rejected."""
    region = make_path(side=2)
    with pytest.raises(PreconditionError):
        assemble(region, zero_field(region), make_model(n=2))


def test_spectrum_inside_norm_bounds():
    """Test sigma(H_region) within the coarse enclosure."""
    model = make_model(n=2, u0=2.0, coupling=3.0)
    region = enumerate_box(make_box(center=((0,), (1,)), side=4))
    values = np.linalg.eigvalsh(assemble(region, make_field(model, region), model).dense)
    lo, hi = operator_norm_bounds(model, region)
    assert values.min() >= lo - 1e-12
    assert values.max() <= hi + 1e-12


def test_periodic_free_spectrum():
    """Test the ring spectrum 2 - 2cos(2 pi k / 4) on a four-site torus."""
    model = make_model(n=1, coupling=0.0)
    field = DisorderField(1, 0, {(k,): 0.0 for k in range(4)})
    op = assemble_periodic(4, field, model)
    assert np.linalg.eigvalsh(op.dense) == pytest.approx([0.0, 2.0, 2.0, 4.0])


def test_periodic_needs_period_three():
    """Test that periods below 3 are rejected."""
    field = DisorderField(1, 0, {(0,): 0.0, (1,): 0.0})
    with pytest.raises(PreconditionError):
        assemble_periodic(2, field, make_model(n=1))


def test_minimum_image():
    """Test the symmetric representative of differences modulo the period."""
    assert minimum_image(np.array([3, -3, 2, 0]), 5).tolist() == [-2, 2, 2, 0]
