"""Factories for lab specs, regions and disorder fields.

Provides reusable builders so tests state only what they vary.
"""

from typing import Any

from opentelemetry.sdk.metrics.export import InMemoryMetricReader

from lab.geometry import BoxSpec, DistanceKind, LatticeConfig, RectangleSpec, Region, enumerate_box
from lab.hamiltonian import DisorderField, DisorderLaw, InteractionSpec, ModelSpec, sample_for_regions


def make_model(
    n: int = 2,
    d: int = 1,
    coupling: float = 1.0,
    u0: float = 0.0,
    r0: int = 1,
    disorder: DisorderLaw | None = None,
) -> ModelSpec:
    """Create a ModelSpec.

    Args:
        n: Particle count
        d: Single-particle dimension
        coupling: Disorder strength lambda
        u0: Constant interaction strength on ||y|| <= r0
        r0: Interaction range
        disorder: Single-site law (uniform on [0, 1] by default)

    Returns:
        Validated ModelSpec
    """
    return ModelSpec(
        lattice=LatticeConfig(n=n, d=d),
        disorder=disorder or DisorderLaw(),
        coupling=coupling,
        interaction=InteractionSpec(r0=r0, u0=u0),
    )


def make_box(
    center: tuple[tuple[float, ...], ...] = ((0,), (3,)),
    side: float = 4,
    kind: DistanceKind | str = DistanceKind.SYMMETRIZED,
) -> BoxSpec:
    """Create a BoxSpec.

    Args:
        center: n tuples of d half-integers
        side: Box side L
        kind: Distance defining the box

    Returns:
        Validated BoxSpec
    """
    return BoxSpec(kind=DistanceKind(kind), center=center, side=side)


def make_rectangle(
    center: tuple[tuple[float, ...], ...] = ((0,), (10,)),
    sides: tuple[float, ...] = (3, 3),
    symmetrized: bool = True,
) -> RectangleSpec:
    return RectangleSpec(symmetrized=symmetrized, center=center, sides=sides)


def make_path(side: float = 2, center: float = 0) -> Region:
    """One-particle segment of Z centered at ``center``."""
    return enumerate_box(make_box(center=((center,),), side=side, kind=DistanceKind.INFINITY))


def make_field(model: ModelSpec, *regions: Region, seed: int = 7) -> DisorderField:
    """Disorder field covering every single-particle site of the given regions."""
    return sample_for_regions(model, list(regions), seed)


def zero_field(*regions: Region) -> DisorderField:
    """Identically vanishing potential on the regions' single-particle sites."""
    d = regions[0].d
    sites = {tuple(row) for region in regions for row in region.sites.reshape(-1, d).tolist()}
    return DisorderField(d, 0, dict.fromkeys(sites, 0.0))


def make_config(kind: str, **overrides: Any) -> dict[str, Any]:
    """Create a raw experiment config payload.

    Args:
        kind: Experiment kind
        **overrides: Fields replacing the defaults

    Returns:
        Dict ready for ``config_adapter.validate_python``
    """
    payload: dict[str, Any] = {"kind": kind, "seed": 1, "trials": 4, "model": {"lattice": {"n": 2, "d": 1}}}
    payload.update(overrides)
    return payload


def collected(reader: InMemoryMetricReader) -> dict[str, list]:
    """Metric name -> data points, across every scope."""
    data = reader.get_metrics_data()
    points: dict[str, list] = {}
    if data is None:
        return points
    for resource in data.resource_metrics:
        for scope in resource.scope_metrics:
            for metric in scope.metrics:
                points.setdefault(metric.name, []).extend(metric.data.data_points)
    return points
