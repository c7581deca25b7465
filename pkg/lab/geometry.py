"""Exact lattice geometry on Z^{nd}.

Centers live on the half-integer grid and are carried internally as doubled
integers, so every membership test is an integer comparison. Distances are
returned as ``Fraction`` values.

Membership conventions (doubled units, ``c2 = 2*center``, ``side2 = 2*side``):

- box:          dist(center, y) <= L/2   <=>  2 * dist2 <= side2
- inner third:  dist(center, y) <= L/6   <=>  6 * dist2 <= side2
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lab.config import settings
from lab.errors import GeometryError, ResourceCeilingError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

logger = logging.getLogger(__name__)

Point = tuple[tuple[float, ...], ...]


# ==================== Types ====================


class DistanceKind(StrEnum):
    """The three (pseudo-)distances on n-particle configurations."""

    INFINITY = "inf"
    SYMMETRIZED = "S"
    HAUSDORFF = "H"


class Separation(StrEnum):
    """Separation class of a pair of symmetrized two-particle rectangles."""

    FULLY = "fully"
    PARTIALLY = "partially"
    NEITHER = "neither"


def _is_half_integer(value: float) -> bool:
    return float(2 * value).is_integer()


def _validate_center(center: Point) -> Point:
    if not center or not center[0]:
        msg = "center must have at least one particle and one dimension"
        raise ValueError(msg)
    d = len(center[0])
    if any(len(particle) != d for particle in center):
        msg = f"all particles must share dimension d={d}"
        raise ValueError(msg)
    if not all(_is_half_integer(c) for particle in center for c in particle):
        msg = f"center {center} is not on the half-integer grid"
        raise ValueError(msg)
    return center


class LatticeConfig(BaseModel):
    """Particle count and single-particle dimension."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(..., ge=1, description="Particle count")
    d: int = Field(..., ge=1, description="Single-particle dimension")

    @model_validator(mode="after")
    def _check_ceiling(self) -> LatticeConfig:
        if self.n * self.d > settings.LAB_MAX_CONFIG_DIM:
            msg = f"n*d = {self.n * self.d} exceeds LAB_MAX_CONFIG_DIM={settings.LAB_MAX_CONFIG_DIM}"
            raise ValueError(msg)
        return self


class BoxSpec(BaseModel):
    """A *-box of side L around a half-integer center."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DistanceKind = Field(DistanceKind.SYMMETRIZED, description="Distance defining the box")
    center: Point = Field(..., description="n tuples of d half-integers")
    side: float = Field(..., ge=1, description="Side L (half-integer >= 1)")

    @field_validator("center")
    @classmethod
    def _check_center(cls, value: Point) -> Point:
        return _validate_center(value)

    @field_validator("side")
    @classmethod
    def _check_side(cls, value: float) -> float:
        if not _is_half_integer(value):
            msg = f"side {value} is not a half-integer"
            raise ValueError(msg)
        return value

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def d(self) -> int:
        return len(self.center[0])

    @property
    def lattice(self) -> LatticeConfig:
        return LatticeConfig(n=self.n, d=self.d)

    @property
    def center2(self) -> np.ndarray:
        return np.rint(2 * np.asarray(self.center, dtype=float)).astype(np.int64)

    @property
    def side2(self) -> int:
        return round(2 * self.side)

    def with_side(self, side: float) -> BoxSpec:
        return self.model_copy(update={"side": side})


class RectangleSpec(BaseModel):
    """A plain or symmetrized n-particle rectangle with per-particle sides."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    symmetrized: bool = Field(True, description="Union over all particle permutations")
    center: Point = Field(..., description="n tuples of d half-integers")
    sides: tuple[float, ...] = Field(..., description="One side per particle, each a half-integer >= 1")

    @field_validator("center")
    @classmethod
    def _check_center(cls, value: Point) -> Point:
        return _validate_center(value)

    @model_validator(mode="after")
    def _check_sides(self) -> RectangleSpec:
        if len(self.sides) != len(self.center):
            msg = f"expected {len(self.center)} sides, got {len(self.sides)}"
            raise ValueError(msg)
        for side in self.sides:
            if side < 1 or not _is_half_integer(side):
                msg = f"side {side} must be a half-integer >= 1"
                raise ValueError(msg)
        return self

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def d(self) -> int:
        return len(self.center[0])

    @property
    def max_side(self) -> float:
        return max(self.sides)

    @property
    def center2(self) -> np.ndarray:
        return np.rint(2 * np.asarray(self.center, dtype=float)).astype(np.int64)

    @classmethod
    def from_box(cls, box: BoxSpec) -> RectangleSpec:
        """Square rectangle equal to a symmetrized box of the same side."""
        if box.kind is not DistanceKind.SYMMETRIZED:
            msg = f"only symmetrized boxes convert to rectangles, got {box.kind}"
            raise GeometryError(msg)
        return cls(symmetrized=True, center=box.center, sides=(box.side,) * box.n)


# ==================== Regions ====================


@dataclass(frozen=True, eq=False)
class Region:
    """Finite subset of Z^{nd} with a stable, lexicographic site index."""

    n: int
    d: int
    sites: np.ndarray  # (N, n, d) int64, lexicographically sorted, unique
    _index: dict[tuple[int, ...], int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {tuple(row): i for i, row in enumerate(self.flat.tolist())})

    @classmethod
    def from_points(cls, n: int, d: int, points: np.ndarray | Iterable) -> Region:
        arr = np.asarray(points, dtype=np.int64).reshape(-1, n * d)
        if arr.shape[0] == 0:
            return cls(n, d, np.zeros((0, n, d), dtype=np.int64))
        arr = np.unique(arr, axis=0)
        return cls(n, d, arr.reshape(-1, n, d))

    @property
    def flat(self) -> np.ndarray:
        return self.sites.reshape(len(self.sites), self.n * self.d)

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, site: object) -> bool:
        return _key(site) in self._index

    def index_of(self, site: Sequence) -> int:
        try:
            return self._index[_key(site)]
        except KeyError as e:
            msg = f"site {site} is not in the region"
            raise GeometryError(msg) from e

    def lookup(self, points: np.ndarray) -> np.ndarray:
        """Vectorized index lookup; -1 marks points outside the region."""
        rows = np.asarray(points, dtype=np.int64).reshape(-1, self.n * self.d).tolist()
        return np.fromiter((self._index.get(tuple(r), -1) for r in rows), dtype=np.int64, count=len(rows))

    def is_subset_of(self, other: Region) -> bool:
        return self.n == other.n and self.d == other.d and bool(np.all(other.lookup(self.sites) >= 0))

    def union(self, other: Region) -> Region:
        return Region.from_points(self.n, self.d, np.concatenate([self.flat, other.flat]))

    def dump(self) -> str:
        """Diffable text dump: header ``n d count`` then one site per line."""
        lines = [f"{self.n} {self.d} {len(self)}"]
        lines.extend(" ".join(str(c) for c in row) for row in self.flat.tolist())
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> Region:
        rows = [line.split() for line in text.strip().splitlines()]
        n, d, count = (int(v) for v in rows[0])
        points = [[int(c) for c in row] for row in rows[1:]]
        if len(points) != count:
            msg = f"region dump declares {count} sites but holds {len(points)}"
            raise GeometryError(msg)
        return cls.from_points(n, d, np.asarray(points, dtype=np.int64).reshape(-1, n * d))


def _key(site: object) -> tuple[int, ...]:
    return tuple(int(c) for c in np.asarray(site, dtype=np.int64).ravel())


# ==================== Distances ====================


def _as_doubled(point: Point | np.ndarray) -> np.ndarray:
    arr = np.asarray(point, dtype=float)
    if arr.ndim != 2:
        msg = f"expected an (n, d) configuration, got shape {arr.shape}"
        raise GeometryError(msg)
    return np.rint(2 * arr).astype(np.int64)


def distances2(kind: DistanceKind, sites: np.ndarray, center2: np.ndarray) -> np.ndarray:
    """Doubled distances from ``center2`` (n, d) to each of ``sites`` (N, n, d), given in units of 1."""
    y2 = 2 * np.asarray(sites, dtype=np.int64)
    return pair_distances2(kind, y2, center2)


def pair_distances2(kind: DistanceKind, a2: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Doubled distances between doubled configurations ``a2`` (N, n, d) and ``b2`` (n, d)."""
    a2 = np.asarray(a2, dtype=np.int64)
    b2 = np.asarray(b2, dtype=np.int64)
    if a2.shape[1:] != b2.shape:
        msg = f"dimension mismatch: {a2.shape[1:]} vs {b2.shape}"
        raise GeometryError(msg)
    n = b2.shape[0]
    if kind is DistanceKind.INFINITY:
        return np.abs(a2 - b2).max(axis=(1, 2))
    if kind is DistanceKind.SYMMETRIZED:
        best = None
        for perm in itertools.permutations(range(n)):
            dist = np.abs(a2 - b2[list(perm)]).max(axis=(1, 2))
            best = dist if best is None else np.minimum(best, dist)
        return best
    # pairwise[k, i, j] = ||a_i - b_j||
    pairwise = np.abs(a2[:, :, None, :] - b2[None, None, :, :]).max(axis=3)
    forward = pairwise.min(axis=2).max(axis=1)
    backward = pairwise.min(axis=1).max(axis=1)
    return np.maximum(forward, backward)


def distance(kind: DistanceKind, a: Point, b: Point) -> Fraction:
    """Exact distance between two configurations on the half-integer grid."""
    a2 = _as_doubled(a)
    b2 = _as_doubled(b)
    if a2.shape != b2.shape:
        msg = f"dimension mismatch: {a2.shape} vs {b2.shape}"
        raise GeometryError(msg)
    return Fraction(int(pair_distances2(kind, a2[None], b2)[0]), 2)


# ==================== Enumeration ====================


def _check_ceiling(count: int, what: str) -> None:
    if count > settings.LAB_ENUMERATION_CEILING:
        msg = f"{what} would enumerate {count} sites, above LAB_ENUMERATION_CEILING={settings.LAB_ENUMERATION_CEILING}"
        raise ResourceCeilingError(msg)


def _axis_ranges(center2: np.ndarray, side2s: np.ndarray) -> list[range]:
    """Integer ranges of the infinity box per flattened coordinate."""
    ranges = []
    for c2, s2 in zip(center2.ravel().tolist(), side2s.ravel().tolist(), strict=True):
        lo = -((s2 - 2 * c2) // 4)
        hi = (2 * c2 + s2) // 4
        ranges.append(range(lo, hi + 1))
    return ranges


def _product(ranges: list[range]) -> np.ndarray:
    if any(len(r) == 0 for r in ranges):
        return np.zeros((0, len(ranges)), dtype=np.int64)
    grids = np.meshgrid(*[np.arange(r.start, r.stop, dtype=np.int64) for r in ranges], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _infinity_box_points(center2: np.ndarray, side2s: np.ndarray) -> np.ndarray:
    ranges = _axis_ranges(center2, side2s)
    _check_ceiling(math.prod(len(r) for r in ranges), "box")
    return _product(ranges)


def enumerate_box(spec: BoxSpec) -> Region:
    """Exact point set {y : dist_kind(center, y) <= L/2}."""
    n, d = spec.n, spec.d
    c2 = spec.center2
    side2s = np.full((n, d), spec.side2, dtype=np.int64)
    if spec.kind is DistanceKind.INFINITY:
        centers = [c2]
    elif spec.kind is DistanceKind.SYMMETRIZED:
        centers = _distinct([c2[list(p)] for p in itertools.permutations(range(n))])
    else:
        # superset: union of infinity boxes around configurations built from the center's particles
        centers = _distinct([c2[list(t)] for t in itertools.product(range(n), repeat=n)])
    per_box = math.prod(len(r) for r in _axis_ranges(c2, side2s))
    _check_ceiling(per_box * len(centers), f"{spec.kind.value}-box")
    points = np.concatenate([_product(_axis_ranges(c, side2s)) for c in centers])
    region = Region.from_points(n, d, points)
    if spec.kind is DistanceKind.HAUSDORFF:
        keep = 2 * distances2(DistanceKind.HAUSDORFF, region.sites, c2) <= spec.side2
        region = Region(n, d, region.sites[keep])
    logger.debug(f"Enumerated {spec.kind.value}-box side={spec.side}: {len(region)} sites")
    return region


def _distinct(arrays: list[np.ndarray]) -> list[np.ndarray]:
    seen: dict[bytes, np.ndarray] = {}
    for arr in arrays:
        seen.setdefault(arr.tobytes(), arr)
    return list(seen.values())


def inner_third(spec: BoxSpec) -> Region:
    """Sites of the box within dist L/6 of the center (exact rational membership)."""
    box = enumerate_box(spec)
    keep = 6 * distances2(spec.kind, box.sites, spec.center2) <= spec.side2
    return Region(spec.n, spec.d, box.sites[keep])


def enumerate_rectangle(spec: RectangleSpec) -> Region:
    """Product of one-particle boxes; the symmetrized variant is the union over permutations."""
    n, d = spec.n, spec.d
    side2s = np.repeat(np.rint(2 * np.asarray(spec.sides, dtype=float)).astype(np.int64)[:, None], d, axis=1)
    plain = _infinity_box_points(spec.center2, side2s).reshape(-1, n, d)
    if not spec.symmetrized:
        return Region.from_points(n, d, plain)
    perms = list(itertools.permutations(range(n)))
    _check_ceiling(len(plain) * len(perms), "symmetrized rectangle")
    images = np.concatenate([plain[:, list(p), :] for p in perms])
    return Region.from_points(n, d, images)


def one_particle_box(center: tuple[float, ...], side: float) -> Region:
    """Lambda_L(x) in Z^d as an n=1 region."""
    c2 = np.rint(2 * np.asarray(center, dtype=float)).astype(np.int64)[None, :]
    side2s = np.full_like(c2, round(2 * side))
    return Region.from_points(1, c2.shape[1], _infinity_box_points(c2, side2s))


def projections(spec: RectangleSpec, j: int | None = None) -> Region:
    """Pi_j (j in {1, 2}) of a two-particle rectangle, or the union Pi when ``j`` is None."""
    if spec.n != 2:
        msg = f"projections are defined for two-particle rectangles, got n={spec.n}"
        raise GeometryError(msg)
    if j is None:
        return one_particle_box(spec.center[0], spec.sides[0]).union(one_particle_box(spec.center[1], spec.sides[1]))
    if j not in (1, 2):
        msg = f"projection index must be 1 or 2, got {j}"
        raise GeometryError(msg)
    return one_particle_box(spec.center[j - 1], spec.sides[j - 1])


# ==================== Boundaries ====================


@dataclass(frozen=True)
class BoundarySets:
    """Edges (a, b) with a inside, b outside, ||a - b||_1 = 1."""

    inner_idx: np.ndarray  # index of a in the inner region, per edge
    outer_sites: np.ndarray  # b per edge, (E, n, d)
    outer_idx: np.ndarray  # index of b in the outer region, -1 when the outer is all of Z^{nd}
    minus: np.ndarray  # sorted inner indices of the interior boundary
    plus: Region  # exterior boundary

    @property
    def edge_count(self) -> int:
        return len(self.inner_idx)


def neighbor_offsets(n: int, d: int) -> np.ndarray:
    """The 2nd unit vectors +-e_k of Z^{nd}, shaped (2nd, n, d)."""
    eye = np.eye(n * d, dtype=np.int64)
    return np.concatenate([eye, -eye]).reshape(2 * n * d, n, d)


def boundary_sets(inner: Region, outer: Region | None = None) -> BoundarySets:
    """Boundary edge set and the interior/exterior vertex boundaries of ``inner`` inside ``outer``."""
    if outer is not None and not inner.is_subset_of(outer):
        msg = "inner region is not contained in the outer region"
        raise GeometryError(msg)
    offsets = neighbor_offsets(inner.n, inner.d)
    neighbors = inner.sites[:, None, :, :] + offsets[None]  # (N, 2nd, n, d)
    flat_neighbors = neighbors.reshape(-1, inner.n, inner.d)
    in_inner = inner.lookup(flat_neighbors) >= 0
    if outer is None:
        candidate = ~in_inner
        outer_idx_all = np.full(len(flat_neighbors), -1, dtype=np.int64)
    else:
        outer_idx_all = outer.lookup(flat_neighbors)
        candidate = (~in_inner) & (outer_idx_all >= 0)
    inner_idx = np.repeat(np.arange(len(inner)), len(offsets))[candidate]
    outer_sites = flat_neighbors[candidate]
    return BoundarySets(
        inner_idx=inner_idx,
        outer_sites=outer_sites,
        outer_idx=outer_idx_all[candidate],
        minus=np.unique(inner_idx),
        plus=Region.from_points(inner.n, inner.d, outer_sites),
    )


def boundary_lemma_holds(spec: BoxSpec) -> bool:
    """Every edge (a, b) of the full boundary has L/2-1 < dist(a,x) <= L/2 < dist(b,x) <= L/2+1."""
    region = enumerate_box(spec)
    bnd = boundary_sets(region)
    if bnd.edge_count == 0:
        return True
    da = distances2(spec.kind, region.sites[bnd.inner_idx], spec.center2)
    db = distances2(spec.kind, bnd.outer_sites, spec.center2)
    s2 = spec.side2
    return bool(np.all((s2 - 4 < 2 * da) & (2 * da <= s2) & (s2 < 2 * db) & (2 * db <= s2 + 4)))


# ==================== Covers ====================


@dataclass(frozen=True)
class Cover:
    """An l-suitable partial cover of a symmetrized box."""

    outer: BoxSpec
    cell_side: float
    cells: list[BoxSpec]
    step2: int  # doubled lattice step l/3 + 1
    uncovered: int  # sites of the shrunken box outside every cell's inner third
    count_bound: float

    @property
    def centers(self) -> list[Point]:
        return [cell.center for cell in self.cells]

    @property
    def covers_shrunken_box(self) -> bool:
        return self.uncovered == 0

    def neighbor_pairs(self) -> list[tuple[int, int]]:
        """Cell index pairs whose centers differ by exactly one step in sup-norm."""
        c2 = np.stack([cell.center2 for cell in self.cells]).reshape(len(self.cells), -1)
        gaps = np.abs(c2[:, None, :] - c2[None, :, :]).max(axis=2)
        i, j = np.nonzero(np.triu(gaps == self.step2, k=1))
        return list(zip(i.tolist(), j.tolist(), strict=True))


def _step2(ell: float) -> int:
    step2 = Fraction(2) * (Fraction(ell).limit_denominator(2) / 3 + 1)
    if step2.denominator != 1:
        msg = f"cell side {ell} gives a lattice step l/3+1 off the half-integer grid"
        raise GeometryError(msg)
    return int(step2)


def _grid_offsets2(radius2: int, step2: int, dims: int) -> np.ndarray:
    """Doubled offsets k*step with |k*step| <= radius, per axis, as an (M, dims) product."""
    k_max = radius2 // step2 if radius2 >= 0 else -1
    if k_max < 0:
        return np.zeros((0, dims), dtype=np.int64)
    axis = np.arange(-k_max, k_max + 1, dtype=np.int64) * step2
    return np.stack(np.meshgrid(*([axis] * dims), indexing="ij"), axis=-1).reshape(-1, dims)


def partial_cover(outer: BoxSpec, ell: float) -> Cover:
    """Cells Lambda_{S;l}(y), y in x + (l/3+1)Z^{2d}, ||y - x|| <= L/2 - l; invariants verified."""
    if outer.kind is not DistanceKind.SYMMETRIZED:
        msg = f"partial covers are built on symmetrized boxes, got {outer.kind}"
        raise GeometryError(msg)
    if not ell < outer.side:
        msg = f"cell side {ell} must be below the outer side {outer.side}"
        raise GeometryError(msg)
    n, d = outer.n, outer.d
    step2 = _step2(ell)
    radius2 = outer.side2 // 2 - round(2 * ell)  # doubled L/2 - l
    offsets = _grid_offsets2(radius2, step2, n * d).reshape(-1, n, d)
    if len(offsets) == 0:
        msg = f"cell side {ell} produces no cells inside a box of side {outer.side}"
        raise GeometryError(msg)
    centers2 = outer.center2[None] + offsets
    cells = [
        BoxSpec(kind=DistanceKind.SYMMETRIZED, center=_undouble(c2), side=ell) for c2 in centers2
    ]
    count_bound = (2 * (3 * outer.side / ell + 1)) ** (2 * d)
    uncovered = _validate_cover(outer, cells, count_bound)
    cover = Cover(outer, ell, cells, step2, uncovered, count_bound)
    logger.debug(f"Cover L={outer.side} l={ell}: {len(cells)} cells, {uncovered} uncovered shrunken sites")
    return cover


def _undouble(c2: np.ndarray) -> Point:
    return tuple(tuple(v / 2 for v in row) for row in np.asarray(c2).tolist())


def _validate_cover(outer: BoxSpec, cells: list[BoxSpec], count_bound: float) -> int:
    """Raise on containment, boundary or count violations; return the number of uncovered shrunken sites."""
    outer_region = enumerate_box(outer)
    bnd = boundary_sets(outer_region)
    on_boundary = np.zeros(len(outer_region), dtype=bool)
    on_boundary[bnd.minus] = True
    covered = np.zeros(len(outer_region), dtype=bool)
    for cell in cells:
        idx = outer_region.lookup(enumerate_box(cell).sites)
        if np.any(idx < 0):
            msg = f"cell centered at {cell.center} leaves the outer box"
            raise GeometryError(msg)
        if np.any(on_boundary[idx]):
            msg = f"cell centered at {cell.center} meets the interior boundary of the outer box"
            raise GeometryError(msg)
        third = inner_third(cell)
        covered[outer_region.lookup(third.sites)] = True
    if not len(cells) < count_bound:
        msg = f"{len(cells)} cells exceed the bound {count_bound}"
        raise GeometryError(msg)
    shrunken = 2 * distances2(outer.kind, outer_region.sites, outer.center2) <= outer.side2 - 2 * round(
        2 * cells[0].side
    )
    return int(np.count_nonzero(shrunken & ~covered))


@dataclass(frozen=True)
class OneParticleCover:
    """Cells Lambda_l(a), a in x + (l/3+1)Z^d, ||a - x|| <= L/2 - l, of a one-particle box."""

    center: tuple[float, ...]
    side: float
    cell_side: float
    centers: list[tuple[float, ...]]

    def cells(self) -> list[Region]:
        return [one_particle_box(a, self.cell_side) for a in self.centers]

    def enlarged_centers(self, factor: int = 9) -> list[tuple[float, ...]]:
        """Centers whose box of side factor*l stays inside the outer one-particle box."""
        limit2 = round(2 * self.side) - factor * round(2 * self.cell_side)
        out = []
        for a in self.centers:
            gap2 = max(abs(round(2 * ai) - round(2 * xi)) for ai, xi in zip(a, self.center, strict=True))
            if 2 * gap2 <= limit2:
                out.append(a)
        return out


def one_particle_cover(center: tuple[float, ...], side: float, ell: float) -> OneParticleCover:
    step2 = _step2(ell)
    radius2 = round(2 * side) // 2 - round(2 * ell)
    dims = len(center)
    offsets = _grid_offsets2(radius2, step2, dims)
    if len(offsets) == 0:
        msg = f"cell side {ell} produces no one-particle cells inside side {side}"
        raise GeometryError(msg)
    c2 = np.rint(2 * np.asarray(center, dtype=float)).astype(np.int64)
    centers = [tuple(v / 2 for v in row) for row in (c2[None] + offsets).tolist()]
    return OneParticleCover(tuple(center), side, ell, centers)


# ==================== Predicates ====================


def is_interactive(region: Region, r0: float) -> bool:
    """True iff some configuration of the region has ||y1 - y2|| <= r0."""
    if region.n != 2:
        msg = f"interactivity is defined for two particles, got n={region.n}"
        raise GeometryError(msg)
    if len(region) == 0:
        return False
    gaps = np.abs(region.sites[:, 0, :] - region.sites[:, 1, :]).max(axis=1)
    return bool(gaps.min() <= r0)


def _disjoint(a: Region, b: Region) -> bool:
    return not np.any(b.lookup(a.sites) >= 0)


def separation_class(a: RectangleSpec, b: RectangleSpec) -> Separation:
    """Full separation: disjoint projections. Partial: some one-sided projection condition holds."""
    if a.n != 2 or b.n != 2:
        msg = "separation is defined for two-particle rectangles"
        raise GeometryError(msg)
    pi_a, pi_b = projections(a), projections(b)
    if _disjoint(pi_a, pi_b):
        return Separation.FULLY
    for j in (1, 2):
        if _disjoint(projections(a, j), pi_b) or _disjoint(projections(b, j), pi_a):
            return Separation.PARTIALLY
    return Separation.NEITHER


def is_L_distant(a: BoxSpec, b: BoxSpec) -> bool:
    """dist_S(x, y) > 8L for two boxes of equal side L."""
    if a.side != b.side:
        msg = f"L-distance needs equal sides, got {a.side} and {b.side}"
        raise GeometryError(msg)
    dist2 = int(pair_distances2(DistanceKind.SYMMETRIZED, a.center2[None], b.center2)[0])
    return dist2 > 8 * a.side2


def full_separation_sufficient(side: float, r0: float) -> bool:
    """The explicit largeness condition 3L + 2r0 < 4L."""
    return 3 * side + 2 * r0 < 4 * side


def representative_centers(side: float, r0: int, d: int) -> list[Point]:
    """Two-particle centers ((0), (s e_1)) for s = 0..L+r0+2, plus the non-interactive s = 2L."""
    zero = (0.0,) * d
    shifts = list(range(int(side + r0 + 2) + 1))
    far = int(2 * side)
    if far not in shifts:
        shifts.append(far)
    return [(zero, (float(s),) + (0.0,) * (d - 1)) for s in shifts]
