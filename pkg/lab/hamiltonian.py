"""Random n-particle Anderson Hamiltonian and its finite-volume restrictions.

H = -Delta + V_omega + U with -Delta = 2nd - adjacency, so sigma(-Delta) = [0, 4nd];
V_omega(x) = sum_i lambda * omega_{x_i}; U(x) = sum_{i<j} U~(x_i - x_j).
"""

from __future__ import annotations

import hashlib
import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from lab.errors import ConfigurationError, PreconditionError
from lab.geometry import LatticeConfig, Region, neighbor_offsets

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


# ==================== Model ====================


class DisorderLaw(BaseModel):
    """Bounded single-site density on [0, M+]."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["uniform", "beta"] = Field("uniform", description="Density family")
    m_plus: float = Field(1.0, gt=0, description="Upper end M+ of the support")
    a: float = Field(1.0, ge=1, description="Beta shape a (>= 1 keeps the density bounded)")
    b: float = Field(1.0, ge=1, description="Beta shape b (>= 1 keeps the density bounded)")

    @property
    def density_sup(self) -> float:
        """||rho||_inf."""
        if self.kind == "uniform" or (self.a == 1 and self.b == 1):
            return 1.0 / self.m_plus
        mode = (self.a - 1) / (self.a + self.b - 2)
        return float(stats.beta.pdf(mode, self.a, self.b)) / self.m_plus

    def ppf(self, u: np.ndarray | float) -> np.ndarray:
        if self.kind == "uniform":
            return self.m_plus * np.asarray(u, dtype=float)
        if self.kind == "beta":
            return self.m_plus * stats.beta.ppf(u, self.a, self.b)
        msg = f"unsupported density kind: {self.kind}"
        raise ConfigurationError(msg)


class InteractionEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    offset: tuple[int, ...]
    value: float = Field(..., ge=0)


class InteractionSpec(BaseModel):
    """Short-range pair interaction U~ supported on ||y|| <= r0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    r0: int = Field(1, ge=1, description="Interaction range")
    u0: float = Field(0.0, ge=0, description="Default strength: U~(y) = u0 for ||y|| <= r0")
    table: tuple[InteractionEntry, ...] | None = Field(None, description="Explicit U~ values; overrides u0")

    @model_validator(mode="after")
    def _check_table(self) -> InteractionSpec:
        if self.table is None:
            return self
        values = {entry.offset: entry.value for entry in self.table}
        for offset, value in values.items():
            if max(abs(c) for c in offset) > self.r0:
                msg = f"interaction offset {offset} lies beyond r0={self.r0}"
                raise ValueError(msg)
            mirror = tuple(-c for c in offset)
            if values.get(mirror, 0.0) != value:
                msg = f"interaction table is not symmetric at {offset}"
                raise ValueError(msg)
        return self

    @property
    def max_value(self) -> float:
        if self.table is None:
            return self.u0
        return max((entry.value for entry in self.table), default=0.0)

    def evaluate(self, diffs: np.ndarray) -> np.ndarray:
        """U~ at single-particle differences ``diffs`` (M, d)."""
        diffs = np.asarray(diffs, dtype=np.int64)
        if self.table is None:
            return np.where(np.abs(diffs).max(axis=1) <= self.r0, self.u0, 0.0)
        lookup = {entry.offset: entry.value for entry in self.table}
        return np.fromiter((lookup.get(tuple(row), 0.0) for row in diffs.tolist()), dtype=float, count=len(diffs))


class ModelSpec(BaseModel):
    """Particle count, dimension, disorder law, coupling and interaction."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lattice: LatticeConfig
    disorder: DisorderLaw = Field(default_factory=DisorderLaw)
    coupling: float = Field(1.0, ge=0, description="Disorder strength lambda")
    interaction: InteractionSpec = Field(default_factory=InteractionSpec)

    @model_validator(mode="after")
    def _check_interaction_dim(self) -> ModelSpec:
        for entry in self.interaction.table or ():
            if len(entry.offset) != self.lattice.d:
                msg = f"interaction offset {entry.offset} does not live in Z^{self.lattice.d}"
                raise ValueError(msg)
        return self

    @property
    def n(self) -> int:
        return self.lattice.n

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def effective_density_sup(self) -> float:
        """Sup of the density of lambda*omega, the quantity entering every Wegner bound."""
        if self.coupling == 0:
            return float("inf")
        return self.disorder.density_sup / self.coupling


# ==================== Disorder ====================


def site_hash(site: tuple[int, ...]) -> int:
    """64-bit key of a single-particle site: blake2b over its comma-joined coordinates."""
    digest = hashlib.blake2b(",".join(str(int(c)) for c in site).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def site_uniform(seed: int, site: tuple[int, ...]) -> float:
    """U(0,1) draw from the Philox stream keyed by (trial seed, site hash)."""
    key = ((int(seed) & _MASK64) << 64) | site_hash(site)
    return float(np.random.Generator(np.random.Philox(key=key)).random())


@dataclass(frozen=True)
class DisorderField:
    """Potential values lambda*omega_x on a finite set of Z^d sites."""

    d: int
    seed: int
    values: dict[tuple[int, ...], float]

    def array(self, sites: np.ndarray) -> np.ndarray:
        """Values at single-particle sites ``sites`` (M, d)."""
        out = np.empty(len(sites))
        for i, row in enumerate(np.asarray(sites, dtype=np.int64).tolist()):
            try:
                out[i] = self.values[tuple(row)]
            except KeyError as e:
                msg = f"no disorder value for site {tuple(row)}"
                raise PreconditionError(msg) from e
        return out

    def shifted(self, offset: tuple[int, ...], period: int | None = None) -> DisorderField:
        """The field omega'(x) = omega(x - offset), optionally on a torus of the given period."""
        moved = {}
        for site, value in self.values.items():
            target = tuple(s + o for s, o in zip(site, offset, strict=True))
            if period is not None:
                target = tuple(t % period for t in target)
            moved[target] = value
        return DisorderField(self.d, self.seed, moved)

    def dump(self) -> str:
        lines = [f"# seed={self.seed} d={self.d}"]
        lines.extend(f"{' '.join(str(c) for c in site)} {value!r}" for site, value in sorted(self.values.items()))
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> DisorderField:
        header, *rows = text.strip().splitlines()
        meta = dict(part.split("=") for part in header.lstrip("# ").split())
        values = {}
        for row in rows:
            *coords, value = row.split()
            values[tuple(int(c) for c in coords)] = float(value)
        return cls(int(meta["d"]), int(meta["seed"]), values)


def single_particle_support(region: Region) -> list[tuple[int, ...]]:
    """Distinct single-particle sites appearing in any configuration of the region."""
    flat = np.unique(region.sites.reshape(-1, region.d), axis=0)
    return [tuple(row) for row in flat.tolist()]


def sample_disorder(spec: ModelSpec, support: list[tuple[int, ...]], seed: int) -> DisorderField:
    """I.i.d. draws lambda*omega_x, one independent Philox substream per site."""
    support = sorted(set(support))
    uniforms = np.array([site_uniform(seed, site) for site in support])
    values = spec.coupling * spec.disorder.ppf(uniforms) if support else np.zeros(0)
    return DisorderField(spec.d, int(seed), dict(zip(support, values.tolist(), strict=True)))


def sample_for_regions(spec: ModelSpec, regions: list[Region], seed: int) -> DisorderField:
    support: set[tuple[int, ...]] = set()
    for region in regions:
        support.update(single_particle_support(region))
    return sample_disorder(spec, sorted(support), seed)


# ==================== Assembly ====================


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """H restricted to a region, indexed by the region's site order."""

    region: Region
    matrix: sp.csr_matrix

    @cached_property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def __len__(self) -> int:
        return len(self.region)


def potential_diagonal(region: Region, field: DisorderField, spec: ModelSpec) -> np.ndarray:
    """V_omega + U on every configuration of the region."""
    n, d = region.n, region.d
    sites = region.sites
    diag = field.array(sites.reshape(-1, d)).reshape(len(sites), n).sum(axis=1)
    for i, j in itertools.combinations(range(n), 2):
        diag = diag + spec.interaction.evaluate(sites[:, i, :] - sites[:, j, :])
    return diag


def assemble(region: Region, field: DisorderField, spec: ModelSpec) -> OperatorMatrix:
    """Dirichlet restriction chi H chi: diagonal 2nd + V + U, -1 on nearest-neighbor pairs."""
    n, d = region.n, region.d
    if (n, d) != (spec.n, spec.d):
        msg = f"region lives in (n, d)=({n}, {d}) but the model is ({spec.n}, {spec.d})"
        raise PreconditionError(msg)
    size = len(region)
    diag = 2 * n * d + potential_diagonal(region, field, spec)
    offsets = neighbor_offsets(n, d)[: n * d]  # +e_k only; symmetrized below
    rows, cols = [], []
    for offset in offsets:
        idx = region.lookup(region.sites + offset[None])
        hit = idx >= 0
        rows.append(np.nonzero(hit)[0])
        cols.append(idx[hit])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    hopping = sp.coo_matrix((-np.ones(len(r)), (r, c)), shape=(size, size))
    matrix = (hopping + hopping.T + sp.diags(diag)).tocsr()
    return OperatorMatrix(region, matrix)


def torus_region(n: int, d: int, period: int) -> Region:
    """All configurations of the product torus (Z/period)^{nd}, as representatives 0..period-1."""
    axis = np.arange(period, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axis] * (n * d)), indexing="ij"), axis=-1).reshape(-1, n * d)
    return Region.from_points(n, d, grid)


def assemble_periodic(period: int, field: DisorderField, spec: ModelSpec) -> OperatorMatrix:
    """H on the full product torus, hopping modulo ``period``; interaction uses minimum-image differences."""
    if period < 3:
        msg = f"periodic assembly needs period >= 3, got {period}"
        raise PreconditionError(msg)
    n, d = spec.n, spec.d
    region = torus_region(n, d, period)
    sites = region.sites
    diag = field.array(sites.reshape(-1, d)).reshape(len(sites), n).sum(axis=1)
    for i, j in itertools.combinations(range(n), 2):
        diag = diag + spec.interaction.evaluate(minimum_image(sites[:, i, :] - sites[:, j, :], period))
    diag = diag + 2 * n * d
    rows, cols = [], []
    for offset in neighbor_offsets(n, d)[: n * d]:
        idx = region.lookup((sites + offset[None]) % period)
        rows.append(np.arange(len(sites)))
        cols.append(idx)
    r, c = np.concatenate(rows), np.concatenate(cols)
    hopping = sp.coo_matrix((-np.ones(len(r)), (r, c)), shape=(len(sites), len(sites)))
    return OperatorMatrix(region, (hopping + hopping.T + sp.diags(diag)).tocsr())


def minimum_image(diffs: np.ndarray, period: int) -> np.ndarray:
    diffs = np.mod(diffs, period)
    return np.where(diffs > period // 2, diffs - period, diffs)


def operator_norm_bounds(spec: ModelSpec, region: Region | None = None) -> tuple[float, float]:
    """Coarse enclosure [0, 4nd + n*lambda*M+ + max U] of the restricted spectrum."""
    n, d = spec.n, spec.d
    if region is not None and len(region) and n > 1:
        total = np.zeros(len(region))
        for i, j in itertools.combinations(range(n), 2):
            total += spec.interaction.evaluate(region.sites[:, i, :] - region.sites[:, j, :])
        interaction = float(total.max())
    else:
        interaction = spec.interaction.max_value * n * (n - 1) / 2
    return 0.0, 4 * n * d + n * spec.coupling * spec.disorder.m_plus + interaction


def with_particles(spec: ModelSpec, n: int) -> ModelSpec:
    """Same disorder, coupling and interaction for a different particle count."""
    if n == spec.n:
        return spec
    return spec.model_copy(update={"lattice": LatticeConfig(n=n, d=spec.d)})
