"""Eigenfunction correlators and localization weights.

Eigenvalues closer than CLUSTER_RTOL * scale are treated as one degenerate cluster and
enter through the projector onto their joint eigenspace.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from lab.errors import PreconditionError
from lab.geometry import BoxSpec, DistanceKind, Region, distances2, pair_distances2
from lab.spectral import SpectralData
from lab.stats import linear_fit, mean_ci

logger = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-8
DOMINANCE_TOL = 1e-10


# ==================== Clusters ====================


def eigen_clusters(spectral: SpectralData, interval: tuple[float, float] | None = None) -> list[np.ndarray]:
    """Index groups of (numerically) equal eigenvalues, restricted to ``interval`` when given."""
    values = spectral.eigenvalues
    if interval is not None:
        lo, hi = interval
        idx = np.nonzero((values >= lo) & (values <= hi))[0]
    else:
        idx = np.arange(len(values))
    if len(idx) == 0:
        return []
    tol = CLUSTER_RTOL * spectral.scale
    breaks = np.nonzero(np.diff(values[idx]) > tol)[0] + 1
    return np.split(idx, breaks)


def cluster_weights(spectral: SpectralData, interval: tuple[float, float]) -> np.ndarray:
    """N[c, x] = ||chi_x P_c||_2 for every cluster c in the interval."""
    clusters = eigen_clusters(spectral, interval)
    if not clusters:
        return np.zeros((0, spectral.eigenvectors.shape[0]))
    vectors = spectral.eigenvectors
    return np.stack([np.sqrt((vectors[:, c] ** 2).sum(axis=1)) for c in clusters])


# ==================== Correlators ====================


def correlator_matrix(spectral: SpectralData, interval: tuple[float, float]) -> np.ndarray:
    """Q_I(x, y) = sum over clusters in I of ||chi_x P||_2 ||P chi_y||_2, for all pairs."""
    weights = cluster_weights(spectral, interval)
    return weights.T @ weights


def correlator(spectral: SpectralData, region: Region, interval: tuple[float, float], x: tuple, y: tuple) -> float:
    weights = cluster_weights(spectral, interval)
    if len(weights) == 0:
        return 0.0
    i, j = region.index_of(x), region.index_of(y)
    return float(weights[:, i] @ weights[:, j])


class DominanceReport(BaseModel):
    correlator: float
    worst_value: float = Field(..., description="max over test functions of |<delta_x, f(H) chi_I(H) delta_y>|")
    worst_function: str
    passed: bool


def dominance_check(
    spectral: SpectralData,
    region: Region,
    interval: tuple[float, float],
    x: tuple,
    y: tuple,
    random_signs: int = 8,
    seed: int = 0,
) -> DominanceReport:
    """|<delta_x, f(H) chi_I(H) delta_y>| <= Q_I(x, y) for test functions |f| <= 1."""
    q = correlator(spectral, region, interval, x, y)
    lo, hi = interval
    inside = np.nonzero((spectral.eigenvalues >= lo) & (spectral.eigenvalues <= hi))[0]
    i, j = region.index_of(x), region.index_of(y)
    products = spectral.eigenvectors[i, inside] * spectral.eigenvectors[j, inside]
    tests = {
        "indicator": np.ones(len(inside)),
        "alternating": np.where(np.arange(len(inside)) % 2 == 0, 1.0, -1.0),
    }
    rng = np.random.default_rng(seed)
    for k in range(random_signs):
        tests[f"signs-{k}"] = rng.choice([-1.0, 1.0], size=len(inside))
    worst_name, worst = "indicator", 0.0
    for name, f in tests.items():
        value = abs(float(np.sum(f * products)))
        if value > worst:
            worst_name, worst = name, value
    return DominanceReport(
        correlator=q, worst_value=worst, worst_function=worst_name, passed=worst <= q + DOMINANCE_TOL
    )


# ==================== Ensemble grids and decay ====================


class CorrelatorGrid(BaseModel):
    """Ensemble means of Q_I binned by the symmetrized distance of the pair."""

    interval: tuple[float, float]
    distances: list[float]
    mean_q: list[float]
    ci_low: list[float]
    ci_high: list[float]
    pair_counts: list[int]
    trial_count: int

    def rows(self) -> list[dict]:
        return [
            {"dist_S": r, "mean_Q": m, "ci_lo": lo, "ci_hi": hi, "pairs": c}
            for r, m, lo, hi, c in zip(
                self.distances, self.mean_q, self.ci_low, self.ci_high, self.pair_counts, strict=True
            )
        ]


def guarded_pairs(box: BoxSpec, region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i < j) of sites at distance >= L/4 from the interior boundary, with their dist_S."""
    core = np.nonzero(4 * distances2(box.kind, region.sites, box.center2) <= box.side2)[0]
    core_sites2 = 2 * region.sites[core]
    dist = np.stack([pair_distances2(DistanceKind.SYMMETRIZED, core_sites2, s2) for s2 in core_sites2])
    i, j = np.triu_indices(len(core), k=1)
    return np.stack([core[i], core[j]], axis=1), dist[i, j] / 2


def pair_values(q: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return q[pairs[:, 0], pairs[:, 1]]


def correlator_grid(
    values: list[np.ndarray], pair_distances: np.ndarray, interval: tuple[float, float]
) -> CorrelatorGrid:
    """Per-trial bin averages of Q over the guarded pairs, then ensemble means with intervals.

    ``values[t]`` holds trial t's Q at every guarded pair, aligned with ``pair_distances``.
    """
    stack = np.stack(values)
    bins = np.unique(pair_distances)
    per_trial = np.empty((len(values), len(bins)))
    counts = []
    for b, r in enumerate(bins):
        members = pair_distances == r
        counts.append(int(np.count_nonzero(members)))
        per_trial[:, b] = stack[:, members].mean(axis=1)
    estimates = [mean_ci(per_trial[:, b]) for b in range(len(bins))]
    return CorrelatorGrid(
        interval=interval,
        distances=bins.astype(float).tolist(),
        mean_q=[e.mean for e in estimates],
        ci_low=[e.ci_low for e in estimates],
        ci_high=[e.ci_high for e in estimates],
        pair_counts=counts,
        trial_count=len(values),
    )


class DecayFit(BaseModel):
    zeta: float
    slope: float = Field(..., description="d log E[Q] / d dist^zeta; -inf when every off-diagonal mean is 0")
    intercept: float
    r_squared: float
    bins_used: int
    no_decay_resolved: bool


MIN_BINS = 6


def decay_fit(grid: CorrelatorGrid, zeta: float) -> DecayFit:
    """Regress log E[Q] on dist_S^zeta over the positive-distance bins."""
    r = np.asarray(grid.distances, dtype=float)
    q = np.asarray(grid.mean_q, dtype=float)
    mask = r > 0
    if np.count_nonzero(mask) < MIN_BINS:
        msg = f"decay fit needs >= {MIN_BINS} distance bins, got {np.count_nonzero(mask)}"
        raise PreconditionError(msg)
    r, q = r[mask], q[mask]
    positive = q > 0
    if not positive.any():
        return DecayFit(
            zeta=zeta, slope=-math.inf, intercept=-math.inf, r_squared=1.0, bins_used=0, no_decay_resolved=False
        )
    if np.count_nonzero(positive) < 2:
        msg = "decay fit needs at least two bins with a positive mean correlator"
        raise PreconditionError(msg)
    fit = linear_fit(r[positive] ** zeta, np.log(q[positive]))
    unresolved = not (fit.slope < 0 and fit.slope + 2 * fit.stderr < 0)
    if unresolved:
        logger.warning(f"No decay resolved: slope={fit.slope:.4g} +- {fit.stderr:.2g}")
    return DecayFit(
        zeta=zeta,
        slope=fit.slope,
        intercept=fit.intercept,
        r_squared=fit.r_squared,
        bins_used=int(np.count_nonzero(positive)),
        no_decay_resolved=unresolved,
    )


# ==================== Z / W weights ====================


class ZWRecord(BaseModel):
    eigenvalue: float
    site: tuple[int, ...]
    multiplicity: int
    z: float
    w: float


def zw_weights(
    spectral: SpectralData, region: Region, j: int, a: tuple, nu: float | None = None
) -> ZWRecord:
    """Z = ||chi_a P||_2 / ||T_a^{-1} P||_2 and W = sup over the eigenspace of |phi(a)| / ||T_a^{-1} phi||."""
    nu = nu if nu is not None else (region.n * region.d + 1) / 2
    cluster = next(c for c in eigen_clusters(spectral) if j in c)
    basis = spectral.eigenvectors[:, cluster]  # (N, k)
    a_idx = region.index_of(a)
    a_flat = np.asarray(a, dtype=np.int64).ravel()
    sup_dist = np.abs(region.flat - a_flat[None]).max(axis=1).astype(float)
    inv_weight = (1 + sup_dist**2) ** (-nu / 2)
    at_a = basis[a_idx]
    z = math.sqrt(float(at_a @ at_a)) / math.sqrt(float(((inv_weight[:, None] * basis) ** 2).sum()))
    gram = basis.T @ (inv_weight[:, None] ** 2 * basis)
    top = scipy.linalg.eigh(np.outer(at_a, at_a), gram, eigvals_only=True).max()
    w = math.sqrt(max(float(top), 0.0))
    return ZWRecord(
        eigenvalue=float(spectral.eigenvalues[j]),
        site=tuple(int(c) for c in a_flat),
        multiplicity=len(cluster),
        z=z,
        w=w,
    )
