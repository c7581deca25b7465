"""Wegner and Combes-Thomas estimates, and the Wegner-based probability lemma, checked numerically."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist

from lab.errors import GeometryError, PreconditionError, ResonantEnergyError
from lab.geometry import (
    BoxSpec,
    DistanceKind,
    RectangleSpec,
    Region,
    Separation,
    boundary_sets,
    enumerate_box,
    enumerate_rectangle,
    inner_third,
    separation_class,
)
from lab.hamiltonian import DisorderField, ModelSpec, assemble, operator_norm_bounds, sample_for_regions, with_particles
from lab.harness.pool import map_trials
from lab.models.reports import EnsembleReport, TrialRecord
from lab.spectral import (
    RESONANCE_RTOL,
    combes_thomas_bound,
    distance_to_energy,
    eig,
    eigenvalues_only,
    resolvent_columns,
)
from lab.stats import clopper_pearson, correlation, mean_ci

logger = logging.getLogger(__name__)

EPS_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
CT_TOLERANCE = 1e-9

__all__ = [
    "CT_TOLERANCE",
    "EPS_GRID",
    "CombesThomasReport",
    "IndependenceReport",
    "ProbabilityLemmaReport",
    "ProbabilityLemmaSetup",
    "WegnerTraceReport",
    "combes_thomas_bound",
    "combes_thomas_check",
    "enclosing_truncation_bound",
    "enumerate_shape",
    "independence_report",
    "initial_scale_length",
    "pair_bound",
    "pair_independence",
    "pair_spectral_gap",
    "probability_lemma_check",
    "probability_lemma_setup",
    "probability_lemma_summary",
    "single_bound",
    "spectral_gap",
    "spectrum_distance",
    "trace_count",
    "wegner_constant",
    "wegner_pair",
    "wegner_pair_report",
    "wegner_reports",
    "wegner_single",
    "wegner_sweep",
    "wegner_trace",
    "wegner_trace_report",
]


# ==================== Constants ====================


def wegner_constant(kind: DistanceKind | str, n: int) -> float:
    """C_n for infinity-, S- and H-boxes: n, n * n!, n^(2n+1)."""
    kind = DistanceKind(kind)
    if kind is DistanceKind.INFINITY:
        return float(n)
    if kind is DistanceKind.SYMMETRIZED:
        return float(n * math.factorial(n))
    return float(n ** (2 * n + 1))


def single_bound(kind: DistanceKind | str, n: int, d: int, density_sup: float, eps: float, side: float) -> float:
    """2 C_n ||rho|| eps L^{nd}."""
    return 2 * wegner_constant(kind, n) * density_sup * eps * side ** (n * d)


def pair_bound(d: int, density_sup: float, eps: float, side: float) -> float:
    """16 ||rho|| eps L^{4d} for partially separated symmetrized two-particle rectangles."""
    return 16 * density_sup * eps * side ** (4 * d)


def initial_scale_length(p0: float, c: float, density_sup: float, eps: float, theta: float, n: int, d: int) -> float:
    """L(eps) = (p0 / (2 C ||rho|| sqrt(eps)))^{2/(theta+2nd)}."""
    return (p0 / (2 * c * density_sup * math.sqrt(eps))) ** (2 / (theta + 2 * n * d))


def _kind_side(spec: BoxSpec | RectangleSpec) -> tuple[DistanceKind, float]:
    if isinstance(spec, RectangleSpec):
        return (DistanceKind.SYMMETRIZED if spec.symmetrized else DistanceKind.INFINITY), spec.max_side
    return spec.kind, spec.side


def enumerate_shape(spec: BoxSpec | RectangleSpec) -> Region:
    return enumerate_rectangle(spec) if isinstance(spec, RectangleSpec) else enumerate_box(spec)


def spectral_gap(a: np.ndarray, b: np.ndarray) -> float:
    """min |x - y| over x in a, y in b, by a sorted merge."""
    if len(a) == 0 or len(b) == 0:
        return math.inf
    b = np.sort(b)
    pos = np.searchsorted(b, a)
    left = np.abs(a - b[np.clip(pos - 1, 0, len(b) - 1)])
    right = np.abs(a - b[np.clip(pos, 0, len(b) - 1)])
    return float(np.minimum(left, right).min())


# ==================== Wegner: single box ====================


def spectrum_distance(region: Region, field: DisorderField, model: ModelSpec, energy: float) -> float:
    """dist(sigma(H_region), E) for one realization; regions above the dense ceiling go through eigsh."""
    return distance_to_energy(assemble(region, field, with_particles(model, region.n)), energy)


def _distance_trials(
    spec: BoxSpec | RectangleSpec, model: ModelSpec, energy: float, trials: int, seed: int, workers: int | None
) -> tuple[list[int], list[float]]:
    region = enumerate_shape(spec)
    local = with_particles(model, region.n)

    def trial(_index: int, trial_seed: int) -> dict:
        field = sample_for_regions(local, [region], trial_seed)
        return {"seed": trial_seed, "statistic": spectrum_distance(region, field, local, energy)}

    rows = map_trials(trial, trials, seed, workers, experiment="wegner")
    return [r["seed"] for r in rows], [r["statistic"] for r in rows]


def wegner_sweep(
    spec: BoxSpec | RectangleSpec,
    model: ModelSpec,
    energy: float,
    eps_grid: list[float],
    trials: int,
    seed: int,
    workers: int | None = None,
) -> list[EnsembleReport]:
    """One coupled ensemble of dist(sigma(H), E), thresholded at every eps of the grid."""
    if any(eps < 0 for eps in eps_grid):
        msg = f"resonance widths must be >= 0, got {eps_grid}"
        raise PreconditionError(msg)
    seeds, distances = _distance_trials(spec, model, energy, trials, seed, workers)
    return wegner_reports(spec, model, energy, eps_grid, seeds, distances)


def wegner_reports(
    spec: BoxSpec | RectangleSpec,
    model: ModelSpec,
    energy: float,
    eps_grid: list[float],
    seeds: list[int],
    distances: list[float],
) -> list[EnsembleReport]:
    """Threshold precomputed per-trial distances at every eps of the grid."""
    kind, side = _kind_side(spec)
    n, d = spec.n, spec.d
    reports = []
    for eps in eps_grid:
        bound = single_bound(kind, n, d, model.effective_density_sup, eps, side)
        if bound >= 1:
            logger.warning(f"Wegner bound {bound:.4g} >= 1 at eps={eps}, L={side}: run is vacuous")
        records = [
            TrialRecord(trial=i, seed=s, statistic=dist, hit=dist <= eps)
            for i, (s, dist) in enumerate(zip(seeds, distances, strict=True))
        ]
        reports.append(
            EnsembleReport.from_records(
                "wegner",
                records,
                bound,
                {"eps": eps, "energy": energy, "side": side, "kind": kind.value, "constant": wegner_constant(kind, n)},
            )
        )
    return reports


def wegner_single(
    spec: BoxSpec | RectangleSpec,
    model: ModelSpec,
    energy: float,
    eps: float,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> EnsembleReport:
    """P{dist(sigma(H_box), E) <= eps} against 2 C_n ||rho|| eps L^{nd}."""
    return wegner_sweep(spec, model, energy, [eps], trials, seed, workers)[0]


class WegnerTraceReport(BaseModel):
    mean_count: float
    ci_low: float
    ci_high: float
    bound: float
    passed: bool


def trace_count(region: Region, field: DisorderField, model: ModelSpec, interval: tuple[float, float]) -> int:
    """tr chi_I(H_region): eigenvalues in the closed interval."""
    lo, hi = interval
    values = eigenvalues_only(assemble(region, field, with_particles(model, region.n)))
    return int(np.count_nonzero((values >= lo) & (values <= hi)))


def wegner_trace_report(
    spec: BoxSpec | RectangleSpec, model: ModelSpec, interval: tuple[float, float], counts: list[int]
) -> WegnerTraceReport:
    lo, hi = interval
    kind, side = _kind_side(spec)
    estimate = mean_ci(counts)
    bound = wegner_constant(kind, spec.n) * model.effective_density_sup * (hi - lo) * side ** (spec.n * spec.d)
    return WegnerTraceReport(
        mean_count=estimate.mean,
        ci_low=estimate.ci_low,
        ci_high=estimate.ci_high,
        bound=bound,
        passed=estimate.ci_low <= bound,
    )


def wegner_trace(
    spec: BoxSpec | RectangleSpec,
    model: ModelSpec,
    interval: tuple[float, float],
    trials: int,
    seed: int,
    workers: int | None = None,
) -> WegnerTraceReport:
    """E tr chi_I(H) against C_n ||rho|| |I| L^{nd}."""
    lo, hi = interval
    if not lo < hi:
        msg = f"empty interval {interval}"
        raise PreconditionError(msg)
    region = enumerate_shape(spec)
    local = with_particles(model, region.n)

    def trial(_index: int, trial_seed: int) -> int:
        return trace_count(region, sample_for_regions(local, [region], trial_seed), local, interval)

    counts = map_trials(trial, trials, seed, workers, experiment="wegner-trace")
    return wegner_trace_report(spec, model, interval, counts)


# ==================== Wegner: pairs of rectangles ====================


def _check_pair(a: RectangleSpec, b: RectangleSpec) -> Separation:
    if not (a.symmetrized and b.symmetrized and a.n == 2 and b.n == 2):
        msg = "pair Wegner needs two symmetrized two-particle rectangles"
        raise PreconditionError(msg)
    separation = separation_class(a, b)
    if separation is Separation.NEITHER:
        msg = f"rectangles centered at {a.center} and {b.center} are not partially separated"
        raise PreconditionError(msg)
    return separation


def wegner_pair(
    a: RectangleSpec,
    b: RectangleSpec,
    model: ModelSpec,
    eps: float,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> EnsembleReport:
    """P{dist(sigma(H_a), sigma(H_b)) <= eps} against 16 ||rho|| eps L^{4d}."""
    _check_pair(a, b)
    ra, rb = enumerate_rectangle(a), enumerate_rectangle(b)
    local = with_particles(model, 2)

    def trial(index: int, trial_seed: int) -> TrialRecord:
        field = sample_for_regions(local, [ra, rb], trial_seed)
        gap = pair_spectral_gap(ra, rb, field, local)
        return TrialRecord(trial=index, seed=trial_seed, statistic=gap, hit=gap <= eps)

    records = map_trials(trial, trials, seed, workers, experiment="wegner-pair")
    return wegner_pair_report(a, b, model, eps, records)


def pair_spectral_gap(ra: Region, rb: Region, field: DisorderField, model: ModelSpec) -> float:
    local = with_particles(model, 2)
    return spectral_gap(eigenvalues_only(assemble(ra, field, local)), eigenvalues_only(assemble(rb, field, local)))


def wegner_pair_report(
    a: RectangleSpec, b: RectangleSpec, model: ModelSpec, eps: float, records: list[TrialRecord]
) -> EnsembleReport:
    separation = _check_pair(a, b)
    side = max(a.max_side, b.max_side)
    bound = pair_bound(a.d, model.effective_density_sup, eps, side)
    if bound >= 1:
        logger.warning(f"Pair Wegner bound {bound:.4g} >= 1 at eps={eps}, L={side}: run is vacuous")
    return EnsembleReport.from_records(
        "wegner-pair", records, bound, {"eps": eps, "side": side, "separation": separation.value}
    )


class IndependenceReport(BaseModel):
    trials: int
    p_a: float
    p_b: float
    p_joint: float
    correlation: float
    tolerance: float = Field(..., description="3 / sqrt(N)")
    passed: bool


def pair_independence(
    a: RectangleSpec,
    b: RectangleSpec,
    model: ModelSpec,
    energy: float,
    eps: float,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> IndependenceReport:
    """Hit indicators of two fully separated rectangles decorrelate: |corr| <= 3/sqrt(N)."""
    if _check_pair(a, b) is not Separation.FULLY:
        msg = "independence holds for fully separated rectangles only"
        raise PreconditionError(msg)
    ra, rb = enumerate_rectangle(a), enumerate_rectangle(b)
    local = with_particles(model, 2)

    def trial(_index: int, trial_seed: int) -> tuple[bool, bool]:
        field = sample_for_regions(local, [ra, rb], trial_seed)
        hits = []
        for region in (ra, rb):
            values = eigenvalues_only(assemble(region, field, local))
            hits.append(float(np.abs(values - energy).min()) <= eps)
        return hits[0], hits[1]

    hits = np.asarray(map_trials(trial, trials, seed, workers, experiment="wegner-independence"), dtype=bool)
    return independence_report(hits)


def independence_report(hits: np.ndarray) -> IndependenceReport:
    """Decorrelation of a (trials, 2) matrix of per-rectangle hit indicators."""
    pairs = np.asarray(hits, dtype=float)
    trials = len(pairs)
    corr = correlation(pairs[:, 0], pairs[:, 1])
    tolerance = 3 / math.sqrt(trials)
    return IndependenceReport(
        trials=trials,
        p_a=float(pairs[:, 0].mean()),
        p_b=float(pairs[:, 1].mean()),
        p_joint=float((pairs[:, 0] * pairs[:, 1]).mean()),
        correlation=corr,
        tolerance=tolerance,
        passed=abs(corr) <= tolerance,
    )


# ==================== Combes-Thomas ====================


class CombesThomasReport(BaseModel):
    """Worst ratio |G(z;x,y)| / bound over all pairs and every eps of the grid."""

    eta: float = Field(..., description="dist(z, sigma(H_S))")
    max_ratio: float
    worst_eps: float
    worst_pair: tuple[int, int]
    passed: bool
    window_eta: float | None = Field(None, description="dist(z, coarse enclosure of sigma(H)); reported only")
    window_max_ratio: float | None = None


def _ct_ratios(green_abs: np.ndarray, dist: np.ndarray, eta: float, dim: int, eps_grid: tuple[float, ...]):
    worst = (0.0, eps_grid[0], (0, 0))
    for eps in eps_grid:
        rate = math.log(eps * eta / (2 * dim) + 1)
        bound = np.exp(-rate * dist) / (eta * (1 - eps))
        ratio = green_abs / bound
        k = int(np.argmax(ratio))
        if ratio.flat[k] > worst[0]:
            i, j = np.unravel_index(k, ratio.shape)
            worst = (float(ratio.flat[k]), eps, (int(i), int(j)))
    return worst


def combes_thomas_check(
    region: Region,
    field: DisorderField,
    model: ModelSpec,
    z: complex,
    eps_grid: tuple[float, ...] = EPS_GRID,
) -> CombesThomasReport:
    """Every |<delta_x, (H_S - z)^{-1} delta_y>| against the bound with eta = dist(z, sigma(H_S)), dimension nd."""
    if any(not 0 < eps < 1 for eps in eps_grid):
        msg = f"eps values must lie in (0, 1), got {eps_grid}"
        raise PreconditionError(msg)
    local = with_particles(model, region.n)
    spectral = eig(assemble(region, field, local))
    eta = spectral.distance_to(z)
    if eta <= RESONANCE_RTOL * spectral.scale:
        msg = f"z={z} is resonant for the region"
        raise ResonantEnergyError(msg)
    green_abs = np.abs(spectral.green_block(z, np.arange(len(region)), np.arange(len(region))))
    flat = region.flat
    dist = np.abs(flat[:, None, :] - flat[None, :, :]).max(axis=2).astype(float)
    dim = region.n * region.d
    ratio, eps, pair = _ct_ratios(green_abs, dist, eta, dim, eps_grid)

    window_eta = window_ratio = None
    lo, hi = operator_norm_bounds(local, region)
    zc = complex(z)
    outside = max(lo - zc.real, zc.real - hi, 0.0)
    candidate = math.hypot(outside, zc.imag)
    if candidate > 0:
        window_eta = candidate
        window_ratio = _ct_ratios(green_abs, dist, candidate, dim, eps_grid)[0]

    passed = ratio <= 1 + CT_TOLERANCE
    if not passed:
        logger.error(f"Combes-Thomas bound exceeded: ratio={ratio:.6g} eps={eps} pair={pair}")
    return CombesThomasReport(
        eta=eta,
        max_ratio=ratio,
        worst_eps=eps,
        worst_pair=pair,
        passed=passed,
        window_eta=window_eta,
        window_max_ratio=window_ratio,
    )


# ==================== Probability lemma ====================


class ProbabilityLemmaReport(BaseModel):
    """Both tail inequalities of the lemma, per threshold a."""

    a_grid: list[float]
    lhs_complex: list[float] = Field(..., description="P(a < |G_box(E+i eps; y, u)|)")
    lhs_real: list[float] = Field(..., description="P(a < |G_box(E; y, u)|)")
    lhs_complex_ci_low: list[float]
    lhs_real_ci_low: list[float]
    sup_mean_green: float = Field(..., description="sup_k E|G(E+i eps; k, u)| on the enclosing box")
    rhs_complex: list[float]
    rhs_real: list[float]
    p0: float
    eps_term: list[float]
    truncation_term: float = Field(
        ..., description="Combes-Thomas bound on |G_full - G_enclosing|(E+i eps; k, u), added to the boundary mean"
    )
    passed: bool


@dataclass(frozen=True, eq=False)
class ProbabilityLemmaSetup:
    """Fixed geometry of one probability-lemma ensemble: B1 the inner third, B2 the interior boundary."""

    box: BoxSpec
    model: ModelSpec
    energy: float
    eps: float
    gamma: float
    region: Region
    big_region: Region
    u_small: int
    u_big: int
    y_idx: int
    ks: np.ndarray  # enclosing-box indices of the interior and exterior boundary
    truncation: float  # bound on |G_full - G_enclosing| at every k

    def sample(self, trial_seed: int) -> DisorderField:
        return sample_for_regions(self.model, [self.big_region], trial_seed)

    def trial(self, trial_seed: int) -> tuple[float, float, np.ndarray]:
        return self.evaluate(self.sample(trial_seed))

    def evaluate(self, field: DisorderField) -> tuple[float, float, np.ndarray]:
        """|G_box(E+i eps; y, u)|, |G_box(E; y, u)| and |G_big(E+i eps; k, u)| over the boundary k."""
        small = assemble(self.region, field, self.model)
        z = complex(self.energy, self.eps)
        col = resolvent_columns(small, z, np.array([self.u_small]))[:, 0]
        real_col = resolvent_columns(small, self.energy, np.array([self.u_small]))[:, 0]
        big = resolvent_columns(assemble(self.big_region, field, self.model), z, np.array([self.u_big]))[:, 0]
        return abs(col[self.y_idx]), abs(real_col[self.y_idx]), np.abs(big[self.ks])


def enclosing_truncation_bound(big_region: Region, ks: np.ndarray, eps: float) -> float:
    """Bound on |G_full - G_big|(E + i eps; k, u) for every k of ``ks``.

    The resolvent identity across the boundary edges of ``big_region`` gives at most
    (#edges / eps) * sup_w |G_big(k, w)| over its interior boundary w, and Combes-Thomas
    with eta = eps bounds each |G_big(k, w)| at the l1 distance from ks to that boundary.
    """
    bnd = boundary_sets(big_region)
    r = float(cdist(big_region.flat[ks], big_region.flat[bnd.minus], metric="cityblock").min())
    return bnd.edge_count / eps * combes_thomas_bound(eps, 0.5, big_region.n * big_region.d, r)


def probability_lemma_setup(
    box: BoxSpec,
    model: ModelSpec,
    energy: float,
    eps: float,
    gamma: float | None = None,
    enlargement: int = 4,
    u: tuple | None = None,
    y: tuple | None = None,
) -> ProbabilityLemmaSetup:
    """The full-lattice Green function is replaced by the one of a box ``enlargement`` times larger."""
    n, d, side = box.n, box.d, box.side
    gamma = gamma if gamma is not None else n * d + 1
    if gamma <= n * d:
        msg = f"gamma must exceed nd={n * d}, got {gamma}"
        raise PreconditionError(msg)
    region = enumerate_box(box)
    big_region = enumerate_box(box.with_side(enlargement * side))
    bnd = boundary_sets(region)
    third = inner_third(box)
    u = u if u is not None else tuple(third.flat[len(third) // 2].tolist())
    y_idx = region.index_of(y) if y is not None else int(bnd.minus[0])
    if u not in third:
        msg = f"u={u} is not in the inner third"
        raise GeometryError(msg)
    ks = np.unique(np.concatenate([big_region.lookup(bnd.plus.sites), big_region.lookup(region.sites[bnd.minus])]))
    if np.any(ks < 0):
        msg = "enclosing box does not contain the exterior boundary"
        raise GeometryError(msg)
    truncation = enclosing_truncation_bound(big_region, ks, eps)
    logger.debug(f"Enclosing side {enlargement * side}: truncation bound {truncation:.3e}")
    return ProbabilityLemmaSetup(
        box=box,
        model=with_particles(model, n),
        energy=energy,
        eps=eps,
        gamma=gamma,
        region=region,
        big_region=big_region,
        u_small=region.index_of(u),
        u_big=big_region.index_of(u),
        y_idx=y_idx,
        ks=ks,
        truncation=truncation,
    )


def probability_lemma_summary(
    setup: ProbabilityLemmaSetup, rows: list[tuple[float, float, np.ndarray]], a_grid: list[float]
) -> ProbabilityLemmaReport:
    box, eps = setup.box, setup.eps
    n, d, side = box.n, box.d, box.side
    trials = len(rows)
    g_complex = np.array([r[0] for r in rows])
    g_real = np.array([r[1] for r in rows])
    sup_mean = float(np.vstack([r[2] for r in rows]).mean(axis=0).max())
    c_n = wegner_constant(box.kind, n)
    rho = setup.model.effective_density_sup
    p0 = 2 * c_n * rho * side ** (n * d - setup.gamma)
    scale = side ** (setup.gamma + 2 * n * d)

    lhs_c, lhs_r, lo_c, lo_r, rhs_c, rhs_r, eps_terms = [], [], [], [], [], [], []
    passed = True
    for a in a_grid:
        pc = clopper_pearson(int(np.count_nonzero(g_complex > a)), trials)
        pr = clopper_pearson(int(np.count_nonzero(g_real > a)), trials)
        eps_term = 2**1.5 * c_n * rho * math.sqrt(eps / a) * side ** (n * d)
        rc = 4 * scale / a * (sup_mean + setup.truncation) + p0
        rr = 8 * scale / a * (sup_mean + setup.truncation) + eps_term + p0
        lhs_c.append(pc.estimate)
        lhs_r.append(pr.estimate)
        lo_c.append(pc.ci_low)
        lo_r.append(pr.ci_low)
        rhs_c.append(rc)
        rhs_r.append(rr)
        eps_terms.append(eps_term)
        passed = passed and pc.ci_low <= rc and pr.ci_low <= rr
    return ProbabilityLemmaReport(
        a_grid=list(a_grid),
        lhs_complex=lhs_c,
        lhs_real=lhs_r,
        lhs_complex_ci_low=lo_c,
        lhs_real_ci_low=lo_r,
        sup_mean_green=sup_mean,
        rhs_complex=rhs_c,
        rhs_real=rhs_r,
        p0=p0,
        eps_term=eps_terms,
        truncation_term=setup.truncation,
        passed=passed,
    )


def probability_lemma_check(
    box: BoxSpec,
    model: ModelSpec,
    energy: float,
    eps: float,
    a_grid: list[float],
    trials: int,
    seed: int,
    gamma: float | None = None,
    enlargement: int = 4,
    u: tuple | None = None,
    y: tuple | None = None,
    workers: int | None = None,
) -> ProbabilityLemmaReport:
    """Monte-Carlo both sides of the tail bounds."""
    setup = probability_lemma_setup(box, model, energy, eps, gamma, enlargement, u, y)
    rows = map_trials(lambda _i, trial_seed: setup.trial(trial_seed), trials, seed, workers, experiment="prob-lemma")
    return probability_lemma_summary(setup, rows, a_grid)
