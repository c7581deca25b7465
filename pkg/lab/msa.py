"""Bootstrap multiscale analysis for symmetrized two-particle boxes, as runnable checks.

Deterministic lemmas are evaluated per realization: hypotheses and conclusion are
computed independently and the implication is asserted only behind explicit
finite-volume gates. Probabilistic statements are estimated by Monte Carlo and
reported next to the recursion inequalities they feed.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Literal

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from lab.config import settings
from lab.errors import GeometryError, PreconditionError, ResourceCeilingError
from lab.geometry import (
    BoxSpec,
    Cover,
    DistanceKind,
    Point,
    RectangleSpec,
    Region,
    Separation,
    boundary_sets,
    enumerate_box,
    is_interactive,
    is_L_distant,
    one_particle_box,
    one_particle_cover,
    partial_cover,
    representative_centers,
    separation_class,
)
from lab.hamiltonian import DisorderField, ModelSpec, assemble, sample_for_regions, with_particles
from lab.harness.pool import map_trials
from lab.models.reports import EnsembleReport, TrialRecord
from lab.spectral import (
    BoxClassifier,
    BoxVerdict,
    ClassificationParams,
    VerdictKind,
    beta_resonance_threshold,
    eigenvalues_only,
    suitable_resonance_threshold,
    two_particle_from_one_check,
)
from lab.stats import Proportion, clopper_pearson

logger = logging.getLogger(__name__)

Variant = Literal["first", "second", "third", "fourth"]

# Exact branch-and-bound above this many bad cells is replaced by a greedy lower bound
CLIQUE_NODE_BUDGET = 60
EVENT_GRID_POINTS = 64


# ==================== Schedules and thresholds ====================


def third_msa_factor(zeta0: float) -> float:
    """Y = max{34^(1/(1-zeta0)), 4^(1/zeta0)}."""
    return max(34 ** (1 / (1 - zeta0)), 4 ** (1 / zeta0))


class ScaleSchedule(BaseModel):
    """Length scales L_{k+1} = Y L_k (first, third) or L_k^gamma (second, fourth), with the exponent family."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Variant = Field("first", description="Which multiscale analysis drives the recursion")
    initial_side: float = Field(..., ge=1, description="L_0")
    factor: float | None = Field(None, gt=1, description="Y; defaults to the third-MSA value for 'third'")
    gamma: float | None = Field(None, gt=1, description="gamma for L_{k+1} = L_k^gamma")
    bad_cells: int = Field(1, ge=0, description="J, the bad-cluster budget")
    levels: int = Field(2, ge=1, description="Number of scales after L_0")
    zeta: float = Field(0.1, gt=0, lt=1)
    tau: float = Field(0.9, gt=0, lt=1)
    beta: float = Field(0.5, gt=0, lt=1)
    zeta0: float = Field(0.6, gt=0, lt=1)
    zeta1: float = Field(0.4, gt=0, lt=1)
    zeta2: float = Field(0.2, gt=0, lt=1)
    kappa: float | None = Field(None, gt=0, description="Mass-loss exponent for regular schedules")

    @model_validator(mode="after")
    def _check_variant(self) -> ScaleSchedule:
        if self.variant == "first" and self.factor is None:
            msg = "the first schedule needs a factor Y"
            raise ValueError(msg)
        if self.variant in ("second", "fourth"):
            if self.gamma is None:
                msg = f"the {self.variant} schedule needs gamma > 1"
                raise ValueError(msg)
            if self.kappa is not None and not self.kappa < min(self.gamma - 1, self.gamma * (1 - self.beta), 1):
                msg = f"kappa={self.kappa} must be below min(gamma-1, gamma(1-beta), 1)"
                raise ValueError(msg)
        if self.variant == "fourth":
            problems = exponent_chain_violations(self)
            if problems:
                msg = "exponent chain violated: " + ", ".join(problems)
                raise ValueError(msg)
        return self

    @property
    def effective_factor(self) -> float | None:
        if self.variant == "third" and self.factor is None:
            return third_msa_factor(self.zeta0)
        return self.factor

    def sides(self) -> list[float]:
        """L_0, ..., L_levels on the half-integer grid."""
        out = [self.initial_side]
        for _ in range(self.levels):
            if self.variant in ("first", "third"):
                nxt = self.effective_factor * out[-1]
            else:
                nxt = math.ceil(out[-1] ** self.gamma)
            out.append(round(2 * nxt) / 2)
        return out


def exponent_chain_violations(schedule: ScaleSchedule) -> list[str]:
    """Failed links of 0<zeta<tau<1, zeta<zeta2<gamma zeta2<zeta1<gamma zeta1<beta<zeta0<tau, zeta gamma^2<zeta2."""
    s, g = schedule, schedule.gamma or 1.0
    links = {
        "zeta<tau": s.zeta < s.tau,
        "zeta<zeta2": s.zeta < s.zeta2,
        "gamma*zeta2<zeta1": g * s.zeta2 < s.zeta1,
        "gamma*zeta1<beta": g * s.zeta1 < s.beta,
        "beta<zeta0": s.beta < s.zeta0,
        "zeta0<tau": s.zeta0 < s.tau,
        "zeta*gamma^2<zeta2": s.zeta * g * g < s.zeta2,
    }
    return [name for name, ok in links.items() if not ok]


class MSAThresholds(BaseModel):
    """Verdict exponents, energy cutoffs and the initial-scale probability threshold."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    theta: float = Field(20.0, gt=0, description="Suitability exponent")
    p: float = Field(1.0, gt=0, description="Target decay exponent L^-p")
    p0: float | None = Field(None, gt=0, lt=1, description="Relaxed initial threshold; None uses (6Y+2)^(-4d)")
    e1: float = Field(2.0, description="E^(1)")
    e2: float = Field(1.0, description="E^(2) < E^(1)")
    mass: float = Field(1.0, gt=0, description="m_0 for regular schedules")
    m_star_tau: float = Field(1.0, gt=0, description="One-particle mass m*_tau, estimated at n=1")
    delta_tau: float = Field(0.1, gt=0, description="One-particle interval radius delta_tau")
    s: float = Field(1.0, gt=0, description="Suitable-resonance exponent")

    @model_validator(mode="after")
    def _check_energies(self) -> MSAThresholds:
        if not self.e1 > self.e2:
            msg = f"need E1 > E2, got {self.e1} <= {self.e2}"
            raise ValueError(msg)
        return self

    @property
    def relaxed(self) -> bool:
        return self.p0 is not None


def theorem_p0(factor: float, d: int) -> float:
    """p_0 = (6Y+2)^(-4d)."""
    return (6 * factor + 2) ** (-4 * d)


def recursion_bound(p_prev: float, next_side: float, factor: float, d: int, bad_cells: int, p: float) -> float:
    """p_{k+1} <= (L_{k+1}^-p + ((6Y+2)^(2d) p_k)^(J+1)) / 2."""
    return (next_side ** (-p) + ((6 * factor + 2) ** (2 * d) * p_prev) ** (bad_cells + 1)) / 2


def m_of_L(m_star_tau: float, kappa: float, side: float, d: int) -> float:
    """m(L) = m*_tau - 1/(2L^kappa) - 6(d+1) log(2L)/L."""
    return m_star_tau - 1 / (2 * side**kappa) - 6 * (d + 1) * math.log(2 * side) / side


class FourthMSAConstants(BaseModel):
    delta: float = Field(..., description="(1/2) exp(-L0^zeta0 - 2 L0^beta)")
    m0: float = Field(..., description="2 L0^(zeta0-1) - 6 log(2 L0)/L0")


def fourth_msa_constants(initial_side: float, zeta0: float, beta: float) -> FourthMSAConstants:
    L0 = initial_side
    return FourthMSAConstants(
        delta=0.5 * math.exp(-(L0**zeta0) - 2 * L0**beta),
        m0=2 * L0 ** (zeta0 - 1) - 6 * math.log(2 * L0) / L0,
    )


def preregular_overlay(side: float, ell: float, tau: float, d: int) -> float:
    """2 L^(3d) e^(-l^tau)."""
    return 2 * side ** (3 * d) * math.exp(-(ell**tau))


def one_particle_overlay(ell: float, tau: float, d: int) -> float:
    """l^(2d) e^(-l^tau)."""
    return ell ** (2 * d) * math.exp(-(ell**tau))


def pair_wegner_overlay(side: float, ell: float, bad_cells: int, d: int, density_sup: float, beta: float) -> float:
    """((J+1)(6L/l+2)^(2d))^2 * 16 ||rho|| L^(4d) e^(-l^beta)."""
    family = (bad_cells + 1) * (6 * side / ell + 2) ** (2 * d)
    return family**2 * 16 * density_sup * side ** (4 * d) * math.exp(-(ell**beta))


# ==================== Covers ====================


class CoverClassification(BaseModel):
    """Per-cell verdicts of an l-suitable partial cover at one energy."""

    energy: float
    verdicts: list[BoxVerdict]
    interactive: list[bool]

    def bad(self, kind: VerdictKind = "suitable") -> list[int]:
        return [i for i, v in enumerate(self.verdicts) if not v.holds(kind)]


def classify_cover(
    cover: Cover, field: DisorderField, model: ModelSpec, energy: float, params: ClassificationParams
) -> CoverClassification:
    verdicts, interactive = [], []
    for cell in cover.cells:
        classifier = BoxClassifier(cell, field, model)
        verdicts.append(classifier.verdict(energy, params))
        interactive.append(is_interactive(classifier.region, model.interaction.r0))
    return CoverClassification(energy=energy, verdicts=verdicts, interactive=interactive)


class DistantSetResult(BaseModel):
    size: int = Field(..., ge=0, description="Largest pairwise l-distant set of bad cells found")
    exact: bool = Field(..., description="False when the node budget forced a greedy lower bound")
    bad_count: int


def distant_graph(cells: list[BoxSpec]) -> nx.Graph:
    """Graph on cells with an edge between every l-distant pair."""
    graph = nx.Graph()
    graph.add_nodes_from(range(len(cells)))
    for i, j in itertools.combinations(range(len(cells)), 2):
        if is_L_distant(cells[i], cells[j]):
            graph.add_edge(i, j)
    return graph


def greedy_clique(graph: nx.Graph) -> list[int]:
    """Clique grown one node at a time, always taking the candidate with most candidate neighbours."""
    clique: list[int] = []
    candidates = set(graph)
    while candidates:
        node = max(sorted(candidates), key=lambda v: len(candidates.intersection(graph[v])))
        clique.append(node)
        candidates.intersection_update(graph[node])
    return clique


def max_distant_bad_set(
    verdicts: list[BoxVerdict], kind: VerdictKind = "suitable", node_budget: int = CLIQUE_NODE_BUDGET
) -> DistantSetResult:
    """Maximum number of pairwise l-distant bad cells: a maximum clique of the distance graph."""
    bad = [v.box for v in verdicts if not v.holds(kind)]
    if not bad:
        return DistantSetResult(size=0, exact=True, bad_count=0)
    graph = distant_graph(bad)
    if len(bad) > node_budget:
        logger.warning(f"{len(bad)} bad cells exceed the clique budget {node_budget}; reporting a lower bound")
        return DistantSetResult(size=len(greedy_clique(graph)), exact=False, bad_count=len(bad))
    _, size = nx.max_weight_clique(graph, weight=None)
    return DistantSetResult(size=int(size), exact=True, bad_count=len(bad))


# ==================== Deterministic step ====================


class StepCheckReport(BaseModel):
    kind: str
    factor: float = Field(..., description="Y = L / l")
    cells: int
    box_nonresonant: bool
    bad_set: DistantSetResult
    budget_ok: bool
    cluster_boxes_nonresonant: bool | None = Field(None, description="None when (i) or (ii) already failed")
    hypotheses_hold: bool
    first_margin: float | None = Field(None, description="(2d-1-theta)(Y/2-3-28J)+s+theta, must be < 0")
    second_margin: float | None = Field(None, description="|boundary|^2 (Yl)^s l^-theta, must be <= 1")
    gates_hold: bool
    concluded_parameter: float
    conclusion_holds: bool
    asserted: bool
    violated: bool


def _region_nonresonant(
    region: Region, field: DisorderField, model: ModelSpec, energy: float, threshold: float
) -> bool:
    values = eigenvalues_only(assemble(region, field, with_particles(model, region.n)))
    return bool(np.abs(values - energy).min() >= threshold)


def _resonance_threshold(kind: VerdictKind, side: float, params: ClassificationParams) -> float:
    if kind == "suitable":
        return suitable_resonance_threshold(side, params.s)
    return beta_resonance_threshold(side, params.beta)


def cluster_box_sides(ell: float, bad_cells: int) -> list[float]:
    return [j * (8 * ell + 1) for j in range(1, bad_cells + 1)]


def step_regions(box: BoxSpec, ell: float, bad_cells: int) -> list[Region]:
    """Every region a deterministic step touches, for sampling one shared field."""
    regions = [enumerate_box(box)]
    centers = partial_cover(box, ell).centers
    for side in cluster_box_sides(ell, bad_cells):
        regions.extend(enumerate_box(BoxSpec(kind=DistanceKind.SYMMETRIZED, center=c, side=side)) for c in centers)
    return regions


def deterministic_step_check(
    box: BoxSpec,
    field: DisorderField,
    model: ModelSpec,
    energy: float,
    ell: float,
    bad_cells: int,
    params: ClassificationParams,
    kind: VerdictKind = "suitable",
    kappa: float | None = None,
) -> StepCheckReport:
    """Hypotheses (i)-(iii) and the conclusion of the single-step lemma, on one realization.

    The implication is asserted for the suitable variant when both margin inequalities hold;
    the regular and SES variants are reported only.
    """
    if box.kind is not DistanceKind.SYMMETRIZED or box.n != 2:
        msg = "the deterministic step runs on symmetrized two-particle boxes"
        raise PreconditionError(msg)
    d = box.d
    factor = box.side / ell
    if kind == "suitable":
        if not params.theta > 4 * d - 2 + params.s:
            msg = f"theta={params.theta} must exceed 4d-2+s={4 * d - 2 + params.s}"
            raise PreconditionError(msg)
        if not factor >= 10 + 56 * bad_cells:
            msg = f"Y={factor} must be at least 10+56J={10 + 56 * bad_cells}"
            raise PreconditionError(msg)
        concluded = params.theta
    elif kind == "regular":
        if kappa is None:
            msg = "the regular step needs kappa"
            raise PreconditionError(msg)
        concluded = params.mass - 1 / (2 * ell**kappa)
    else:
        concluded = params.zeta

    cover = partial_cover(box, ell)
    box_ok = _region_nonresonant(
        enumerate_box(box), field, model, energy, _resonance_threshold(kind, box.side, params)
    )
    verdicts = classify_cover(cover, field, model, energy, params).verdicts
    bad_set = max_distant_bad_set(verdicts, kind)
    budget_ok = bad_set.exact and bad_set.size <= bad_cells

    clusters_ok = None
    if box_ok and budget_ok:
        clusters_ok = True
        for side in cluster_box_sides(ell, bad_cells):
            threshold = _resonance_threshold(kind, side, params)
            for center in cover.centers:
                region = enumerate_box(BoxSpec(kind=DistanceKind.SYMMETRIZED, center=center, side=side))
                if not _region_nonresonant(region, field, model, energy, threshold):
                    clusters_ok = False
                    break
            if not clusters_ok:
                break
    hypotheses = bool(box_ok and budget_ok and clusters_ok)

    first = second = None
    gates = False
    if kind == "suitable":
        first = (2 * d - 1 - params.theta) * (factor / 2 - 3 - 28 * bad_cells) + params.s + params.theta
        edges = boundary_sets(enumerate_box(cover.cells[0])).edge_count
        second = edges**2 * (factor * ell) ** params.s * ell ** (-params.theta)
        gates = first < 0 and second <= 1

    conclusion = concluded > 0 and BoxClassifier(box, field, model).holds(kind, energy, concluded)
    asserted = hypotheses and gates
    violated = asserted and not conclusion
    if violated:
        logger.error(f"Deterministic step failed behind its gates: box={box.center} L={box.side} E={energy}")
    return StepCheckReport(
        kind=kind,
        factor=factor,
        cells=len(cover.cells),
        box_nonresonant=box_ok,
        bad_set=bad_set,
        budget_ok=budget_ok,
        cluster_boxes_nonresonant=clusters_ok,
        hypotheses_hold=hypotheses,
        first_margin=first,
        second_margin=second,
        gates_hold=gates,
        concluded_parameter=concluded,
        conclusion_holds=bool(conclusion),
        asserted=asserted,
        violated=violated,
    )


# ==================== Scale recursion ====================


class RecursionRow(BaseModel):
    level: int
    side: float
    parameter: float = Field(..., description="theta, m_k or zeta0 used for the verdict at this scale")
    per_center: list[Proportion]
    max_estimate: float
    max_ci_high: float
    bound_from_previous: float | None = Field(None, description="Recursion inequality evaluated at p-hat_{k-1}")
    target: float | None = Field(None, description="L_k^-p, e^(-L_k^zeta1) or e^(-L_k^zeta2)")


class RecursionTrace(BaseModel):
    variant: str
    rows: list[RecursionRow]
    gates: dict[str, bool]
    p0: float
    p0_relaxed: bool
    p0_gate: bool = Field(..., description="p-hat_0 <= p0")
    truncated: bool = Field(False, description="A scale exceeded the dense ceiling")
    nonincreasing: bool

    def csv_rows(self) -> list[dict]:
        return [
            {
                "level": r.level,
                "side": r.side,
                "parameter": r.parameter,
                "p_hat": r.max_estimate,
                "ci_high": r.max_ci_high,
                "bound": "" if r.bound_from_previous is None else r.bound_from_previous,
                "target": r.target,
            }
            for r in self.rows
        ]


def default_centers(model: ModelSpec, side: float) -> list[Point]:
    if model.n == 1:
        return [((0.0,) * model.d,)]
    return representative_centers(side, model.interaction.r0, model.d)


def _box(model: ModelSpec, center: Point, side: float) -> BoxSpec:
    kind = DistanceKind.SYMMETRIZED if model.n > 1 else DistanceKind.INFINITY
    return BoxSpec(kind=kind, center=center, side=side)


def bad_flags(
    boxes: list[BoxSpec], field: DisorderField, model: ModelSpec, kind: VerdictKind, energy: float, param: float
) -> list[bool]:
    """Per box: not (param, E)-<kind> on this realization."""
    return [not BoxClassifier(b, field, model).holds(kind, energy, param) for b in boxes]


def recursion_boxes(model: ModelSpec, side: float, centers: list[Point] | None = None) -> list[BoxSpec]:
    return [_box(model, c, side) for c in centers or default_centers(model, side)]


class ScaleLevel(BaseModel):
    """What a recursion level classifies: verdict kind and parameter at side L_k."""

    level: int
    side: float
    kind: VerdictKind
    param: float


def level_parameters(schedule: ScaleSchedule, thresholds: MSAThresholds) -> list[ScaleLevel]:
    """Per-level verdict parameters; the regular masses decrease by 1/(2 L_k^kappa) per step.

    For the fourth variant the parameter is the event-R mass m0/2 at every level.
    """
    levels = []
    mass = thresholds.mass
    for k, side in enumerate(schedule.sides()):
        if schedule.variant == "first":
            kind, param = "suitable", thresholds.theta
        elif schedule.variant == "second":
            kind, param = "regular", mass
            if schedule.kappa is not None:
                mass = mass - 1 / (2 * side**schedule.kappa)
        elif schedule.variant == "third":
            kind, param = "ses", schedule.zeta0
        else:
            kind = "regular"
            param = fourth_msa_constants(schedule.initial_side, schedule.zeta0, schedule.beta).m0 / 2
        levels.append(ScaleLevel(level=k, side=side, kind=kind, param=param))
    return levels


def event_R_partner(x: Point, side: float) -> Point:
    """Every particle of x moved by 3L along the first axis."""
    return tuple(tuple(c + 3 * side if k == 0 else c for k, c in enumerate(row)) for row in x)


def recursion_row(level: ScaleLevel, hits: np.ndarray, target: float | None = None) -> RecursionRow:
    """Per-center Clopper-Pearson estimates from a (trials, centers) boolean matrix."""
    hits = np.asarray(hits, dtype=bool)
    trials = hits.shape[0]
    per_center = [clopper_pearson(int(hits[:, i].sum()), trials) for i in range(hits.shape[1])]
    return RecursionRow(
        level=level.level,
        side=level.side,
        parameter=level.param,
        per_center=per_center,
        max_estimate=max(p.estimate for p in per_center),
        max_ci_high=max(p.ci_high for p in per_center),
        target=target,
    )


def estimate_bad_prob(
    model: ModelSpec,
    side: float,
    energy: float,
    kind: VerdictKind,
    param: float,
    trials: int,
    seed: int,
    centers: list[Point] | None = None,
    workers: int | None = None,
    level: int = 0,
) -> RecursionRow:
    """Per-center P{box is not (param, E)-<kind>} with one shared field per trial."""
    boxes = recursion_boxes(model, side, centers)
    regions = [enumerate_box(b) for b in boxes]

    def trial(_index: int, trial_seed: int) -> dict:
        field = sample_for_regions(model, regions, trial_seed)
        bad = bad_flags(boxes, field, model, kind, energy, param)
        return {"bad": bad, "hit": any(bad)}

    results = map_trials(trial, trials, seed, workers, experiment="msa-recursion")
    hits = np.array([r["bad"] for r in results], dtype=bool).reshape(trials, len(boxes))
    return recursion_row(ScaleLevel(level=level, side=side, kind=kind, param=param), hits)


def estimate_nonsuitable_prob(
    model: ModelSpec,
    theta: float,
    energy: float,
    side: float,
    trials: int,
    seed: int,
    centers: list[Point] | None = None,
    workers: int | None = None,
) -> RecursionRow:
    return estimate_bad_prob(model, side, energy, "suitable", theta, trials, seed, centers, workers)


def theorem_gates(schedule: ScaleSchedule, thresholds: MSAThresholds, d: int) -> dict[str, bool]:
    gates: dict[str, bool] = {}
    if schedule.variant == "first":
        gates["theta>16d"] = thresholds.theta > 16 * d
        gates["0<p<theta-8d+2"] = 0 < thresholds.p < thresholds.theta - 8 * d + 2
        gates["Y>=10+56J"] = schedule.factor >= 10 + 56 * schedule.bad_cells
    if schedule.variant in ("second", "fourth"):
        g = schedule.gamma
        gates["1<gamma<1+p/(p+4d)"] = 1 < g < 1 + thresholds.p / (thresholds.p + 4 * d)
        if schedule.kappa is not None:
            gates["kappa<min(gamma-1,gamma(1-beta),1)"] = schedule.kappa < min(g - 1, g * (1 - schedule.beta), 1)
    if schedule.variant == "fourth":
        gates["exponent-chain"] = not exponent_chain_violations(schedule)
        gates["m0<m*_tau"] = (
            fourth_msa_constants(schedule.initial_side, schedule.zeta0, schedule.beta).m0 < thresholds.m_star_tau
        )
    return gates


def level_target(schedule: ScaleSchedule, thresholds: MSAThresholds, side: float) -> float:
    if schedule.variant == "third":
        return math.exp(-(side**schedule.zeta1))
    if schedule.variant == "fourth":
        return math.exp(-(side**schedule.zeta2))
    return side ** (-thresholds.p)


def fits_dense(model: ModelSpec, side: float) -> bool:
    try:
        return len(enumerate_box(_box(model, default_centers(model, side)[0], side))) <= settings.LAB_DENSE_CEILING
    except ResourceCeilingError:
        return False


def event_interval(schedule: ScaleSchedule, energy: float) -> tuple[float, float]:
    """[E - delta, E + delta] with delta from the fourth-MSA constants."""
    delta = fourth_msa_constants(schedule.initial_side, schedule.zeta0, schedule.beta).delta
    return energy - delta, energy + delta


def level_regions(
    level: ScaleLevel, schedule: ScaleSchedule, model: ModelSpec, centers: list[Point] | None = None
) -> list[Region]:
    """Regions one trial of this level samples disorder on."""
    boxes = recursion_boxes(model, level.side, centers)
    if schedule.variant == "fourth":
        partners = [_box(model, event_R_partner(b.center, level.side), level.side) for b in boxes]
        boxes = boxes + partners
    return [enumerate_box(b) for b in boxes]


def level_flags(
    level: ScaleLevel,
    schedule: ScaleSchedule,
    model: ModelSpec,
    energy: float,
    field: DisorderField,
    centers: list[Point] | None = None,
) -> list[bool]:
    """Per-center bad flags of one realization: a failed verdict, or event R for the fourth variant."""
    if schedule.variant != "fourth":
        return bad_flags(recursion_boxes(model, level.side, centers), field, model, level.kind, energy, level.param)
    interval = event_interval(schedule, energy)
    flags = []
    for box in recursion_boxes(model, level.side, centers):
        a, b, _ = event_R_boxes(box.center, event_R_partner(box.center, level.side), level.side)
        flags.append(not math.isnan(event_R_witness(a, b, field, model, level.param, interval)))
    return flags


def _event_row(
    model: ModelSpec,
    level: ScaleLevel,
    energy: float,
    schedule: ScaleSchedule,
    trials: int,
    seed: int,
    centers: list[Point] | None,
    workers: int | None,
) -> RecursionRow:
    interval = event_interval(schedule, energy)
    side = level.side
    columns = []
    for x in centers or default_centers(model, side):
        y = event_R_partner(x, side)
        report = estimate_event_R(model, level.param, interval, x, y, side, trials, seed, workers=workers)
        columns.append([r.hit for r in report.records])
    return recursion_row(level, np.array(columns, dtype=bool).T)


def assemble_trace(
    schedule: ScaleSchedule, thresholds: MSAThresholds, d: int, rows: list[RecursionRow], truncated: bool
) -> RecursionTrace:
    """Targets, the recursion-inequality overlay, the p0 gate and the theorem gates around measured rows."""
    sides = schedule.sides()
    factor = schedule.effective_factor
    p0 = thresholds.p0 if thresholds.relaxed else theorem_p0(factor or sides[1] / sides[0], d)
    if thresholds.relaxed:
        logger.warning(f"Relaxed initial threshold p0={p0:g} in place of (6Y+2)^(-4d)")
    out: list[RecursionRow] = []
    for row in rows:
        update: dict = {"target": level_target(schedule, thresholds, row.side)}
        if out:
            step_factor = factor or row.side / out[-1].side
            update["bound_from_previous"] = recursion_bound(
                out[-1].max_estimate, row.side, step_factor, d, schedule.bad_cells, thresholds.p
            )
        out.append(row.model_copy(update=update))
    estimates = [r.max_estimate for r in out]
    return RecursionTrace(
        variant=schedule.variant,
        rows=out,
        gates=theorem_gates(schedule, thresholds, d),
        p0=p0,
        p0_relaxed=thresholds.relaxed,
        p0_gate=bool(out) and out[0].max_estimate <= p0,
        truncated=truncated,
        nonincreasing=all(b <= a for a, b in itertools.pairwise(estimates)),
    )


def dense_levels(schedule: ScaleSchedule, thresholds: MSAThresholds, model: ModelSpec) -> tuple[list[ScaleLevel], bool]:
    """Leading levels whose boxes fit the dense ceiling, and whether any were cut."""
    levels = []
    for level in level_parameters(schedule, thresholds):
        if not fits_dense(model, level.side):
            logger.warning(f"Scale L_{level.level}={level.side} exceeds the dense ceiling; trace truncated")
            return levels, True
        levels.append(level)
    return levels, False


def run_scale_recursion(
    schedule: ScaleSchedule,
    thresholds: MSAThresholds,
    model: ModelSpec,
    energy: float,
    trials: int,
    seed: int,
    centers: list[Point] | None = None,
    workers: int | None = None,
) -> RecursionTrace:
    """Track p-hat_k across scales and overlay the recursion inequality; diagnostic only."""
    levels, truncated = dense_levels(schedule, thresholds, model)
    rows: list[RecursionRow] = []
    for level in levels:
        if schedule.variant == "fourth":
            row = _event_row(model, level, energy, schedule, trials, seed, centers, workers)
        else:
            row = estimate_bad_prob(
                model, level.side, energy, level.kind, level.param, trials, seed, centers, workers, level=level.level
            )
        rows.append(row)
        logger.info(f"Scale L_{level.level}={level.side}: p-hat={row.max_estimate:.4g}")
    return assemble_trace(schedule, thresholds, model.d, rows, truncated)


# ==================== Preregularity ====================


class PreregularityReport(BaseModel):
    left_regular: bool
    right_regular: bool
    preregular: bool
    lnr: bool
    rnr: bool
    hnr: bool
    mass: float = Field(..., description="m(L)")
    gate_holds: bool = Field(..., description="HNR, preregular and the two-from-one finite-volume gate")
    regular: bool = Field(..., description="Direct (m(L), E)-regularity of the two-particle box")
    violated: bool


def _disjoint_bad_pair(bad: list[Region]) -> bool:
    for a, b in itertools.combinations(bad, 2):
        if not np.any(b.lookup(a.sites) >= 0):
            return True
    return False


def _one_particle_sides(
    own: tuple[float, ...],
    other_spectrum: np.ndarray,
    field: DisorderField,
    model: ModelSpec,
    energy: float,
    side: float,
    ell: float,
    m_star_tau: float,
    beta: float,
    e1: float,
) -> tuple[bool, bool]:
    """(regular, nonresonant) for one particle against the opposite block's spectrum below E1."""
    single = with_particles(model, 1)
    cover = one_particle_cover(own, side, ell)
    cells = [
        BoxClassifier(BoxSpec(kind=DistanceKind.INFINITY, center=(a,), side=ell), field, single) for a in cover.centers
    ]
    wide = [
        eigenvalues_only(assemble(one_particle_box(a, 9 * ell), field, single)) for a in cover.enlarged_centers(9)
    ]
    threshold = beta_resonance_threshold(9 * ell, beta)
    regular, nonresonant = True, True
    for mu in other_spectrum[other_spectrum <= e1]:
        shifted = energy - float(mu)
        bad = [c.region for c in cells if not c.holds("regular", shifted, m_star_tau)]
        if regular and _disjoint_bad_pair(bad):
            regular = False
        if nonresonant and any(np.abs(values - shifted).min() < threshold for values in wide):
            nonresonant = False
        if not (regular or nonresonant):
            break
    return regular, nonresonant


def preregularity_classify(
    box: BoxSpec,
    field: DisorderField,
    model: ModelSpec,
    energy: float,
    ell: float,
    thresholds: MSAThresholds,
    kappa: float,
    beta: float,
) -> PreregularityReport:
    """Left/right regularity and nonresonance of a non-interactive box; asserts (m(L), E)-regularity behind its gate."""
    region = enumerate_box(box)
    if box.n != 2 or is_interactive(region, model.interaction.r0):
        msg = f"preregularity is defined for non-interactive two-particle boxes, got center {box.center}"
        raise PreconditionError(msg)
    side, d = box.side, box.d
    single = with_particles(model, 1)
    spectra = [
        eigenvalues_only(assemble(one_particle_box(box.center[j], side), field, single)) for j in range(2)
    ]
    common = {"field": field, "model": model, "energy": energy, "side": side, "ell": ell, "beta": beta}
    left_regular, lnr = _one_particle_sides(
        box.center[0], spectra[1], m_star_tau=thresholds.m_star_tau, e1=thresholds.e1, **common
    )
    right_regular, rnr = _one_particle_sides(
        box.center[1], spectra[0], m_star_tau=thresholds.m_star_tau, e1=thresholds.e1, **common
    )
    preregular = left_regular and right_regular
    hnr = lnr and rnr
    mass = m_of_L(thresholds.m_star_tau, kappa, side, d)

    gate = False
    gap = max(abs(a - b) for a, b in zip(box.center[0], box.center[1], strict=True))
    if hnr and preregular and mass > 0 and gap > side + model.interaction.r0 and energy <= thresholds.e2:
        tfo = two_particle_from_one_check(
            box, field, model, energy, thresholds.e1, thresholds.e2, "regular", thresholds.m_star_tau
        )
        # the two-from-one conclusion at m*_tau - 6(d+1)log(2L)/L >= m(L) implies regularity at m(L)
        gate = tfo.gate_holds
    regular = mass > 0 and BoxClassifier(box, field, model).holds("regular", energy, mass)
    violated = gate and not regular
    if violated:
        logger.error(f"HNR and preregular box {box.center} is not (m(L), E)-regular at E={energy}")
    return PreregularityReport(
        left_regular=left_regular,
        right_regular=right_regular,
        preregular=preregular,
        lnr=lnr,
        rnr=rnr,
        hnr=hnr,
        mass=mass,
        gate_holds=gate,
        regular=bool(regular),
        violated=violated,
    )


# ==================== Event R ====================


def event_energies(
    interval: tuple[float, float], spectra: list[np.ndarray], points: int = EVENT_GRID_POINTS
) -> np.ndarray:
    """Uniform grid over I together with every finite-volume eigenvalue inside I."""
    lo, hi = interval
    grid = np.linspace(lo, hi, points)
    inside = [s[(s >= lo) & (s <= hi)] for s in spectra]
    return np.unique(np.concatenate([grid, *inside]))


def event_R_boxes(x: Point, y: Point, side: float) -> tuple[BoxSpec, BoxSpec, Separation]:
    """The two symmetrized boxes of event R, checked to be partially separated."""
    if x == y:
        msg = "event R needs two distinct centers"
        raise PreconditionError(msg)
    a = BoxSpec(kind=DistanceKind.SYMMETRIZED, center=x, side=side)
    b = BoxSpec(kind=DistanceKind.SYMMETRIZED, center=y, side=side)
    try:
        separation = separation_class(RectangleSpec.from_box(a), RectangleSpec.from_box(b))
    except GeometryError as e:
        msg = f"event R is defined for two-particle boxes: {e}"
        raise PreconditionError(msg) from e
    if separation is Separation.NEITHER:
        msg = f"boxes at {x} and {y} are not partially separated"
        raise PreconditionError(msg)
    return a, b, separation


def event_R_witness(
    a: BoxSpec, b: BoxSpec, field: DisorderField, model: ModelSpec, mass: float, interval: tuple[float, float]
) -> float:
    """First grid energy at which neither box is (m, E)-regular, or NaN."""
    boxes = [BoxClassifier(a, field, model), BoxClassifier(b, field, model)]
    for energy in event_energies(interval, [c.eigenvalues for c in boxes]):
        if not boxes[0].holds("regular", energy, mass) and not boxes[1].holds("regular", energy, mass):
            return float(energy)
    return math.nan


def event_R_report(
    records: list[TrialRecord],
    mass: float,
    interval: tuple[float, float],
    side: float,
    separation: Separation,
    zeta2: float | None = None,
) -> EnsembleReport:
    bound = math.exp(-(side**zeta2)) if zeta2 is not None else None
    return EnsembleReport.from_records(
        "event-R",
        records,
        bound,
        params={"mass": mass, "interval": list(interval), "side": side, "separation": str(separation)},
        diagnostic=True,
    )


def estimate_event_R(
    model: ModelSpec,
    mass: float,
    interval: tuple[float, float],
    x: Point,
    y: Point,
    side: float,
    trials: int,
    seed: int,
    zeta2: float | None = None,
    workers: int | None = None,
) -> EnsembleReport:
    """P{exists E in I with both boxes not (m, E)-regular}, on a grid plus the eigenvalues in I."""
    a, b, separation = event_R_boxes(x, y, side)
    regions = [enumerate_box(a), enumerate_box(b)]

    def trial(index: int, trial_seed: int) -> TrialRecord:
        field = sample_for_regions(model, regions, trial_seed)
        witness = event_R_witness(a, b, field, model, mass, interval)
        return TrialRecord(trial=index, seed=trial_seed, statistic=witness, hit=not math.isnan(witness))

    records = map_trials(trial, trials, seed, workers, experiment="event-R")
    return event_R_report(records, mass, interval, side, separation, zeta2)
