"""Geometry audit: brute-force oracles for distances, boxes, covers and separation classes.

Each trial draws one random box and checks the boundary lemma on it. The exhaustive and
oracle comparisons run once per run, from the run-level generator, in ``summarize``.
"""

from __future__ import annotations

import itertools
import logging
import math
from fractions import Fraction
from typing import Any

import numpy as np

from lab.errors import GeometryError
from lab.geometry import (
    BoxSpec,
    DistanceKind,
    RectangleSpec,
    Separation,
    boundary_lemma_holds,
    distance,
    enumerate_box,
    pair_distances2,
    partial_cover,
    separation_class,
)
from lab.harness.base import Experiment, TrialOutput
from lab.harness.seeds import run_rng, trial_rng
from lab.models.experiments import GeometryAuditConfig

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 2500
BOX_ORACLE_LIMIT = 20_000

Doubled = tuple[tuple[int, ...], ...]


# ==================== Oracles ====================


def _sup(a: Doubled, b: Doubled) -> int:
    return max(abs(x - y) for pa, pb in zip(a, b, strict=True) for x, y in zip(pa, pb, strict=True))


def _point_gap(x: tuple[int, ...], y: tuple[int, ...]) -> int:
    return max(abs(p - q) for p, q in zip(x, y, strict=True))


def oracle_distance2(kind: DistanceKind, a: Doubled, b: Doubled) -> int:
    """Doubled distance between doubled configurations, straight from the definitions."""
    if kind is DistanceKind.INFINITY:
        return _sup(a, b)
    if kind is DistanceKind.SYMMETRIZED:
        return min(_sup(a, tuple(b[i] for i in perm)) for perm in itertools.permutations(range(len(b))))
    forward = max(min(_point_gap(x, y) for y in b) for x in a)
    backward = max(min(_point_gap(x, y) for x in a) for y in b)
    return max(forward, backward)


def _as_point(doubled: np.ndarray) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(v / 2 for v in row) for row in np.asarray(doubled).tolist())


def _as_doubled(arr: np.ndarray) -> Doubled:
    return tuple(tuple(int(v) for v in row) for row in np.asarray(arr).tolist())


def oracle_cube(center: tuple[float, ...], side: float) -> set[tuple[int, ...]]:
    """Integer points within sup-distance side/2 of a one-particle center."""
    half = Fraction(side) / 2
    axes = [range(math.ceil(Fraction(c) - half), math.floor(Fraction(c) + half) + 1) for c in center]
    return set(itertools.product(*axes))


def oracle_separation(a: RectangleSpec, b: RectangleSpec) -> Separation:
    """Separation class from explicit one-particle cube sets."""
    pa = [oracle_cube(a.center[j], a.sides[j]) for j in range(2)]
    pb = [oracle_cube(b.center[j], b.sides[j]) for j in range(2)]
    union_a, union_b = pa[0] | pa[1], pb[0] | pb[1]
    if not union_a & union_b:
        return Separation.FULLY
    if any(not p & union_b for p in pa) or any(not p & union_a for p in pb):
        return Separation.PARTIALLY
    return Separation.NEITHER


# ==================== Audit sections ====================


def metric_chain_audit(radius: int, n: int, d: int) -> dict[str, Any]:
    """dist_H <= dist_S <= dist_inf on every pair of the grid [-R, R]^{nd}; dist_H == dist_S for n = 2."""
    count = (2 * radius + 1) ** (n * d)
    if count > EXHAUSTIVE_LIMIT:
        logger.warning(f"Exhaustive grid for n={n}, d={d} has {count} configurations; skipped")
        return {"n": n, "configurations": count, "skipped": True, "violations": 0, "n2_mismatches": 0}
    grid = np.array(list(itertools.product(range(-radius, radius + 1), repeat=n * d)), dtype=np.int64)
    grid2 = 2 * grid.reshape(-1, n, d)
    violations = mismatches = 0
    for b2 in grid2:
        dh = pair_distances2(DistanceKind.HAUSDORFF, grid2, b2)
        ds = pair_distances2(DistanceKind.SYMMETRIZED, grid2, b2)
        di = pair_distances2(DistanceKind.INFINITY, grid2, b2)
        violations += int(np.count_nonzero(dh > ds) + np.count_nonzero(ds > di))
        if n == 2:
            mismatches += int(np.count_nonzero(dh != ds))
    return {"n": n, "configurations": count, "skipped": False, "violations": violations, "n2_mismatches": mismatches}


def distance_oracle_audit(rng: np.random.Generator, pairs: int, radius: int, max_n: int, d: int) -> dict[str, Any]:
    mismatches = 0
    for _ in range(pairs):
        n = int(rng.integers(1, max_n + 1))
        a2 = rng.integers(-2 * radius, 2 * radius + 1, size=(n, d))
        b2 = rng.integers(-2 * radius, 2 * radius + 1, size=(n, d))
        for kind in DistanceKind:
            expected = Fraction(oracle_distance2(kind, _as_doubled(a2), _as_doubled(b2)), 2)
            if distance(kind, _as_point(a2), _as_point(b2)) != expected:
                mismatches += 1
                logger.error(f"dist_{kind.value} mismatch at a={a2.tolist()} b={b2.tolist()}")
    return {"pairs": pairs, "mismatches": mismatches}


def box_oracle_audit(rng: np.random.Generator, boxes: int, max_n: int, d: int) -> dict[str, Any]:
    """Exact box point sets against brute-force membership over a candidate superset."""
    checked = skipped = mismatches = 0
    for n in range(1, max_n + 1):
        for kind in DistanceKind:
            for _ in range(boxes):
                c2 = rng.integers(-4, 5, size=(n, d))
                side2 = int(rng.integers(2, 9))
                half = Fraction(side2, 4)
                axes = []
                for k in range(d):
                    column = [Fraction(int(v), 2) for v in c2[:, k]]
                    axes.append(range(math.ceil(min(column) - half), math.floor(max(column) + half) + 1))
                if math.prod(len(a) for a in axes) ** n > BOX_ORACLE_LIMIT:
                    skipped += 1
                    continue
                center2 = _as_doubled(c2)
                expected = set()
                for flat in itertools.product(*(axes * n)):
                    y2 = tuple(tuple(2 * flat[i * d + k] for k in range(d)) for i in range(n))
                    if 2 * oracle_distance2(kind, y2, center2) <= side2:
                        expected.add(flat)
                spec = BoxSpec(kind=kind, center=_as_point(c2), side=side2 / 2)
                found = {tuple(row) for row in enumerate_box(spec).flat.tolist()}
                checked += 1
                if found != expected:
                    mismatches += 1
                    logger.error(f"{kind.value}-box mismatch: center={spec.center} side={spec.side}")
    if skipped:
        logger.warning(f"Box oracle skipped {skipped} boxes above {BOX_ORACLE_LIMIT} candidates")
    return {"checked": checked, "skipped": skipped, "mismatches": mismatches}


def cover_audit(rng: np.random.Generator, boxes: int, d: int, side_range: tuple[float, float]) -> dict[str, Any]:
    """Partial covers of random symmetrized boxes, with l on the multiples of 3/2 up to L/2."""
    lo2, hi2 = max(math.ceil(2 * side_range[0]), 6), math.floor(2 * side_range[1])
    if boxes and lo2 > hi2:
        logger.warning(f"side_range {side_range} has no side >= 3; cover audit skipped")
        return {"checked": 0, "failures": 0, "uncovered_sites": 0}
    checked = failures = uncovered = 0
    for _ in range(boxes):
        side = int(rng.integers(lo2, hi2 + 1)) / 2
        ell = 1.5 * int(rng.integers(1, math.floor(side / 3) + 1))
        outer = BoxSpec(
            kind=DistanceKind.SYMMETRIZED, center=_as_point(rng.integers(-4, 5, size=(2, d))), side=side
        )
        checked += 1
        try:
            cover = partial_cover(outer, ell)
        except GeometryError as e:
            failures += 1
            logger.error(f"Cover of L={side} with l={ell} failed validation: {e}")
            continue
        uncovered += cover.uncovered
    return {"checked": checked, "failures": failures, "uncovered_sites": uncovered}


def separation_audit(rng: np.random.Generator, pairs: int, radius: int, d: int) -> dict[str, Any]:
    mismatches = 0
    counts = dict.fromkeys((s.value for s in Separation), 0)

    def rect() -> RectangleSpec:
        center = _as_point(rng.integers(-2 * radius, 2 * radius + 1, size=(2, d)))
        sides = tuple(int(rng.integers(2, 7)) / 2 for _ in range(2))
        return RectangleSpec(symmetrized=True, center=center, sides=sides)

    for _ in range(pairs):
        a, b = rect(), rect()
        found = separation_class(a, b)
        counts[found.value] += 1
        if found is not oracle_separation(a, b):
            mismatches += 1
            logger.error(f"Separation mismatch: {a.center}/{a.sides} vs {b.center}/{b.sides}")
    return {"pairs": pairs, "mismatches": mismatches, "classes": counts}


# ==================== Experiment ====================


class GeometryAuditExperiment(Experiment[GeometryAuditConfig]):
    kind = "geometry-audit"

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        rng = trial_rng(cfg.seed, index)
        d, radius = cfg.model.d, cfg.coordinate_range
        kind = list(DistanceKind)[int(rng.integers(len(DistanceKind)))]
        lo2, hi2 = math.ceil(2 * cfg.side_range[0]), math.floor(2 * cfg.side_range[1])
        box = BoxSpec(
            kind=kind,
            center=_as_point(rng.integers(-2 * radius, 2 * radius + 1, size=(2, d))),
            side=int(rng.integers(lo2, hi2 + 1)) / 2,
        )
        holds = boundary_lemma_holds(box)
        if not holds:
            logger.error(f"Boundary lemma fails for {kind.value}-box center={box.center} side={box.side}")
        row = {
            "trial": index,
            "seed": seed,
            "kind": kind.value,
            "center": " ".join(str(c) for particle in box.center for c in particle),
            "side": box.side,
            "boundary_lemma": holds,
        }
        return TrialOutput(row=row, verdicts=[{"trial": index, "check": "boundary-lemma", **row}])

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        cfg = self.config
        rng = run_rng(cfg.seed)
        d, radius = cfg.model.d, cfg.coordinate_range
        chain = [metric_chain_audit(radius, n, d) for n in range(1, cfg.max_particles + 1)]
        summary = {
            "name": cfg.name,
            "metric_chain": chain,
            "distance_oracle": distance_oracle_audit(rng, cfg.random_pairs, radius, cfg.max_particles, d),
            "box_oracle": box_oracle_audit(rng, cfg.oracle_boxes, cfg.max_particles, d),
            "covers": cover_audit(rng, cfg.cover_boxes, d, cfg.side_range),
            "separation": separation_audit(rng, cfg.separation_pairs, radius, d),
            "boundary_lemma": {
                "boxes": len(outputs),
                "failures": sum(not o.row["boundary_lemma"] for o in outputs),
            },
        }
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        failures = []
        if any(c["violations"] or c["n2_mismatches"] for c in summary["metric_chain"]):
            failures.append("metric-chain")
        for name in ("distance_oracle", "box_oracle", "separation"):
            if summary[name]["mismatches"]:
                failures.append(name.replace("_", "-"))
        if summary["covers"]["failures"]:
            failures.append("covers")
        if summary["boundary_lemma"]["failures"]:
            failures.append("boundary-lemma")
        return failures
