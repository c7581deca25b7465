"""Experiment kinds and the registry the runner dispatches on.

Every kind evaluates one disorder realization per trial from library helpers that take an
explicit field, so a replay of trial k regenerates exactly the archived row.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Any

import numpy as np

from lab.errors import ConfigurationError, PreconditionError, ResourceCeilingError
from lab.estimates import (
    combes_thomas_check,
    enumerate_shape,
    independence_report,
    probability_lemma_setup,
    probability_lemma_summary,
    spectral_gap,
    spectrum_distance,
    trace_count,
    wegner_pair_report,
    wegner_reports,
    wegner_trace_report,
)
from lab.geometry import (
    BoxSpec,
    DistanceKind,
    RectangleSpec,
    Region,
    Separation,
    distances2,
    enumerate_box,
    enumerate_rectangle,
    separation_class,
)
from lab.hamiltonian import assemble, sample_for_regions, with_particles
from lab.harness.base import Experiment, TrialOutput
from lab.harness.geometry_audit import GeometryAuditExperiment
from lab.harness.seeds import trial_rng
from lab.localization import (
    correlator_grid,
    correlator_matrix,
    decay_fit,
    dominance_check,
    eigen_clusters,
    guarded_pairs,
    pair_values,
    zw_weights,
)
from lab.models.experiments import (
    CombesThomasConfig,
    CorrelatorConfig,
    DecompositionConfig,
    EventRConfig,
    ExperimentBase,
    IdentityCheckConfig,
    MSARecursionConfig,
    MSAStepConfig,
    ProbabilityLemmaConfig,
    ResolventIdentityConfig,
    TransportConfig,
    WegnerConfig,
    WegnerPairConfig,
)
from lab.models.reports import TrialRecord
from lab.msa import (
    assemble_trace,
    dense_levels,
    deterministic_step_check,
    event_R_boxes,
    event_R_report,
    event_R_witness,
    fourth_msa_constants,
    level_flags,
    level_regions,
    preregularity_classify,
    recursion_row,
    step_regions,
)
from lab.spectral import (
    BoxClassifier,
    eig,
    eigenvalues_only,
    geometric_resolvent_check,
    ni_decompose_check,
    two_particle_from_one_check,
)
from lab.transport import (
    EnergyFilter,
    TransportParams,
    core_sites,
    fit_transport_exponents,
    growth_order_check,
    moment_resolvent_identity_check,
    moment_series,
    trial_moments,
)

logger = logging.getLogger(__name__)

CT_MAX_REDRAWS = 20
ZW_TOLERANCE = 1e-12
RESOLVENT_IDENTITY_RTOL = 1e-9


def _label(site: tuple | np.ndarray) -> str:
    return " ".join(str(int(c)) for c in np.asarray(site).ravel())


def central_sites(box: BoxSpec, region: Region, count: int) -> list[tuple[int, ...]]:
    """The ``count`` core sites closest to the box center, ties broken by site order."""
    core = core_sites(box, region)
    if not core:
        msg = f"box of side {box.side} has no site at distance >= L/4 from its boundary"
        raise ConfigurationError(msg)
    arr = np.asarray(core, dtype=np.int64).reshape(len(core), box.n, box.d)
    order = np.argsort(distances2(box.kind, arr, box.center2), kind="stable")
    return [core[i] for i in order[:count]]


def _dump(check: str, index: int, report: Any) -> dict[str, Any]:
    return {"trial": index, "check": check, **report.model_dump(mode="json")}


# ==================== Wegner ====================


class WegnerExperiment(Experiment[WegnerConfig]):
    """dist(sigma(H), E) per trial, thresholded at every eps of the grid."""

    kind = "wegner"

    def __init__(self, config: WegnerConfig):
        super().__init__(config)
        self.region = enumerate_shape(config.box)
        self.model = with_particles(config.model, self.region.n)
        if config.interval is not None and not config.interval[0] < config.interval[1]:
            msg = f"empty trace interval {config.interval}"
            raise ConfigurationError(msg)

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        field = sample_for_regions(self.model, [self.region], seed)
        dist = spectrum_distance(self.region, field, self.model, cfg.energy)
        row: dict[str, Any] = {"trial": index, "seed": seed, "statistic": dist, "hit": dist <= cfg.eps_grid[0]}
        row.update({f"hit@{eps:g}": dist <= eps for eps in cfg.eps_grid})
        count = None
        if cfg.interval is not None:
            count = trace_count(self.region, field, self.model, cfg.interval)
            row["trace_count"] = count
        return TrialOutput(row=row, fields={"disorder": field}, payload=count)

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        cfg = self.config
        seeds = [o.row["seed"] for o in outputs]
        distances = [o.row["statistic"] for o in outputs]
        reports = wegner_reports(cfg.box, cfg.model, cfg.energy, cfg.eps_grid, seeds, distances)
        ordered = sorted(reports, key=lambda r: r.params["eps"])
        monotone = all(a.estimate <= b.estimate for a, b in itertools.pairwise(ordered))
        summary: dict[str, Any] = {
            "name": cfg.name,
            "reports": [r.model_dump(mode="json") for r in reports],
            "monotone_in_eps": monotone,
            "trace": None,
        }
        if cfg.interval is not None:
            counts = [o.payload for o in outputs]
            summary["trace"] = wegner_trace_report(cfg.box, cfg.model, cfg.interval, counts).model_dump(mode="json")
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        failures = []
        if summary["reports"][0]["verdict"] == "FAIL":
            failures.append("wegner")
        if not summary["monotone_in_eps"]:
            failures.append("wegner-monotone")
        if summary["trace"] is not None and not summary["trace"]["passed"]:
            failures.append("wegner-trace")
        return failures


class WegnerPairExperiment(Experiment[WegnerPairConfig]):
    """dist(sigma(H_a), sigma(H_b)) for two partially separated symmetrized rectangles."""

    kind = "wegner-pair"

    def __init__(self, config: WegnerPairConfig):
        super().__init__(config)
        a, b = config.first, config.second
        if not (a.symmetrized and b.symmetrized and a.n == 2 and b.n == 2):
            msg = "wegner-pair needs two symmetrized two-particle rectangles"
            raise ConfigurationError(msg)
        self.separation = separation_class(a, b)
        if self.separation is Separation.NEITHER:
            msg = f"rectangles centered at {a.center} and {b.center} are not partially separated"
            raise ConfigurationError(msg)
        if config.independence_energy is not None and self.separation is not Separation.FULLY:
            msg = "the independence check needs fully separated rectangles"
            raise ConfigurationError(msg)
        self.regions = [enumerate_rectangle(a), enumerate_rectangle(b)]
        self.model = with_particles(config.model, 2)

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        field = sample_for_regions(self.model, self.regions, seed)
        spectra = [eigenvalues_only(assemble(r, field, self.model)) for r in self.regions]
        gap = spectral_gap(spectra[0], spectra[1])
        row: dict[str, Any] = {"trial": index, "seed": seed, "statistic": gap, "hit": gap <= cfg.eps}
        if cfg.independence_energy is not None:
            energy = cfg.independence_energy
            row["hit_first"] = bool(np.abs(spectra[0] - energy).min() <= cfg.eps)
            row["hit_second"] = bool(np.abs(spectra[1] - energy).min() <= cfg.eps)
        return TrialOutput(row=row, fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        cfg = self.config
        records = [
            TrialRecord(trial=o.row["trial"], seed=o.row["seed"], statistic=o.row["statistic"], hit=o.row["hit"])
            for o in outputs
        ]
        report = wegner_pair_report(cfg.first, cfg.second, cfg.model, cfg.eps, records)
        summary: dict[str, Any] = {"name": cfg.name, "report": report.model_dump(mode="json"), "independence": None}
        if cfg.independence_energy is not None:
            hits = np.array([[o.row["hit_first"], o.row["hit_second"]] for o in outputs], dtype=bool)
            summary["independence"] = independence_report(hits).model_dump(mode="json")
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        failures = []
        if summary["report"]["verdict"] == "FAIL":
            failures.append("wegner-pair")
        if summary["independence"] is not None and not summary["independence"]["passed"]:
            failures.append("independence")
        return failures


# ==================== Combes-Thomas and the probability lemma ====================


class CombesThomasExperiment(Experiment[CombesThomasConfig]):
    """Every Green-function entry of one box against the Combes-Thomas bound, at a random z per trial."""

    kind = "ct"

    def __init__(self, config: CombesThomasConfig):
        super().__init__(config)
        lo, hi = config.energy_range
        if not lo <= hi:
            msg = f"energy_range {config.energy_range} is empty"
            raise ConfigurationError(msg)
        self.region = enumerate_box(config.box)
        self.model = with_particles(config.model, config.box.n)

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        rng = trial_rng(cfg.seed, index)
        field = sample_for_regions(self.model, [self.region], seed)
        values = eigenvalues_only(assemble(self.region, field, self.model))
        z, eta = None, 0.0
        for _ in range(CT_MAX_REDRAWS):
            candidate = complex(rng.uniform(*cfg.energy_range), cfg.imaginary_part)
            eta = float(np.abs(values - candidate).min())
            if eta >= cfg.min_eta:
                z = candidate
                break
        row: dict[str, Any] = {"trial": index, "seed": seed, "skipped": z is None}
        if z is None:
            logger.warning(f"Trial {index}: no z with dist(z, sigma) >= {cfg.min_eta} in {CT_MAX_REDRAWS} draws")
            row.update({"re_z": None, "im_z": None, "eta": None, "max_ratio": None, "worst_eps": None, "passed": None})
            return TrialOutput(row=row, fields={"disorder": field})
        report = combes_thomas_check(self.region, field, self.model, z, tuple(cfg.eps_grid))
        row.update(
            {
                "re_z": z.real,
                "im_z": z.imag,
                "eta": report.eta,
                "max_ratio": report.max_ratio,
                "worst_eps": report.worst_eps,
                "passed": report.passed,
            }
        )
        return TrialOutput(row=row, verdicts=[_dump("ct", index, report)], fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        ran = [o.row for o in outputs if not o.row["skipped"]]
        if not ran:
            logger.warning("Every Combes-Thomas trial was skipped; widen energy_range or lower min_eta")
        summary = {
            "name": self.config.name,
            "trials": len(outputs),
            "skipped": len(outputs) - len(ran),
            "max_ratio": max((r["max_ratio"] for r in ran), default=None),
            "failures": sum(not r["passed"] for r in ran),
        }
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        return ["combes-thomas"] if summary["failures"] else []


class ProbabilityLemmaExperiment(Experiment[ProbabilityLemmaConfig]):
    kind = "prob-lemma"

    def __init__(self, config: ProbabilityLemmaConfig):
        super().__init__(config)
        try:
            self.setup = probability_lemma_setup(
                config.box, config.model, config.energy, config.eps, config.gamma, config.enlargement
            )
        except PreconditionError as e:
            msg = f"invalid probability-lemma setup: {e}"
            raise ConfigurationError(msg) from e

    def trial(self, index: int, seed: int) -> TrialOutput:
        field = self.setup.sample(seed)
        g_complex, g_real, boundary = self.setup.evaluate(field)
        row = {
            "trial": index,
            "seed": seed,
            "g_complex": g_complex,
            "g_real": g_real,
            "boundary_max": float(boundary.max()),
        }
        return TrialOutput(row=row, fields={"disorder": field}, payload=(g_complex, g_real, boundary))

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], list[dict[str, Any]]]:
        report = probability_lemma_summary(self.setup, [o.payload for o in outputs], self.config.a_grid)
        series = [
            {
                "a": a,
                "lhs_complex": report.lhs_complex[i],
                "lhs_complex_ci_lo": report.lhs_complex_ci_low[i],
                "rhs_complex": report.rhs_complex[i],
                "lhs_real": report.lhs_real[i],
                "lhs_real_ci_lo": report.lhs_real_ci_low[i],
                "rhs_real": report.rhs_real[i],
                "eps_term": report.eps_term[i],
                "truncation_term": report.truncation_term,
            }
            for i, a in enumerate(report.a_grid)
        ]
        return {"name": self.config.name, "report": report.model_dump(mode="json")}, series

    def check(self, summary: dict[str, Any]) -> list[str]:
        return [] if summary["report"]["passed"] else ["probability-lemma"]


# ==================== Decomposition and the resolvent identity ====================


class DecompositionExperiment(Experiment[DecompositionConfig]):
    """A random non-interactive rectangle per trial, split into its two tensor-product blocks."""

    kind = "ni-decompose"

    def __init__(self, config: DecompositionConfig):
        super().__init__(config)
        self.model = with_particles(config.model, 2)

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        rng = trial_rng(cfg.seed, index)
        d = self.model.d
        x1 = rng.integers(-5, 6, size=d)
        gap = math.floor(max(cfg.sides) + self.model.interaction.r0) + 1 + int(rng.integers(0, 4))
        x2 = x1.copy()
        x2[0] += gap
        rect = RectangleSpec(
            symmetrized=True,
            center=(tuple(float(c) for c in x1), tuple(float(c) for c in x2)),
            sides=cfg.sides,
        )
        field = sample_for_regions(self.model, [enumerate_rectangle(rect)], seed)
        report = ni_decompose_check(rect, field, self.model, cfg.energy)
        row = {
            "trial": index,
            "seed": seed,
            "gap": gap,
            "spectrum_deviation": report.spectrum_deviation,
            "cross_block_max": report.cross_block_max,
            "tensor_relative_deviation": report.tensor_relative_deviation,
            "passed": report.passed,
        }
        verdict = {**_dump("ni-decompose", index, report), "center": [x1.tolist(), x2.tolist()]}
        return TrialOutput(row=row, verdicts=[verdict], fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        rows = [o.row for o in outputs]
        summary = {
            "name": self.config.name,
            "trials": len(rows),
            "failures": sum(not r["passed"] for r in rows),
            "max_spectrum_deviation": max(r["spectrum_deviation"] for r in rows),
            "max_cross_block": max(r["cross_block_max"] for r in rows),
            "max_tensor_relative_deviation": max(r["tensor_relative_deviation"] for r in rows),
        }
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        return ["ni-decompose"] if summary["failures"] else []


class ResolventIdentityExperiment(Experiment[ResolventIdentityConfig]):
    kind = "resolvent-identity"

    def __init__(self, config: ResolventIdentityConfig):
        super().__init__(config)
        self.inner = enumerate_box(config.inner)
        self.outer = enumerate_box(config.outer)
        if not self.inner.is_subset_of(self.outer) or len(self.inner) >= len(self.outer):
            msg = "inner box must be a proper subset of the outer box"
            raise ConfigurationError(msg)
        self.outside = np.nonzero(self.inner.lookup(self.outer.sites) < 0)[0]
        self.model = with_particles(config.model, config.inner.n)

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        rng = trial_rng(cfg.seed, index)
        field = sample_for_regions(self.model, [self.outer], seed)
        u = tuple(self.inner.flat[int(rng.integers(len(self.inner)))].tolist())
        v = tuple(self.outer.flat[int(self.outside[int(rng.integers(len(self.outside)))])].tolist())
        report = geometric_resolvent_check(self.inner, self.outer, field, self.model, complex(*cfg.z), u, v)
        passed = report.residual <= RESOLVENT_IDENTITY_RTOL * max(report.bound, 1e-300) and report.bound_holds
        row = {
            "trial": index,
            "seed": seed,
            "u": _label(u),
            "v": _label(v),
            "lhs_abs": abs(report.lhs),
            "residual": report.residual,
            "relative_residual": report.relative_residual,
            "bound": report.bound,
            "passed": passed,
        }
        return TrialOutput(row=row, verdicts=[_dump("resolvent-identity", index, report)], fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        rows = [o.row for o in outputs]
        summary = {
            "name": self.config.name,
            "trials": len(rows),
            "failures": sum(not r["passed"] for r in rows),
            "max_residual": max(r["residual"] for r in rows),
        }
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        return ["resolvent-identity"] if summary["failures"] else []


# ==================== Transport ====================


class TransportExperiment(Experiment[TransportConfig]):
    """Filtered moments at the central core sites; exponent fits and growth checks on the ensemble means."""

    kind = "transport"

    def __init__(self, config: TransportConfig):
        super().__init__(config)
        self.region = enumerate_box(config.box)
        self.model = with_particles(config.model, config.box.n)
        self.g = EnergyFilter.for_interval(*config.filter_interval)
        self.ys = central_sites(config.box, self.region, config.sources)

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        field = sample_for_regions(self.model, [self.region], seed)
        spectral = eig(assemble(self.region, field, self.model))
        moments = trial_moments(spectral, self.region, self.g, self.ys, cfg.grid, cfg.p, cfg.box.kind, cfg.mode)
        sup = moments.max(axis=0)
        row: dict[str, Any] = {"trial": index, "seed": seed}
        row.update({f"sup_M@{x:g}": float(v) for x, v in zip(cfg.grid, sup, strict=True)})
        return TrialOutput(row=row, fields={"disorder": field}, payload=moments)

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], list[dict[str, Any]]]:
        cfg = self.config
        series = moment_series([o.payload for o in outputs], self.ys, cfg.grid, cfg.p, cfg.mode)
        fit = None
        if cfg.fit:
            try:
                fit = fit_transport_exponents(series, cfg.p).model_dump(mode="json")
            except PreconditionError as e:
                logger.warning(f"Exponent fit skipped: {e}")
        growth = None
        if cfg.mode == "random":
            growth = growth_order_check(cfg.grid, series.sup_curve, cfg.p, cfg.model.n, cfg.model.d)
            growth = growth.model_dump(mode="json")
        summary = {
            "name": cfg.name,
            "mode": cfg.mode,
            "ys": [list(y) for y in self.ys],
            "sup_curve": series.sup_curve,
            "fit": fit,
            "growth": growth,
        }
        return summary, series.rows()

    def check(self, summary: dict[str, Any]) -> list[str]:
        if summary["growth"] is not None and not summary["growth"]["passed"]:
            return ["growth-order"]
        return []


class IdentityCheckExperiment(Experiment[IdentityCheckConfig]):
    """Time-averaged moment three ways at the central site of the box."""

    kind = "identity-check"

    def __init__(self, config: IdentityCheckConfig):
        super().__init__(config)
        self.region = enumerate_box(config.box)
        self.model = with_particles(config.model, config.box.n)
        self.g = EnergyFilter.for_interval(*config.filter_interval)
        self.y = central_sites(config.box, self.region, 1)[0]

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        field = sample_for_regions(self.model, [self.region], seed)
        spectral = eig(assemble(self.region, field, self.model))
        params = TransportParams(p=cfg.p, T=cfg.T, kind=cfg.box.kind)
        report = moment_resolvent_identity_check(spectral, self.region, self.g, self.y, params)
        row = {"trial": index, "seed": seed, **report.model_dump(mode="json")}
        return TrialOutput(row=row, fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        rows = [o.row for o in outputs]
        summary = {
            "name": self.config.name,
            "y": list(self.y),
            "trials": len(rows),
            "failures": sum(not r["passed"] for r in rows),
            "max_closed_vs_residue": max(r["closed_vs_residue"] for r in rows),
            "max_closed_vs_quadrature": max(r["closed_vs_quadrature"] for r in rows),
        }
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        return ["moment-identity"] if summary["failures"] else []


# ==================== Localization ====================


class CorrelatorExperiment(Experiment[CorrelatorConfig]):
    """Eigenfunction correlators on the guarded pairs, Z/W weights and the dominance bound."""

    kind = "correlator"

    def __init__(self, config: CorrelatorConfig):
        super().__init__(config)
        self.region = enumerate_box(config.box)
        self.model = with_particles(config.model, config.box.n)
        self.pairs, self.distances = guarded_pairs(config.box, self.region)
        if len(self.pairs) == 0:
            msg = f"box of side {config.box.side} has no guarded pairs"
            raise ConfigurationError(msg)
        self.center = central_sites(config.box, self.region, 1)[0]

    def _zw_records(self, spectral, index: int) -> list[dict[str, Any]]:
        lo, hi = self.config.interval
        mid = (lo + hi) / 2
        clusters = sorted(
            eigen_clusters(spectral, self.config.interval),
            key=lambda c: abs(float(spectral.eigenvalues[c].mean()) - mid),
        )
        out = []
        for cluster in clusters[: self.config.zw_records]:
            record = zw_weights(spectral, self.region, int(cluster[0]), self.center)
            ok = record.z <= record.w + ZW_TOLERANCE and record.w <= 1 + ZW_TOLERANCE
            out.append({**_dump("zw", index, record), "passed": ok})
        return out

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        rng = trial_rng(cfg.seed, index)
        field = sample_for_regions(self.model, [self.region], seed)
        spectral = eig(assemble(self.region, field, self.model))
        values = pair_values(correlator_matrix(spectral, cfg.interval), self.pairs)
        verdicts = self._zw_records(spectral, index)
        zw_ok = all(v["passed"] for v in verdicts)
        dominance_ok = True
        for _ in range(cfg.dominance_pairs):
            i, j = self.pairs[int(rng.integers(len(self.pairs)))]
            x, y = tuple(self.region.flat[i].tolist()), tuple(self.region.flat[j].tolist())
            report = dominance_check(spectral, self.region, cfg.interval, x, y, seed=int(rng.integers(2**31)))
            dominance_ok = dominance_ok and report.passed
            verdicts.append({**_dump("dominance", index, report), "x": list(x), "y": list(y)})
        lo, hi = cfg.interval
        row = {
            "trial": index,
            "seed": seed,
            "eigenvalues_in_I": int(np.count_nonzero((spectral.eigenvalues >= lo) & (spectral.eigenvalues <= hi))),
            "max_Q": float(values.max()),
            "zw_ok": zw_ok,
            "dominance_ok": dominance_ok,
        }
        return TrialOutput(row=row, verdicts=verdicts, fields={"disorder": field}, payload=values)

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], list[dict[str, Any]]]:
        cfg = self.config
        grid = correlator_grid([o.payload for o in outputs], self.distances, cfg.interval)
        fit = None
        try:
            fit = decay_fit(grid, cfg.zeta).model_dump(mode="json")
        except PreconditionError as e:
            logger.warning(f"Decay fit skipped: {e}")
        summary = {
            "name": cfg.name,
            "grid": grid.model_dump(mode="json"),
            "decay": fit,
            "zw_failures": sum(not o.row["zw_ok"] for o in outputs),
            "dominance_failures": sum(not o.row["dominance_ok"] for o in outputs),
        }
        return summary, grid.rows()

    def check(self, summary: dict[str, Any]) -> list[str]:
        failures = []
        if summary["zw_failures"]:
            failures.append("zw-bounds")
        if summary["dominance_failures"]:
            failures.append("dominance")
        return failures


# ==================== Multiscale analysis ====================


class MSAStepExperiment(Experiment[MSAStepConfig]):
    """Deterministic lemmas of one realization: the single step, two-from-one and preregularity."""

    kind = "msa-step"

    def __init__(self, config: MSAStepConfig):
        super().__init__(config)
        box = config.box
        if box.kind is not DistanceKind.SYMMETRIZED or box.n != 2:
            msg = "msa-step runs on symmetrized two-particle boxes"
            raise ConfigurationError(msg)
        self.model = with_particles(config.model, 2)
        regions = step_regions(box, config.ell, config.bad_cells)
        far = config.far_box
        if far is not None:
            gap = max(abs(a - b) for a, b in zip(far.center[0], far.center[1], strict=True))
            if far.kind is not DistanceKind.SYMMETRIZED or far.n != 2 or not gap > far.side + self.model.interaction.r0:
                msg = f"far_box centered at {far.center} is not a non-interactive symmetrized two-particle box"
                raise ConfigurationError(msg)
            if not config.energy <= config.thresholds.e2:
                msg = f"E={config.energy} must not exceed E2={config.thresholds.e2}"
                raise ConfigurationError(msg)
            regions.append(enumerate_box(far))
        self.regions = regions

    def _param(self) -> float:
        params = self.config.params
        return {"suitable": params.theta, "regular": params.mass, "ses": params.zeta}[self.config.verdict]

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        field = sample_for_regions(self.model, self.regions, seed)
        verdict = BoxClassifier(cfg.box, field, self.model).verdict(cfg.energy, cfg.params)
        verdicts = [_dump("box-verdict", index, verdict)]
        row: dict[str, Any] = {
            "trial": index,
            "seed": seed,
            "suitable": verdict.suitable,
            "regular": verdict.regular,
            "ses": verdict.ses,
            "step_asserted": None,
            "step_violated": None,
            "two_from_one_gate": None,
            "two_from_one_violated": None,
            "preregularity_gate": None,
            "preregularity_violated": None,
        }
        if "step" in cfg.checks:
            step = deterministic_step_check(
                cfg.box, field, self.model, cfg.energy, cfg.ell, cfg.bad_cells, cfg.params, cfg.verdict, cfg.kappa
            )
            row.update(step_asserted=step.asserted, step_violated=step.violated)
            verdicts.append(_dump("step", index, step))
        if "two-from-one" in cfg.checks:
            zeta_prime = cfg.params.zeta / 2 if cfg.verdict == "ses" else None
            tfo = two_particle_from_one_check(
                cfg.far_box,
                field,
                self.model,
                cfg.energy,
                cfg.thresholds.e1,
                cfg.thresholds.e2,
                cfg.verdict,
                self._param(),
                zeta_prime,
            )
            row.update(two_from_one_gate=tfo.gate_holds, two_from_one_violated=tfo.violated)
            verdicts.append(_dump("two-from-one", index, tfo))
        if "preregularity" in cfg.checks:
            pre = preregularity_classify(
                cfg.far_box, field, self.model, cfg.energy, cfg.ell, cfg.thresholds, cfg.kappa, cfg.beta
            )
            row.update(preregularity_gate=pre.gate_holds, preregularity_violated=pre.violated)
            verdicts.append(_dump("preregularity", index, pre))
        return TrialOutput(row=row, verdicts=verdicts, fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        rows = [o.row for o in outputs]
        checks = {}
        for name, gate in (
            ("step", "step_asserted"),
            ("two-from-one", "two_from_one_gate"),
            ("preregularity", "preregularity_gate"),
        ):
            if name not in self.config.checks:
                continue
            key = gate.rsplit("_", 1)[0] + "_violated"
            checks[name] = {
                "trials": len(rows),
                "gated": sum(bool(r[gate]) for r in rows),
                "violations": sum(bool(r[key]) for r in rows),
            }
        summary = {
            "name": self.config.name,
            "box_rates": {k: sum(r[k] for r in rows) / len(rows) for k in ("suitable", "regular", "ses")},
            "checks": checks,
        }
        return summary, None

    def check(self, summary: dict[str, Any]) -> list[str]:
        return [name for name, counts in summary["checks"].items() if counts["violations"]]


class MSARecursionExperiment(Experiment[MSARecursionConfig]):
    """Bad-box probabilities per scale from one shared field per trial; diagnostic only."""

    kind = "msa-recursion"

    def __init__(self, config: MSARecursionConfig):
        super().__init__(config)
        self.levels, self.truncated = dense_levels(config.schedule, config.thresholds, config.model)
        if not self.levels:
            msg = f"L_0={config.schedule.initial_side} already exceeds the dense ceiling"
            raise ResourceCeilingError(msg)
        self.regions = [
            region
            for level in self.levels
            for region in level_regions(level, config.schedule, config.model, config.centers)
        ]

    def trial(self, index: int, seed: int) -> TrialOutput:
        cfg = self.config
        field = sample_for_regions(cfg.model, self.regions, seed)
        flags = [level_flags(level, cfg.schedule, cfg.model, cfg.energy, field, cfg.centers) for level in self.levels]
        row: dict[str, Any] = {"trial": index, "seed": seed}
        row.update({f"bad_L{level.level}": sum(f) for level, f in zip(self.levels, flags, strict=True)})
        return TrialOutput(row=row, fields={"disorder": field}, payload=flags)

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], list[dict[str, Any]]]:
        cfg = self.config
        rows = [
            recursion_row(level, np.array([o.payload[k] for o in outputs], dtype=bool))
            for k, level in enumerate(self.levels)
        ]
        trace = assemble_trace(cfg.schedule, cfg.thresholds, cfg.model.d, rows, self.truncated)
        for row in trace.rows:
            logger.info(f"Scale L_{row.level}={row.side}: p-hat={row.max_estimate:.4g}")
        return {"name": cfg.name, "trace": trace.model_dump(mode="json")}, trace.csv_rows()


class EventRExperiment(Experiment[EventRConfig]):
    """P{some E in I with neither box (m, E)-regular}; diagnostic only."""

    kind = "event-R"

    def __init__(self, config: EventRConfig):
        super().__init__(config)
        constants = fourth_msa_constants(config.initial_side, config.zeta0, config.beta)
        self.mass = config.mass if config.mass is not None else constants.m0 / 2
        if self.mass <= 0:
            msg = f"event-R mass m0/2={self.mass:.4g} is not positive; pass mass explicitly"
            raise ConfigurationError(msg)
        delta = constants.delta
        self.interval = config.interval or (config.energy - delta, config.energy + delta)
        try:
            self.a, self.b, self.separation = event_R_boxes(config.x, config.y, config.side)
        except PreconditionError as e:
            raise ConfigurationError(str(e)) from e
        self.model = with_particles(config.model, 2)
        self.regions = [enumerate_box(self.a), enumerate_box(self.b)]

    def trial(self, index: int, seed: int) -> TrialOutput:
        field = sample_for_regions(self.model, self.regions, seed)
        witness = event_R_witness(self.a, self.b, field, self.model, self.mass, self.interval)
        row = {"trial": index, "seed": seed, "statistic": witness, "hit": not math.isnan(witness)}
        return TrialOutput(row=row, fields={"disorder": field})

    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], None]:
        cfg = self.config
        records = [
            TrialRecord(trial=o.row["trial"], seed=o.row["seed"], statistic=o.row["statistic"], hit=o.row["hit"])
            for o in outputs
        ]
        report = event_R_report(records, self.mass, self.interval, cfg.side, self.separation, cfg.zeta2)
        return {"name": cfg.name, "report": report.model_dump(mode="json")}, None


# ==================== Registry ====================

EXPERIMENTS: dict[str, type[Experiment]] = {
    cls.kind: cls
    for cls in (
        GeometryAuditExperiment,
        WegnerExperiment,
        WegnerPairExperiment,
        CombesThomasExperiment,
        ProbabilityLemmaExperiment,
        DecompositionExperiment,
        ResolventIdentityExperiment,
        TransportExperiment,
        IdentityCheckExperiment,
        CorrelatorExperiment,
        MSAStepExperiment,
        MSARecursionExperiment,
        EventRExperiment,
    )
}


def build_experiment(config: ExperimentBase) -> Experiment:
    """Instantiate the experiment registered for ``config.kind``."""
    try:
        cls = EXPERIMENTS[config.kind]
    except KeyError as e:
        msg = f"unknown experiment kind: {config.kind}"
        raise ConfigurationError(msg) from e
    return cls(config)
