"""Pydantic schemas for experiment configs and run manifests."""

import math
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator

from lab.geometry import BoxSpec, Point, RectangleSpec
from lab.hamiltonian import ModelSpec
from lab.harness.seeds import GENERATOR_FAMILY
from lab.msa import MSAThresholds, ScaleSchedule
from lab.spectral import ClassificationParams

# ==================== Common ====================


class ExperimentBase(BaseModel):
    """Fields shared by every experiment kind."""

    model_config = ConfigDict(extra="forbid")

    name: str | None = Field(None, description="Free-form label copied into the summary")
    model: ModelSpec = Field(..., description="Lattice, disorder law, coupling and interaction")
    seed: int = Field(0, ge=0, description="Master seed")
    trials: int = Field(100, ge=1, description="Number of disorder realizations")
    workers: int | None = Field(None, ge=1, description="Worker threads; LAB_WORKERS when omitted")
    output_dir: str | None = Field(None, description="Artifact directory; LAB_OUTPUT_DIR/<kind> when omitted")
    generator: Literal["numpy.SeedSequence/Philox4x64"] = Field(
        GENERATOR_FAMILY, description="Seed derivation family (fixed)"
    )


def _check_eps(values: list[float]) -> list[float]:
    if not values or any(v <= 0 for v in values):
        msg = "epsilon values must be positive"
        raise ValueError(msg)
    return values


# ==================== Geometry, Wegner and Combes-Thomas ====================


class GeometryAuditConfig(ExperimentBase):
    """Exhaustive distance/box oracles on a small grid plus random boundary-lemma boxes (one per trial)."""

    kind: Literal["geometry-audit"] = "geometry-audit"
    coordinate_range: int = Field(6, ge=1, description="Exhaustive grid is [-R, R] per coordinate")
    max_particles: int = Field(3, ge=1, le=3)
    random_pairs: int = Field(10_000, ge=0)
    oracle_boxes: int = Field(4, ge=0, description="Random boxes per (n, kind) compared with brute force")
    cover_boxes: int = Field(3, ge=0, description="Random symmetrized boxes whose partial covers are validated")
    separation_pairs: int = Field(200, ge=0)
    side_range: tuple[float, float] = Field((2.0, 12.0), description="Sides of random boundary-lemma boxes")

    @field_validator("side_range")
    @classmethod
    def _check_sides(cls, value: tuple[float, float]) -> tuple[float, float]:
        lo, hi = value
        if not 1 <= lo <= hi or math.ceil(2 * lo) > math.floor(2 * hi):
            msg = "side_range must satisfy 1 <= lo <= hi and contain a half-integer"
            raise ValueError(msg)
        return value


class WegnerConfig(ExperimentBase):
    kind: Literal["wegner"] = "wegner"
    box: BoxSpec | RectangleSpec
    energy: float
    eps_grid: list[float] = Field(..., description="Tested widths; the first one carries the hard check")
    interval: tuple[float, float] | None = Field(None, description="Also estimate E tr chi_I(H) on this interval")

    @field_validator("eps_grid")
    @classmethod
    def _check_grid(cls, value: list[float]) -> list[float]:
        return _check_eps(value)


class WegnerPairConfig(ExperimentBase):
    kind: Literal["wegner-pair"] = "wegner-pair"
    first: RectangleSpec
    second: RectangleSpec
    eps: float = Field(..., gt=0)
    independence_energy: float | None = Field(None, description="Run the full-separation independence check at E")


class CombesThomasConfig(ExperimentBase):
    kind: Literal["ct"] = "ct"
    box: BoxSpec
    energy_range: tuple[float, float] = Field(..., description="Real parts of z are drawn uniformly here")
    imaginary_part: float = Field(0.0, ge=0)
    min_eta: float = Field(0.05, gt=0, description="Redraw z until dist(z, sigma(H)) >= min_eta")
    eps_grid: list[float] = Field([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])

    @field_validator("eps_grid")
    @classmethod
    def _check_grid(cls, value: list[float]) -> list[float]:
        if any(not 0 < v < 1 for v in value):
            msg = "Combes-Thomas widths must lie in (0, 1)"
            raise ValueError(msg)
        return value


class ProbabilityLemmaConfig(ExperimentBase):
    kind: Literal["prob-lemma"] = "prob-lemma"
    box: BoxSpec
    energy: float
    eps: float = Field(..., gt=0)
    a_grid: list[float] = Field(..., min_length=1)
    gamma: float | None = Field(None, gt=0, description="Defaults to nd + 1")
    enlargement: int = Field(4, ge=2)


class DecompositionConfig(ExperimentBase):
    """Non-interactive tensor decomposition, one random far-apart rectangle per trial."""

    kind: Literal["ni-decompose"] = "ni-decompose"
    sides: tuple[float, float] = Field(..., description="One-particle sides of the rectangle")
    energy: float

    @field_validator("sides")
    @classmethod
    def _check_rect_sides(cls, value: tuple[float, float]) -> tuple[float, float]:
        if any(side < 1 or not float(2 * side).is_integer() for side in value):
            msg = f"sides {value} must be half-integers >= 1"
            raise ValueError(msg)
        return value


class ResolventIdentityConfig(ExperimentBase):
    kind: Literal["resolvent-identity"] = "resolvent-identity"
    inner: BoxSpec
    outer: BoxSpec
    z: tuple[float, float] = Field((0.5, 0.1), description="(Re z, Im z)")


# ==================== Transport and localization ====================


class TransportConfig(ExperimentBase):
    kind: Literal["transport"] = "transport"
    box: BoxSpec
    filter_interval: tuple[float, float]
    p: float = Field(2.0, ge=0)
    mode: Literal["time_avg", "random"] = "time_avg"
    grid: list[float] = Field(..., min_length=2, description="T values (time_avg) or t values (random)")
    sources: int = Field(1, ge=1, description="Number of core sites used as initial positions y")
    fit: bool = True


class IdentityCheckConfig(ExperimentBase):
    kind: Literal["identity-check"] = "identity-check"
    box: BoxSpec
    filter_interval: tuple[float, float]
    p: float = Field(2.0, ge=0)
    T: float = Field(1.0, gt=0)


class CorrelatorConfig(ExperimentBase):
    kind: Literal["correlator"] = "correlator"
    box: BoxSpec
    interval: tuple[float, float]
    zeta: float = Field(1.0, gt=0, le=1)
    zw_records: int = Field(5, ge=0, description="Z/W records per trial at the box center")
    dominance_pairs: int = Field(5, ge=0)


# ==================== Multiscale analysis ====================


class MSAStepConfig(ExperimentBase):
    kind: Literal["msa-step"] = "msa-step"
    box: BoxSpec
    energy: float
    ell: float = Field(..., gt=0)
    bad_cells: int = Field(1, ge=0)
    params: ClassificationParams = Field(default_factory=ClassificationParams)
    verdict: Literal["suitable", "regular", "ses"] = "suitable"
    kappa: float | None = None
    checks: list[Literal["step", "two-from-one", "preregularity"]] = Field(["step"], min_length=1)
    thresholds: MSAThresholds = Field(default_factory=MSAThresholds)
    beta: float = Field(0.5, gt=0, lt=1)
    far_box: BoxSpec | None = Field(None, description="Non-interactive box for the two-from-one/preregularity checks")

    @model_validator(mode="after")
    def _check_far_box(self) -> "MSAStepConfig":
        needs = {"two-from-one", "preregularity"} & set(self.checks)
        if needs and self.far_box is None:
            msg = f"checks {sorted(needs)} need far_box"
            raise ValueError(msg)
        if "preregularity" in self.checks and self.kappa is None:
            msg = "the preregularity check needs kappa"
            raise ValueError(msg)
        return self


class MSARecursionConfig(ExperimentBase):
    kind: Literal["msa-recursion"] = "msa-recursion"
    schedule: ScaleSchedule
    thresholds: MSAThresholds = Field(default_factory=MSAThresholds)
    energy: float
    centers: list[Point] | None = None


class EventRConfig(ExperimentBase):
    kind: Literal["event-R"] = "event-R"
    x: Point
    y: Point
    side: float = Field(..., ge=1)
    energy: float
    mass: float | None = Field(None, gt=0, description="Defaults to m0/2 from the fourth-MSA constants")
    interval: tuple[float, float] | None = Field(None, description="Defaults to [E - delta, E + delta]")
    initial_side: float = Field(6.0, ge=1)
    zeta0: float = Field(0.6, gt=0, lt=1)
    beta: float = Field(0.5, gt=0, lt=1)
    zeta2: float | None = Field(0.2, gt=0, lt=1)


ExperimentConfig = Annotated[
    GeometryAuditConfig
    | WegnerConfig
    | WegnerPairConfig
    | CombesThomasConfig
    | ProbabilityLemmaConfig
    | DecompositionConfig
    | ResolventIdentityConfig
    | TransportConfig
    | IdentityCheckConfig
    | CorrelatorConfig
    | MSAStepConfig
    | MSARecursionConfig
    | EventRConfig,
    Field(discriminator="kind"),
]

config_adapter: TypeAdapter[ExperimentConfig] = TypeAdapter(ExperimentConfig)


# ==================== Manifests ====================


class RunManifest(BaseModel):
    """Everything needed to reproduce the artifacts of one run."""

    model_config = ConfigDict(extra="forbid")

    kind: str
    config: dict[str, Any] = Field(..., description="Validated config, with CLI overrides applied")
    config_sha256: str
    code_version: str
    generator: str
    master_seed: int
    trials: int
    started_at: str = Field(..., description="UTC, ISO 8601")
    finished_at: str
    outputs: dict[str, str] = Field(..., description="Artifact name -> SHA-256 of its bytes")
    failures: list[str] = Field(default_factory=list, description="Hard assertions that failed")
    exit_code: int
