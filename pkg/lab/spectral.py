"""Eigensolves, Green functions and box classification.

A box is (theta,E)-suitable, (m,E)-regular or (zeta,E)-SES when E is off its
spectrum and every |G(u, v; E)| with u in the inner third and v in the interior
boundary stays below L^-theta, e^{-mL/2} or e^{-L^zeta} respectively.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from pydantic import BaseModel, ConfigDict, Field

from common import metrics as lab_metrics
from lab.config import settings
from lab.errors import (
    ConfigurationError,
    ConvergenceError,
    PreconditionError,
    ResonantEnergyError,
    ResourceCeilingError,
)
from lab.geometry import (
    BoxSpec,
    DistanceKind,
    RectangleSpec,
    Region,
    boundary_sets,
    enumerate_box,
    enumerate_rectangle,
    inner_third,
    one_particle_box,
)
from lab.hamiltonian import DisorderField, ModelSpec, OperatorMatrix, assemble, with_particles

logger = logging.getLogger(__name__)

RESONANCE_RTOL = 1e-12
EIGEN_TOL = 1e-10

VerdictKind = Literal["suitable", "regular", "ses"]


# ==================== Thresholds ====================


def suitable_threshold(side: float, theta: float) -> float:
    return side ** (-theta)


def regular_threshold(side: float, mass: float) -> float:
    return math.exp(-mass * side / 2)


def ses_threshold(side: float, zeta: float) -> float:
    return math.exp(-(side**zeta))


def suitable_resonance_threshold(ell: float, s: float) -> float:
    return ell ** (-s)


def beta_resonance_threshold(ell: float, beta: float) -> float:
    return 0.5 * math.exp(-(ell**beta))


def verdict_threshold(kind: VerdictKind, side: float, param: float) -> float:
    if kind == "suitable":
        return suitable_threshold(side, param)
    if kind == "regular":
        return regular_threshold(side, param)
    return ses_threshold(side, param)


class ClassificationParams(BaseModel):
    """Exponents and mass used by the box verdicts."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    theta: float = Field(2.0, gt=0, description="Suitability exponent")
    mass: float = Field(1.0, gt=0, description="Regularity mass m")
    zeta: float = Field(0.5, gt=0, lt=1, description="SES exponent")
    s: float = Field(1.0, gt=0, description="Suitable-resonance exponent")
    beta: float = Field(0.5, gt=0, lt=1, description="Resonance exponent")


# ==================== Eigensolves ====================


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a restriction."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.eigenvalues).max())) if len(self.eigenvalues) else 1.0

    @property
    def resonance_tolerance(self) -> float:
        return RESONANCE_RTOL * self.scale

    def distance_to(self, energy: float) -> float:
        if len(self.eigenvalues) == 0:
            return math.inf
        return float(np.abs(self.eigenvalues - energy).min())

    def is_resonant(self, energy: float) -> bool:
        return self.distance_to(energy) <= self.resonance_tolerance

    def green_block(self, z: complex, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """G(z; rows, cols) by eigen-expansion sum_j psi_j(u) psi_j(v) / (lambda_j - z)."""
        weights = 1.0 / (self.eigenvalues - z)
        return (self.eigenvectors[rows] * weights) @ self.eigenvectors[cols].T

    def in_window(self, lo: float, hi: float) -> np.ndarray:
        return self.eigenvalues[(self.eigenvalues >= lo) & (self.eigenvalues <= hi)]


def _check_dense(size: int) -> None:
    if size > settings.LAB_DENSE_CEILING:
        msg = f"region of {size} sites exceeds LAB_DENSE_CEILING={settings.LAB_DENSE_CEILING}"
        raise ResourceCeilingError(msg)


def eig(op: OperatorMatrix) -> SpectralData:
    """Dense symmetric eigensolve with residual and orthonormality checks."""
    size = len(op)
    _check_dense(size)
    start = time.perf_counter()
    dense = op.dense
    try:
        values, vectors = scipy.linalg.eigh(dense)
    except (np.linalg.LinAlgError, ValueError) as e:
        msg = f"eigensolve failed on a {size}-site region"
        raise ConvergenceError(msg, {"region": op.region.dump()}) from e
    lab_metrics.record_eigensolve(size, (time.perf_counter() - start) * 1000)
    if size:
        norm = max(1.0, float(np.abs(values).max()))
        residual = np.linalg.norm(dense @ vectors - vectors * values, axis=0).max()
        ortho = np.abs(vectors.T @ vectors - np.eye(size)).max()
        if residual > EIGEN_TOL * norm or ortho > EIGEN_TOL:
            msg = f"eigenpairs fail accuracy checks: residual={residual:.3e}, orthonormality={ortho:.3e}"
            raise ConvergenceError(msg, {"region": op.region.dump()})
    return SpectralData(values, vectors)


def eigenvalues_only(op: OperatorMatrix) -> np.ndarray:
    _check_dense(len(op))
    start = time.perf_counter()
    values = scipy.linalg.eigvalsh(op.dense)
    lab_metrics.record_eigensolve(len(op), (time.perf_counter() - start) * 1000)
    return values


def distance_to_energy(op: OperatorMatrix, energy: float) -> float:
    """dist(sigma(H), E): dense below LAB_DENSE_CEILING, sparse shift-invert Lanczos above it."""
    if len(op) <= settings.LAB_DENSE_CEILING:
        return float(np.abs(eigenvalues_only(op) - energy).min())
    start = time.perf_counter()
    try:
        values = scipy.sparse.linalg.eigsh(op.matrix, k=1, sigma=energy, which="LM", return_eigenvectors=False)
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        msg = f"shift-invert Lanczos failed on a {len(op)}-site region at E={energy}"
        raise ConvergenceError(msg, {"region": op.region.dump()}) from e
    except RuntimeError:
        # the shifted factorization is singular: E is an eigenvalue
        logger.debug(f"Singular shift-invert factorization at E={energy}")
        return 0.0
    lab_metrics.record_eigensolve(len(op), (time.perf_counter() - start) * 1000)
    return float(np.abs(values - energy).min())


def resolvent_columns(op: OperatorMatrix, z: complex, cols: np.ndarray) -> np.ndarray:
    """(H - z)^{-1} restricted to the given columns, by a direct solve."""
    size = len(op)
    _check_dense(size)
    if isinstance(z, complex) and z.imag == 0:
        z = z.real
    dtype = complex if isinstance(z, complex) else float
    shifted = op.dense.astype(dtype) - z * np.eye(size, dtype=dtype)
    rhs = np.zeros((size, len(cols)), dtype=dtype)
    rhs[np.asarray(cols), np.arange(len(cols))] = 1.0
    try:
        return scipy.linalg.solve(shifted, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
        msg = f"singular resolvent solve at z={z}"
        raise ResonantEnergyError(msg) from e


def green_entry(op: OperatorMatrix, z: complex, u: int, v: int, spectral: SpectralData | None = None) -> complex:
    """<delta_u, (H - z)^{-1} delta_v> by a linear solve, after an off-spectrum check."""
    values = spectral.eigenvalues if spectral is not None else eigenvalues_only(op)
    scale = max(1.0, float(np.abs(values).max())) if len(values) else 1.0
    if len(values) and float(np.abs(values - z).min()) <= RESONANCE_RTOL * scale:
        msg = f"z={z} lies within {RESONANCE_RTOL:g}*scale of the spectrum"
        raise ResonantEnergyError(msg)
    column = resolvent_columns(op, z, np.array([v]))
    return complex(column[u, 0])


# ==================== Box classification ====================


class BoxVerdict(BaseModel):
    """Suitable/regular/SES flags of one box at one energy, with witnesses and margins."""

    box: BoxSpec
    energy: float
    params: ClassificationParams
    distance_to_spectrum: float
    resonant: bool
    cause: str | None = Field(None, description="'resonant' when E sits on the spectrum")
    max_green: float | None = Field(None, description="max |G(u, v; E)| over inner third x interior boundary")
    witness_u: tuple[int, ...] | None = None
    witness_v: tuple[int, ...] | None = None
    suitable_threshold: float
    regular_threshold: float
    ses_threshold: float
    suitable: bool
    regular: bool
    ses: bool
    suitable_resonance_threshold: float
    beta_resonance_threshold: float
    suitably_resonant: bool
    beta_resonant: bool

    def holds(self, kind: VerdictKind) -> bool:
        return {"suitable": self.suitable, "regular": self.regular, "ses": self.ses}[kind]


class BoxClassifier:
    """Reusable per-box data: region, inner third, interior boundary, operator and spectrum."""

    def __init__(self, box: BoxSpec, field: DisorderField, model: ModelSpec):
        self.box = box
        self.model = with_particles(model, box.n)
        self.region = enumerate_box(box)
        third = inner_third(box)
        self.inner_idx = self.region.lookup(third.sites)
        self.boundary_idx = boundary_sets(self.region).minus
        if len(self.boundary_idx) == 0:
            msg = f"box {box} has an empty interior boundary"
            raise ConfigurationError(msg)
        self.op = assemble(self.region, field, self.model)

    @cached_property
    def spectral(self) -> SpectralData:
        return eig(self.op)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        if "spectral" in self.__dict__:
            return self.spectral.eigenvalues
        return eigenvalues_only(self.op)

    def distance_to_spectrum(self, energy: float) -> float:
        return float(np.abs(self.eigenvalues - energy).min())

    def resonant(self, energy: float) -> bool:
        scale = max(1.0, float(np.abs(self.eigenvalues).max()))
        return self.distance_to_spectrum(energy) <= RESONANCE_RTOL * scale

    def green_matrix(self, energy: float, method: Literal["expansion", "solve"] = "expansion") -> np.ndarray:
        """G(E; inner third, interior boundary)."""
        if method == "solve":
            return resolvent_columns(self.op, energy, self.boundary_idx)[self.inner_idx]
        return self.spectral.green_block(energy, self.inner_idx, self.boundary_idx)

    def max_green(
        self, energy: float, method: Literal["expansion", "solve"] = "expansion"
    ) -> tuple[float, tuple[int, ...], tuple[int, ...]] | None:
        """Largest |G| with its (u, v) witness, or None when E is resonant."""
        if self.resonant(energy):
            return None
        block = np.abs(self.green_matrix(energy, method))
        i, j = np.unravel_index(int(np.argmax(block)), block.shape)
        u = tuple(self.region.flat[self.inner_idx[i]].tolist())
        v = tuple(self.region.flat[self.boundary_idx[j]].tolist())
        return float(block[i, j]), u, v

    def holds(self, kind: VerdictKind, energy: float, param: float) -> bool:
        found = self.max_green(energy)
        return found is not None and found[0] <= verdict_threshold(kind, self.box.side, param)

    def verdict(
        self, energy: float, params: ClassificationParams, method: Literal["expansion", "solve"] = "expansion"
    ) -> BoxVerdict:
        side = self.box.side
        dist = self.distance_to_spectrum(energy)
        found = self.max_green(energy, method)
        thresholds = {
            "suitable_threshold": suitable_threshold(side, params.theta),
            "regular_threshold": regular_threshold(side, params.mass),
            "ses_threshold": ses_threshold(side, params.zeta),
        }
        resonance = {
            "suitable_resonance_threshold": suitable_resonance_threshold(side, params.s),
            "beta_resonance_threshold": beta_resonance_threshold(side, params.beta),
        }
        value = found[0] if found else None
        return BoxVerdict(
            box=self.box,
            energy=energy,
            params=params,
            distance_to_spectrum=dist,
            resonant=found is None,
            cause="resonant" if found is None else None,
            max_green=value,
            witness_u=found[1] if found else None,
            witness_v=found[2] if found else None,
            suitable=value is not None and value <= thresholds["suitable_threshold"],
            regular=value is not None and value <= thresholds["regular_threshold"],
            ses=value is not None and value <= thresholds["ses_threshold"],
            suitably_resonant=dist < resonance["suitable_resonance_threshold"],
            beta_resonant=dist < resonance["beta_resonance_threshold"],
            **thresholds,
            **resonance,
        )


def classify_box(
    spec: BoxSpec, field: DisorderField, model: ModelSpec, energy: float, params: ClassificationParams
) -> BoxVerdict:
    """Verdict from direct linear solves over the exact inner third and interior boundary."""
    return BoxClassifier(spec, field, model).verdict(energy, params, method="solve")


class ResonanceMargins(BaseModel):
    distance: float
    ell: float
    suitable_threshold: float
    beta_threshold: float
    suitably_resonant: bool
    beta_resonant: bool


def resonance_status(
    spec: BoxSpec | RectangleSpec, field: DisorderField, model: ModelSpec, energy: float, params: ClassificationParams
) -> ResonanceMargins:
    """dist(sigma(H), E) against l^-s and (1/2)e^{-l^beta}, with l the smallest side."""
    if isinstance(spec, RectangleSpec):
        region, ell = enumerate_rectangle(spec), min(spec.sides)
    else:
        region, ell = enumerate_box(spec), spec.side
    values = eigenvalues_only(assemble(region, field, with_particles(model, region.n)))
    dist = float(np.abs(values - energy).min())
    st = suitable_resonance_threshold(ell, params.s)
    bt = beta_resonance_threshold(ell, params.beta)
    return ResonanceMargins(
        distance=dist,
        ell=ell,
        suitable_threshold=st,
        beta_threshold=bt,
        suitably_resonant=dist < st,
        beta_resonant=dist < bt,
    )


# ==================== Non-interactive decomposition ====================


class DecompositionReport(BaseModel):
    spectrum_deviation: float
    cross_block_max: float
    tensor_relative_deviation: float
    spectrum_ok: bool
    cross_block_ok: bool
    tensor_ok: bool

    @property
    def passed(self) -> bool:
        return self.spectrum_ok and self.cross_block_ok and self.tensor_ok


def _center_gap(center: tuple[tuple[float, ...], ...]) -> float:
    return max(abs(a - b) for a, b in zip(center[0], center[1], strict=True))


def ni_decompose_check(
    rect: RectangleSpec, field: DisorderField, model: ModelSpec, energy: float
) -> DecompositionReport:
    """Check that a far-apart symmetrized rectangle is the direct sum of two tensor-product blocks."""
    if rect.n != 2 or not rect.symmetrized:
        msg = "decomposition check needs a symmetrized two-particle rectangle"
        raise PreconditionError(msg)
    r0 = model.interaction.r0
    if not _center_gap(rect.center) > rect.max_side + r0:
        msg = f"||x1 - x2|| = {_center_gap(rect.center)} does not exceed L + r0 = {rect.max_side + r0}"
        raise PreconditionError(msg)
    one = with_particles(model, 1)
    region = enumerate_rectangle(rect)
    op = assemble(region, field, with_particles(model, 2))
    boxes = [one_particle_box(rect.center[j], rect.sides[j]) for j in range(2)]
    spectra = [eig(assemble(box, field, one)) for box in boxes]

    # (a) sigma(H) = sum-set, each value twice (one per permutation component)
    values = eigenvalues_only(op)
    sums = np.add.outer(spectra[0].eigenvalues, spectra[1].eigenvalues).ravel()
    expected = np.sort(np.concatenate([sums, sums]))
    scale = max(1.0, float(np.abs(values).max()))
    spectrum_dev = float(np.abs(np.sort(values) - expected).max())
    if float(np.abs(values - energy).min()) <= RESONANCE_RTOL * scale:
        msg = f"E={energy} lies on the rectangle spectrum"
        raise ResonantEnergyError(msg)

    # component labels and one-particle indices per site
    y1, y2 = region.sites[:, 0:1, :], region.sites[:, 1:2, :]
    i1, i2 = boxes[0].lookup(y1), boxes[1].lookup(y2)
    plain = (i1 >= 0) & (i2 >= 0)
    j1, j2 = boxes[0].lookup(y2), boxes[1].lookup(y1)
    swapped = ~plain
    first = np.where(plain, i1, j1)
    second = np.where(plain, i2, j2)

    green = resolvent_columns(op, energy, np.arange(len(region)))
    cross = float(np.abs(green[np.ix_(plain, swapped)]).max()) if plain.any() and swapped.any() else 0.0

    # (c) tensor resolvent: sum_{a,b} phi_a(u1) phi_a(v1) chi_b(u2) chi_b(v2) / (lambda_a + mu_b - E)
    phi, chi = spectra[0].eigenvectors, spectra[1].eigenvectors
    denom = 1.0 / (np.add.outer(spectra[0].eigenvalues, spectra[1].eigenvalues) - energy)
    deviation = 0.0
    gmax = float(np.abs(green).max())
    for mask in (plain, swapped):
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            continue
        a_rows = phi[first[idx]]  # (M, A)
        b_rows = chi[second[idx]]  # (M, B)
        tensor = np.einsum("ua,ub,ab,va,vb->uv", a_rows, b_rows, denom, a_rows, b_rows, optimize=True)
        deviation = max(deviation, float(np.abs(green[np.ix_(idx, idx)] - tensor).max()))
    relative = deviation / gmax if gmax > 0 else deviation
    return DecompositionReport(
        spectrum_deviation=spectrum_dev,
        cross_block_max=cross,
        tensor_relative_deviation=relative,
        spectrum_ok=spectrum_dev <= 1e-9 * scale,
        cross_block_ok=cross <= 1e-12,
        tensor_ok=relative <= 1e-9,
    )


# ==================== Geometric resolvent identity ====================


class ResolventIdentityReport(BaseModel):
    lhs: complex
    rhs: complex
    residual: float
    relative_residual: float
    boundary_edges: int
    bound: float = Field(..., description="|boundary| * max|G1(u,a)| * max|G2(b,v)|")

    @property
    def bound_holds(self) -> bool:
        return abs(self.lhs) <= self.bound * (1 + 1e-9)


def geometric_resolvent_check(
    inner: Region,
    outer: Region,
    field: DisorderField,
    model: ModelSpec,
    z: complex,
    u: tuple[int, ...] | np.ndarray,
    v: tuple[int, ...] | np.ndarray,
) -> ResolventIdentityReport:
    """G2(u, v) = sum over boundary edges (a, b) of G1(u, a) G2(b, v), u in inner, v in outer minus inner."""
    if len(inner) >= len(outer):
        msg = "inner region must be a proper subset of the outer region"
        raise PreconditionError(msg)
    bnd = boundary_sets(inner, outer)
    if bnd.edge_count == 0:
        msg = "inner region has no boundary inside the outer region"
        raise PreconditionError(msg)
    if u not in inner or v in inner or v not in outer:
        msg = "u must lie in the inner region and v in the outer region outside it"
        raise PreconditionError(msg)
    spec = with_particles(model, inner.n)
    op1, op2 = assemble(inner, field, spec), assemble(outer, field, spec)
    for op in (op1, op2):
        values = eigenvalues_only(op)
        if float(np.abs(values - z).min()) <= RESONANCE_RTOL * max(1.0, float(np.abs(values).max())):
            msg = f"z={z} is resonant for one of the nested regions"
            raise ResonantEnergyError(msg)
    ui, vi = inner.index_of(u), outer.index_of(v)
    g1_row = resolvent_columns(op1, z, bnd.inner_idx)[ui]  # G1(u, a) per edge (symmetric H)
    g2_col = resolvent_columns(op2, z, np.array([vi]))[:, 0]
    lhs = complex(g2_col[outer.index_of(u)])
    g2_bv = g2_col[bnd.outer_idx]
    rhs = complex(np.sum(g1_row * g2_bv))
    residual = abs(lhs - rhs)
    return ResolventIdentityReport(
        lhs=lhs,
        rhs=rhs,
        residual=residual,
        relative_residual=residual / abs(lhs) if lhs != 0 else residual,
        boundary_edges=bnd.edge_count,
        bound=bnd.edge_count * float(np.abs(g1_row).max()) * float(np.abs(g2_bv).max()),
    )


# ==================== Two-particle from one-particle ====================


class TwoFromOneReport(BaseModel):
    kind: str
    hypotheses_hold: bool
    parameter_gate: bool
    finite_volume_bound: float = Field(..., description="Rigorous bound on |G| implied by the hypotheses")
    concluded_threshold: float
    gate_holds: bool
    conclusion_holds: bool
    violated: bool = Field(..., description="Gate held but the two-particle conclusion failed")
    checked_energies: int


def boundary_gap(box: BoxSpec) -> int:
    """Exact min sup-distance from the inner third to the interior boundary of a box."""
    region = enumerate_box(box)
    third = inner_third(box)
    minus = region.sites[boundary_sets(region).minus]
    a = third.flat[:, None, :]
    b = minus.reshape(len(minus), -1)[None, :, :]
    return int(np.abs(a - b).max(axis=2).min())


def combes_thomas_bound(eta: float, eps: float, dim: int, r: float) -> float:
    """(1/(eta(1-eps))) exp(-log(eps*eta/(2 dim) + 1) r)."""
    return math.exp(-math.log(eps * eta / (2 * dim) + 1) * r) / (eta * (1 - eps))


def concluded_parameter(kind: VerdictKind, param: float, side: float, d: int, zeta_prime: float | None) -> float:
    if kind == "suitable":
        return param / 2
    if kind == "regular":
        return param - 6 * (d + 1) * math.log(2 * side) / side
    if zeta_prime is None:
        msg = "the SES conclusion needs zeta' < zeta"
        raise PreconditionError(msg)
    return zeta_prime


def two_particle_from_one_check(
    box: BoxSpec,
    field: DisorderField,
    model: ModelSpec,
    energy: float,
    e1: float,
    e2: float,
    kind: VerdictKind,
    param: float,
    zeta_prime: float | None = None,
) -> TwoFromOneReport:
    """One-particle hypotheses at shifted energies E - mu; the two-particle conclusion behind a finite-volume gate."""
    if box.kind is not DistanceKind.SYMMETRIZED or box.n != 2:
        msg = "two-from-one check needs a symmetrized two-particle box"
        raise PreconditionError(msg)
    side, d = box.side, box.d
    if not _center_gap(box.center) > side + model.interaction.r0:
        msg = f"box centered at {box.center} is not far enough apart to be non-interactive"
        raise PreconditionError(msg)
    if not (energy <= e2 < e1):
        msg = f"need E <= E2 < E1, got E={energy}, E2={e2}, E1={e1}"
        raise PreconditionError(msg)

    if kind == "suitable":
        parameter_gate = param > 2 * d + 2
    elif kind == "regular":
        parameter_gate = 0 < param < math.log((e1 - e2) / (4 * d) + 1)
    else:
        parameter_gate = zeta_prime is not None and 0 < zeta_prime < param < 1
    concluded = concluded_parameter(kind, param, side, d, zeta_prime)
    if kind == "regular" and concluded <= 0:
        parameter_gate = False

    singles = [
        BoxClassifier(BoxSpec(kind=DistanceKind.INFINITY, center=(box.center[j],), side=side), field, model)
        for j in range(2)
    ]
    t_hyp = verdict_threshold(kind, side, param)
    hypotheses = True
    checked = 0
    for j in range(2):
        other = singles[1 - j].spectral.eigenvalues
        for mu in other[other <= e1]:
            checked += 1
            if not singles[j].holds(kind, energy - float(mu), param):
                hypotheses = False
                break
        if not hypotheses:
            break

    gap = min(boundary_gap(s.box) for s in singles)
    ct = combes_thomas_bound(e1 - e2, 0.5, d, gap)
    bound = max(t_hyp, ct)
    t_concl = verdict_threshold(kind, side, concluded) if concluded > 0 else math.inf
    gate = hypotheses and parameter_gate and bound <= t_concl * (1 - 1e-6)

    two = BoxClassifier(box, field, model)
    conclusion = two.holds(kind, energy, concluded) if concluded > 0 else False
    violated = gate and not conclusion
    if violated:
        logger.error(f"Two-from-one conclusion failed behind its gate: box={box.center} E={energy} kind={kind}")
    return TwoFromOneReport(
        kind=kind,
        hypotheses_hold=hypotheses,
        parameter_gate=parameter_gate,
        finite_volume_bound=bound,
        concluded_threshold=t_concl,
        gate_holds=gate,
        conclusion_holds=conclusion,
        violated=violated,
        checked_energies=checked,
    )
