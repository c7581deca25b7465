"""Energy filters, filtered time evolution and transport moments.

For a spectral decomposition H = sum_j lambda_j |psi_j><psi_j| and c_j(u) = g(lambda_j) psi_j(u) psi_j(y):

- random moment      M(p, g, t, y) = sum_u <dist(y, u)>^p |sum_j e^{-it lambda_j} c_j(u)|^2
- time average       int_0^inf (2/T) e^{-2t/T} M(t) dt
                     = sum_u <.>^p sum_{j,k} c_j c_k 4 / (4 + T^2 (lambda_j - lambda_k)^2)

with <r> = sqrt(1 + r^2).
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Literal

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special

from lab.errors import PreconditionError
from lab.geometry import BoxSpec, DistanceKind, Region, distances2, pair_distances2
from lab.hamiltonian import DisorderField, ModelSpec, assemble_periodic, minimum_image
from lab.spectral import SpectralData, eig
from lab.stats import linear_fit, mean_ci

logger = logging.getLogger(__name__)

MomentMode = Literal["time_avg", "random"]


# ==================== Energy filters ====================


def _phi(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s, dtype=float)
    positive = s > 0
    out[positive] = np.exp(-1.0 / s[positive])
    return out


def smooth_step(s: np.ndarray | float) -> np.ndarray:
    """h(s) = phi(s) / (phi(s) + phi(1 - s)), phi(s) = e^{-1/s} for s > 0: 0 below 0, 1 above 1, C-infinity."""
    s = np.asarray(s, dtype=float)
    a, b = _phi(s), _phi(1 - s)
    return a / (a + b)


class EnergyFilter(BaseModel):
    """Smooth g with support [a, b], g = 1 on [a + width, b - width]."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(..., description="Left end of the support")
    b: float = Field(..., description="Right end of the support")
    width: float = Field(..., gt=0, description="Transition width delta_g")

    @model_validator(mode="after")
    def _check_plateau(self) -> EnergyFilter:
        if self.a + self.width > self.b - self.width:
            msg = f"filter plateau is empty: a + width = {self.a + self.width} > b - width = {self.b - self.width}"
            raise ValueError(msg)
        return self

    @classmethod
    def for_interval(cls, lo: float, hi: float) -> EnergyFilter:
        """Plateau exactly [lo, hi], transition width |I|/10."""
        width = (hi - lo) / 10
        return cls(a=lo - width, b=hi + width, width=width)

    @classmethod
    def covering(cls, lo: float, hi: float, margin: float = 1.0) -> EnergyFilter:
        """Identically 1 on [lo, hi]."""
        return cls(a=lo - 2 * margin, b=hi + 2 * margin, width=margin)

    def __call__(self, energy: np.ndarray | float) -> np.ndarray:
        e = np.asarray(energy, dtype=float)
        rising = smooth_step((e - self.a) / self.width)
        falling = smooth_step((self.b - e) / self.width)
        return np.where((e <= self.a) | (e >= self.b), 0.0, np.minimum(rising, falling))


def filter_eval(g: EnergyFilter, energy: float) -> float:
    return float(g(energy))


class TransportParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p: float = Field(2.0, ge=0, description="Moment order")
    T: float = Field(1.0, gt=0, description="Time-average scale")
    t: float = Field(0.0, description="Time")
    alpha: float = Field(0.0, ge=0, description="Growth exponent hypothesis")
    kind: DistanceKind = Field(DistanceKind.SYMMETRIZED, description="Distance used in the weights")


# ==================== Amplitudes and weights ====================


def _coefficients(spectral: SpectralData, g: EnergyFilter, y_index: int) -> np.ndarray:
    """C[u, j] = g(lambda_j) psi_j(u) psi_j(y)."""
    weights = g(spectral.eigenvalues) * spectral.eigenvectors[y_index]
    return spectral.eigenvectors * weights[None, :]


def amplitude(spectral: SpectralData, region: Region, g: EnergyFilter, y: tuple, t: float) -> np.ndarray:
    """<delta_u, e^{-itH} g(H) delta_y> for every u of the region."""
    coeff = _coefficients(spectral, g, region.index_of(y))
    return coeff @ np.exp(-1j * t * spectral.eigenvalues)


def moment_weights(region: Region, y: tuple, p: float, kind: DistanceKind) -> np.ndarray:
    """<dist_kind(y, u)>^p over the region."""
    y2 = 2 * np.asarray(y, dtype=np.int64).reshape(region.n, region.d)
    dist = pair_distances2(kind, 2 * region.sites, y2) / 2
    return (1 + dist.astype(float) ** 2) ** (p / 2)


def torus_weights(region: Region, y: tuple, p: float, kind: DistanceKind, period: int) -> np.ndarray:
    """<dist_kind(y, u)>^p with minimum-image coordinate differences."""
    n = region.n
    y_arr = np.asarray(y, dtype=np.int64).reshape(n, region.d)

    def sup(diff: np.ndarray) -> np.ndarray:
        return np.abs(minimum_image(diff, period)).max(axis=-1)

    if kind is DistanceKind.HAUSDORFF:
        pair = np.stack([[sup(region.sites[:, i, :] - y_arr[j]) for j in range(n)] for i in range(n)])
        dist = np.maximum(pair.min(axis=1).max(axis=0), pair.min(axis=0).max(axis=0))
    else:
        perms = [tuple(range(n))] if kind is DistanceKind.INFINITY else list(itertools.permutations(range(n)))
        dist = np.min([sup(region.sites[:, list(perm), :] - y_arr[None]).max(axis=1) for perm in perms], axis=0)
    return (1 + dist.astype(float) ** 2) ** (p / 2)


# ==================== Moments ====================


def random_moment(
    spectral: SpectralData,
    region: Region,
    g: EnergyFilter,
    y: tuple,
    params: TransportParams,
    weights: np.ndarray | None = None,
) -> float:
    """M(p, g, t, y)."""
    w = weights if weights is not None else moment_weights(region, y, params.p, params.kind)
    amp = amplitude(spectral, region, g, y, params.t)
    return float(np.sum(w * np.abs(amp) ** 2))


def _kernel_sum(
    spectral: SpectralData, region: Region, g: EnergyFilter, y: tuple, weights: np.ndarray, kernel: np.ndarray
) -> complex:
    coeff = _coefficients(spectral, g, region.index_of(y))
    return complex(np.sum(weights * np.einsum("uj,jk,uk->u", coeff, kernel, coeff)))


def time_avg_moment(
    spectral: SpectralData,
    region: Region,
    g: EnergyFilter,
    y: tuple,
    params: TransportParams,
    weights: np.ndarray | None = None,
) -> float:
    """Closed form of the time-averaged moment, kernel 4 / (4 + T^2 Delta^2)."""
    w = weights if weights is not None else moment_weights(region, y, params.p, params.kind)
    delta = spectral.eigenvalues[:, None] - spectral.eigenvalues[None, :]
    kernel = 4.0 / (4.0 + (params.T * delta) ** 2)
    return _kernel_sum(spectral, region, g, y, w, kernel).real


def time_avg_moment_residue(
    spectral: SpectralData, region: Region, g: EnergyFilter, y: tuple, params: TransportParams
) -> float:
    """The E-integral of |G(E + i/T) phi|^2_w / (pi T) with phi = g(H) delta_y, closed in the lower half plane.

    Residues at E = lambda_j - i/T give (2i/T) sum_j <phi, G(lambda_j - 2i/T) W P_j phi>. Each
    G(lambda_j - 2i/T) phi is a solve against the tridiagonal Householder reduction of H.
    """
    w = moment_weights(region, y, params.p, params.kind)
    coeff = _coefficients(spectral, g, region.index_of(y))
    poles = np.flatnonzero(np.abs(coeff).max(axis=0) > 0)
    if len(poles) == 0:
        return 0.0
    values, vectors = spectral.eigenvalues, spectral.eigenvectors
    tri, q = scipy.linalg.hessenberg((vectors * values) @ vectors.T, calc_q=True)
    phi = q.T @ coeff.sum(axis=1)
    projected = q.T @ (w[:, None] * coeff[:, poles])
    banded = np.zeros((3, len(values)), dtype=complex)
    banded[0, 1:] = np.diag(tri, 1)
    banded[2, :-1] = np.diag(tri, -1)
    total = 0j
    for col, j in enumerate(poles.tolist()):
        banded[1] = np.diag(tri) - (values[j] - 2j / params.T)
        total += scipy.linalg.solve_banded((1, 1), banded, phi) @ projected[:, col]
    return float((2j / params.T * total).real)


def time_avg_moment_quadrature(
    spectral: SpectralData,
    region: Region,
    g: EnergyFilter,
    y: tuple,
    params: TransportParams,
    horizon: float = 40.0,
) -> float:
    """int_0^{horizon T} (2/T) e^{-2t/T} M(t) dt by adaptive quadrature."""
    w = moment_weights(region, y, params.p, params.kind)
    coeff = _coefficients(spectral, g, region.index_of(y))
    T = params.T

    def integrand(t: float) -> float:
        amp = coeff @ np.exp(-1j * t * spectral.eigenvalues)
        return (2 / T) * math.exp(-2 * t / T) * float(np.sum(w * np.abs(amp) ** 2))

    value, _ = integrate.quad(integrand, 0.0, horizon * T, limit=500, epsabs=1e-13, epsrel=1e-10)
    return float(value)


def resolvent_energy_quadrature(
    spectral: SpectralData,
    region: Region,
    g: EnergyFilter,
    y: tuple,
    params: TransportParams,
    window: float = 50.0,
) -> float:
    """(1/(pi T)) int dE sum_v <dist>^p |<delta_v, G(E + i/T) g(H) delta_y>|^2.

    The spectral window +-window/T is integrated with eigenvalue break points; the tails by
    quadrature on the half-lines.
    """
    w = moment_weights(region, y, params.p, params.kind)
    coeff = _coefficients(spectral, g, region.index_of(y))
    keep = np.abs(coeff).max(axis=0) > 0
    values, coeff = spectral.eigenvalues[keep], coeff[:, keep]
    if len(values) == 0:
        return 0.0
    T = params.T
    eta = 1.0 / T

    def integrand(energy: float) -> float:
        amp = coeff @ (1.0 / (values - energy - 1j * eta))
        return float(np.sum(w * np.abs(amp) ** 2))

    lo, hi = float(values.min()) - window / T, float(values.max()) + window / T
    points = np.unique(values)
    limit = max(200, 4 * len(points))
    opts = {"limit": limit, "epsabs": 1e-14, "epsrel": 1e-9}
    middle, _ = integrate.quad(integrand, lo, hi, points=points, **opts)
    left, _ = integrate.quad(integrand, -np.inf, lo, limit=limit, epsabs=1e-14, epsrel=1e-9)
    right, _ = integrate.quad(integrand, hi, np.inf, limit=limit, epsabs=1e-14, epsrel=1e-9)
    return (left + middle + right) / (math.pi * T)


class IdentityReport(BaseModel):
    closed_form: float
    residue_form: float
    quadrature_form: float
    closed_vs_residue: float = Field(..., description="Relative residual")
    closed_vs_quadrature: float = Field(..., description="Relative residual")
    passed: bool


def moment_resolvent_identity_check(
    spectral: SpectralData, region: Region, g: EnergyFilter, y: tuple, params: TransportParams
) -> IdentityReport:
    """Time-averaged moment three ways: closed form, pole sum, and energy quadrature of the resolvent."""
    closed = time_avg_moment(spectral, region, g, y, params)
    residue = time_avg_moment_residue(spectral, region, g, y, params)
    quad = resolvent_energy_quadrature(spectral, region, g, y, params)
    scale = max(abs(closed), 1e-300)
    r1, r2 = abs(closed - residue) / scale, abs(closed - quad) / scale
    return IdentityReport(
        closed_form=closed,
        residue_form=residue,
        quadrature_form=quad,
        closed_vs_residue=r1,
        closed_vs_quadrature=r2,
        passed=r1 <= 1e-10 and r2 <= 1e-3,
    )


def free_amplitude(x: np.ndarray | int, t: float) -> np.ndarray:
    """<delta_x, e^{-itH_0} delta_0> on Z with H_0 = 2 - adjacency: e^{-2it} i^{|x|} J_{|x|}(2t)."""
    x = np.abs(np.asarray(x))
    return np.exp(-2j * t) * (1j) ** x * special.jv(x, 2 * t)


def free_random_moment(p: float, t: float, cutoff: int | None = None) -> float:
    """M(p, 1, t, 0) on the infinite free chain, from Bessel functions."""
    cutoff = cutoff if cutoff is not None else int(4 * t + 60)
    x = np.arange(-cutoff, cutoff + 1)
    return float(np.sum((1 + x.astype(float) ** 2) ** (p / 2) * special.jv(np.abs(x), 2 * t) ** 2))


def free_time_avg_moment(p: float, T: float) -> float:
    value, _ = integrate.quad(
        lambda t: (2 / T) * math.exp(-2 * t / T) * free_random_moment(p, t), 0.0, 40 * T, limit=400
    )
    return float(value)


# ==================== Series and exponents ====================


class MomentSeries(BaseModel):
    """Ensemble-mean moments on a T (or t) grid, per initial site, with the sup over sites."""

    mode: MomentMode
    p: float
    grid: list[float]
    ys: list[tuple[int, ...]]
    values: list[list[float]] = Field(..., description="values[i_y][i_grid], ensemble means")
    ci_low: list[list[float]]
    ci_high: list[list[float]]
    sup_curve: list[float]
    trial_count: int

    def rows(self) -> list[dict]:
        """Flat rows for ``series.csv``."""
        out = []
        for iy, y in enumerate(self.ys):
            for ig, x in enumerate(self.grid):
                out.append(
                    {
                        "kind": self.mode,
                        "p": self.p,
                        "T_or_t": x,
                        "y": " ".join(str(c) for c in y),
                        "value": self.values[iy][ig],
                        "ci_lo": self.ci_low[iy][ig],
                        "ci_hi": self.ci_high[iy][ig],
                        "trial_count": self.trial_count,
                    }
                )
        return out


def core_sites(box: BoxSpec, region: Region) -> list[tuple[int, ...]]:
    """Sites at distance >= L/4 from the interior boundary: dist(center, y) <= L/4."""
    keep = 4 * distances2(box.kind, region.sites, box.center2) <= box.side2
    return [tuple(row) for row in region.flat[keep].tolist()]


def trial_moments(
    spectral: SpectralData,
    region: Region,
    g: EnergyFilter,
    ys: list[tuple[int, ...]],
    grid: list[float],
    p: float,
    kind: DistanceKind,
    mode: MomentMode = "time_avg",
) -> np.ndarray:
    """Moments of one realization, shaped (len(ys), len(grid))."""
    out = np.empty((len(ys), len(grid)))
    for iy, y in enumerate(ys):
        w = moment_weights(region, y, p, kind)
        for ig, x in enumerate(grid):
            if mode == "time_avg":
                out[iy, ig] = time_avg_moment(spectral, region, g, y, TransportParams(p=p, T=x, kind=kind), w)
            else:
                out[iy, ig] = random_moment(spectral, region, g, y, TransportParams(p=p, t=x, kind=kind), w)
    return out


def moment_series(
    per_trial: list[np.ndarray], ys: list[tuple[int, ...]], grid: list[float], p: float, mode: MomentMode
) -> MomentSeries:
    """Fold per-trial moment arrays (trial order) into ensemble means with Student-t intervals."""
    stack = np.stack(per_trial)  # (trials, ys, grid)
    means = np.empty(stack.shape[1:])
    low, high = np.empty_like(means), np.empty_like(means)
    for iy in range(stack.shape[1]):
        for ig in range(stack.shape[2]):
            est = mean_ci(stack[:, iy, ig])
            means[iy, ig], low[iy, ig], high[iy, ig] = est.mean, est.ci_low, est.ci_high
    return MomentSeries(
        mode=mode,
        p=p,
        grid=list(grid),
        ys=[tuple(y) for y in ys],
        values=means.tolist(),
        ci_low=low.tolist(),
        ci_high=high.tolist(),
        sup_curve=means.max(axis=0).tolist(),
        trial_count=len(per_trial),
    )


class TransportFit(BaseModel):
    """Finite-T estimates only: the limits T -> infinity are out of reach."""

    beta_hat: float = Field(..., description="Trailing-window slope of log M vs p log T")
    beta_minus: float = Field(..., description="Smallest local slope (finite-T proxy for the liminf)")
    beta_plus: float = Field(..., description="Largest local slope (finite-T proxy for the limsup)")
    r_squared: float
    window: int
    within_unit_interval: bool = Field(..., description="beta_hat in [-0.05, 1.05]")


def fit_transport_exponents(series: MomentSeries, p: float, window: int | None = None) -> TransportFit:
    grid = np.asarray(series.grid, dtype=float)
    values = np.asarray(series.sup_curve, dtype=float)
    if p <= 0:
        msg = f"exponent fits need p > 0, got {p}"
        raise PreconditionError(msg)
    if len(grid) < 5 or math.log10(grid.max() / grid.min()) < 1.5:
        msg = (
            f"degenerate grid: need >= 5 points over >= 1.5 decades, "
            f"got {len(grid)} over [{grid.min()}, {grid.max()}]"
        )
        raise PreconditionError(msg)
    order = np.argsort(grid)
    x, y = p * np.log(grid[order]), np.log(values[order])
    window = window or max(3, math.ceil(len(x) / 2))
    fit = linear_fit(x[-window:], y[-window:])
    local = np.diff(y) / np.diff(x)
    inside = -0.05 <= fit.slope <= 1.05
    if not inside:
        logger.warning(f"Transport exponent {fit.slope:.4f} outside [-0.05, 1.05] at finite T")
    return TransportFit(
        beta_hat=fit.slope,
        beta_minus=float(local.min()),
        beta_plus=float(local.max()),
        r_squared=fit.r_squared,
        window=window,
        within_unit_interval=inside,
    )


# ==================== Growth and gates ====================


class GrowthReport(BaseModel):
    order: int = Field(..., description="floor(p + nd) + 2")
    max_ratio: float = Field(..., description="max log M / log <t> over t >= t_min")
    passed: bool


def growth_order_check(
    times: list[float], values: list[float], p: float, n: int, d: int, slack: float = 0.1, t_min: float = 10.0
) -> GrowthReport:
    """log M(t) / log <t> <= floor(p + nd) + 2 + slack for t >= t_min."""
    order = math.floor(p + n * d) + 2
    ratios = [
        math.log(v) / math.log(math.sqrt(1 + t * t)) for t, v in zip(times, values, strict=True) if t >= t_min and v > 0
    ]
    worst = max(ratios) if ratios else 0.0
    return GrowthReport(order=order, max_ratio=worst, passed=worst <= order + slack)


def initial_condition_gate(p: float, alpha: float, theta: float, n: int, d: int) -> bool:
    """p > (theta + 2nd) alpha + 6 theta + 15nd with theta > 2nd."""
    nd = n * d
    return theta > 2 * nd and p > (theta + 2 * nd) * alpha + 6 * theta + 15 * nd


class TranslationReport(BaseModel):
    original: float
    translated: float
    deviation: float
    passed: bool


def translation_check(
    period: int,
    field: DisorderField,
    model: ModelSpec,
    g: EnergyFilter,
    y: tuple,
    shift: tuple[int, ...],
    params: TransportParams,
) -> TranslationReport:
    """M(p, g, t, tau_a y) for the shifted field equals M(p, g, t, y) on the product torus."""
    n, d = model.n, model.d
    op = assemble_periodic(period, field, model)
    moved_op = assemble_periodic(period, field.shifted(shift, period), model)
    y_arr = np.asarray(y, dtype=np.int64).reshape(n, d)
    moved_y = tuple(((y_arr + np.asarray(shift)[None]) % period).ravel().tolist())
    y_flat = tuple(y_arr.ravel().tolist())
    values = []
    for matrix, site in ((op, y_flat), (moved_op, moved_y)):
        spectral = eig(matrix)
        w = torus_weights(matrix.region, site, params.p, params.kind, period)
        values.append(random_moment(spectral, matrix.region, g, site, params, w))
    deviation = abs(values[0] - values[1])
    return TranslationReport(
        original=values[0],
        translated=values[1],
        deviation=deviation,
        passed=deviation <= 1e-10 * max(1.0, abs(values[0])),
    )
