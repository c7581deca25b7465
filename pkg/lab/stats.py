"""Ensemble statistics: binomial and mean confidence intervals, regression fits."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

CONFIDENCE = 0.99


class Proportion(BaseModel):
    """Empirical hit rate with a two-sided Clopper-Pearson interval."""

    trials: int = Field(..., ge=0)
    hits: int = Field(..., ge=0)
    estimate: float = Field(..., ge=0, le=1)
    ci_low: float
    ci_high: float
    confidence: float = CONFIDENCE


def clopper_pearson(hits: int, trials: int, confidence: float = CONFIDENCE) -> Proportion:
    """Exact binomial interval from beta quantiles."""
    alpha = 1 - confidence
    if trials == 0:
        return Proportion(trials=0, hits=0, estimate=0.0, ci_low=0.0, ci_high=1.0, confidence=confidence)
    low = 0.0 if hits == 0 else float(stats.beta.ppf(alpha / 2, hits, trials - hits + 1))
    high = 1.0 if hits == trials else float(stats.beta.ppf(1 - alpha / 2, hits + 1, trials - hits))
    return Proportion(
        trials=trials, hits=hits, estimate=hits / trials, ci_low=low, ci_high=high, confidence=confidence
    )


class MeanEstimate(BaseModel):
    count: int
    mean: float
    ci_low: float
    ci_high: float


def mean_ci(values: np.ndarray | list[float], confidence: float = CONFIDENCE) -> MeanEstimate:
    """Sample mean with a Student-t interval (degenerate when fewer than two values)."""
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        return MeanEstimate(count=0, mean=math.nan, ci_low=math.nan, ci_high=math.nan)
    mean = float(x.mean())
    if len(x) < 2:
        return MeanEstimate(count=1, mean=mean, ci_low=mean, ci_high=mean)
    sem = float(x.std(ddof=1) / math.sqrt(len(x)))
    half = float(stats.t.ppf(0.5 + confidence / 2, len(x) - 1)) * sem
    return MeanEstimate(count=len(x), mean=mean, ci_low=mean - half, ci_high=mean + half)


class LinearFit(BaseModel):
    slope: float
    intercept: float
    r_squared: float
    stderr: float
    points: int


def linear_fit(x: np.ndarray, y: np.ndarray) -> LinearFit:
    result = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return LinearFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue**2),
        stderr=float(result.stderr),
        points=len(x),
    )


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two indicator series; 0 when either is constant."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(stats.pearsonr(a, b)[0])
