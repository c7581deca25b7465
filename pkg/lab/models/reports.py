"""Pydantic models for ensemble reports and per-trial records."""

from typing import Any, Literal

from pydantic import BaseModel, Field

from lab.stats import clopper_pearson

Verdict = Literal["PASS", "FAIL", "DIAGNOSTIC"]

# ==================== Trial records ====================


class TrialRecord(BaseModel):
    """One row of ``trials.csv``."""

    trial: int = Field(..., ge=0, description="Trial index")
    seed: int = Field(..., description="Per-trial seed derived from the master seed")
    statistic: float = Field(..., description="The trial's scalar statistic (e.g. dist(sigma, E))")
    hit: bool = Field(..., description="Whether the statistic hit the tested event")


# ==================== Ensemble reports ====================


class EnsembleReport(BaseModel):
    """Aggregate hit probability with a 99% Clopper-Pearson interval, against a theoretical bound."""

    name: str = Field(..., description="What was estimated (e.g. 'wegner', 'wegner-pair')")
    trials: int = Field(..., ge=0)
    hits: int = Field(..., ge=0)
    estimate: float = Field(..., ge=0, le=1, description="Empirical probability p-hat")
    ci_low: float
    ci_high: float
    confidence: float
    bound: float | None = Field(None, description="Theoretical upper bound, when one applies")
    vacuous: bool = Field(False, description="Bound >= 1, so the comparison carries no information")
    verdict: Verdict
    params: dict[str, Any] = Field(default_factory=dict)
    records: list[TrialRecord] = Field(default_factory=list, exclude=True)

    @classmethod
    def from_records(
        cls,
        name: str,
        records: list[TrialRecord],
        bound: float | None,
        params: dict[str, Any] | None = None,
        diagnostic: bool = False,
    ) -> "EnsembleReport":
        """PASS iff the interval's lower end does not exceed the bound (one-sided consistency)."""
        hits = sum(r.hit for r in records)
        proportion = clopper_pearson(hits, len(records))
        if diagnostic or bound is None:
            verdict: Verdict = "DIAGNOSTIC"
        else:
            verdict = "PASS" if proportion.ci_low <= bound else "FAIL"
        return cls(
            name=name,
            trials=proportion.trials,
            hits=proportion.hits,
            estimate=proportion.estimate,
            ci_low=proportion.ci_low,
            ci_high=proportion.ci_high,
            confidence=proportion.confidence,
            bound=bound,
            vacuous=bound is not None and bound >= 1,
            verdict=verdict,
            params=params or {},
            records=records,
        )
