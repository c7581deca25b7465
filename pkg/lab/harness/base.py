"""Experiment interface shared by every experiment kind."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, ClassVar, Generic, TypeVar

from lab.harness.pool import map_trials

if TYPE_CHECKING:
    from lab.hamiltonian import DisorderField
    from lab.models.experiments import ExperimentBase

logger = logging.getLogger(__name__)

C = TypeVar("C", bound="ExperimentBase")


@dataclass
class TrialOutput:
    """One trial: its ``trials.csv`` row, archived verdicts, and the fields it sampled."""

    row: dict[str, Any]
    verdicts: list[dict[str, Any]] = field(default_factory=list)
    fields: dict[str, DisorderField] = field(default_factory=dict)
    payload: Any = None  # per-trial arrays folded by summarize, never written


@dataclass
class RunResult:
    rows: list[dict[str, Any]]
    summary: dict[str, Any]
    series: list[dict[str, Any]] | None = None
    verdicts: list[dict[str, Any]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


class Experiment(ABC, Generic[C]):
    """Abstract experiment: per-trial evaluation, ensemble summary and hard checks."""

    kind: ClassVar[str]

    def __init__(self, config: C):
        self.config = config

    @abstractmethod
    def trial(self, index: int, seed: int) -> TrialOutput:
        """
        Evaluate one trial.

        Args:
            index: Trial index
            seed: Per-trial seed derived from the master seed

        Returns:
            The trial's row, verdicts and sampled disorder fields
        """
        pass

    @abstractmethod
    def summarize(self, outputs: list[TrialOutput]) -> tuple[dict[str, Any], list[dict[str, Any]] | None]:
        """
        Fold trial outputs (trial-index order) into a summary.

        Returns:
            Summary dict for ``summary.json`` and optional ``series.csv`` rows
        """
        pass

    def check(self, summary: dict[str, Any]) -> list[str]:  # noqa: ARG002
        """Names of failed hard assertions; empty when the run passes."""
        return []

    def run(self, workers: int | None = None) -> RunResult:
        cfg = self.config
        outputs = map_trials(self.trial, cfg.trials, cfg.seed, workers, experiment=self.kind)
        summary, series = self.summarize(outputs)
        failures = self.check(summary)
        if failures:
            logger.error(f"{self.kind}: {len(failures)} hard assertion(s) failed: {', '.join(failures)}")
        return RunResult(
            rows=[o.row for o in outputs],
            summary=summary,
            series=series,
            verdicts=[v for o in outputs for v in o.verdicts],
            failures=failures,
        )
