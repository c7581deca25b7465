"""Worker pool over trials, folded back in trial-index order."""

from __future__ import annotations

import logging
import time
from concurrent import futures
from typing import TYPE_CHECKING, TypeVar

from opentelemetry import trace

from common import metrics as lab_metrics
from lab.config import settings
from lab.harness.seeds import trial_seed

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

T = TypeVar("T")


def _hit(result: object) -> bool | None:
    """The trial's hit flag, from a row dict, a record or an object carrying a row."""
    row = getattr(result, "row", result)
    if isinstance(row, dict):
        hit = row.get("hit")
    else:
        hit = getattr(row, "hit", None)
    return bool(hit) if hit is not None else None


def _run_one(experiment: str, fn: Callable[[int, int], T], index: int, seed: int) -> T:
    start = time.perf_counter()
    with tracer.start_as_current_span(
        "lab.trial",
        kind=trace.SpanKind.INTERNAL,
        attributes={"lab.experiment": experiment, "lab.trial": index, "lab.seed": str(seed)},
    ):
        try:
            result = fn(index, seed)
        except Exception:
            logger.error(f"Trial {index} of {experiment} failed (seed={seed})", exc_info=True)
            raise
    duration_ms = (time.perf_counter() - start) * 1000
    lab_metrics.record_trial(experiment, duration_ms, hit=_hit(result))
    logger.debug(f"Trial {index} of {experiment} done (seed={seed})")
    return result


def map_trials(
    fn: Callable[[int, int], T],
    count: int,
    master_seed: int,
    workers: int | None = None,
    experiment: str = "adhoc",
    start: int = 0,
) -> list[T]:
    """Evaluate ``fn(trial_index, trial_seed)`` for every trial; the result list is in trial order.

    Results never depend on ``workers``: each trial sees only its own seed.
    """
    workers = workers or settings.LAB_WORKERS
    indices = range(start, start + count)
    seeds = [trial_seed(master_seed, i) for i in indices]
    if workers <= 1:
        return [_run_one(experiment, fn, i, s) for i, s in zip(indices, seeds, strict=True)]
    with futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda args: _run_one(experiment, fn, *args), zip(indices, seeds, strict=True)))
