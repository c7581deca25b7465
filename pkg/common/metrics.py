"""OpenTelemetry metrics instrumentation for lab runs.

Provides centralized metrics for monitoring:
- Trial throughput and hit counts per experiment
- Eigensolve and trial latency (histograms)
- Failed hard assertions
- Artifacts written
"""

import logging

from opentelemetry import metrics
from opentelemetry.metrics import Counter, Histogram

logger = logging.getLogger(__name__)

# Get meter for lab metrics
meter = metrics.get_meter("anderson_lab.harness", version="0.1.0")

# Global metric instruments (can be reassigned for testing)
trials_completed_counter: Counter
trial_hits_counter: Counter
trial_duration_histogram: Histogram
eigensolve_duration_histogram: Histogram
assertions_failed_counter: Counter
artifacts_written_counter: Counter


def _create_metrics() -> None:
    """Create or recreate all metric instruments.

    This function is called at module initialization and can be called
    again during testing to recreate metrics with a test meter.
    """
    global trials_completed_counter, trial_hits_counter, trial_duration_histogram
    global eigensolve_duration_histogram, assertions_failed_counter, artifacts_written_counter

    # ============================================================================
    # TRIAL METRICS
    # ============================================================================

    trials_completed_counter = meter.create_counter(
        name="lab.trials.completed",
        description="Total number of completed trials",
        unit="trials",
    )

    trial_hits_counter = meter.create_counter(
        name="lab.trials.hits",
        description="Trials whose statistic hit the tested event",
        unit="trials",
    )

    trial_duration_histogram = meter.create_histogram(
        name="lab.trial.duration",
        description="Wall time of a single trial",
        unit="ms",
    )

    # ============================================================================
    # LINEAR ALGEBRA METRICS
    # ============================================================================

    eigensolve_duration_histogram = meter.create_histogram(
        name="lab.eigensolve.duration",
        description="Wall time of dense symmetric eigensolves",
        unit="ms",
    )

    # ============================================================================
    # OUTCOME METRICS
    # ============================================================================

    assertions_failed_counter = meter.create_counter(
        name="lab.assertions.failed",
        description="Hard assertions that failed during a run",
        unit="assertions",
    )

    artifacts_written_counter = meter.create_counter(
        name="lab.artifacts.written",
        description="Artifact files written by the single writer",
        unit="files",
    )


# Initialize metrics on module load
_create_metrics()


def _size_bucket(size: int) -> str:
    if size <= 100:
        return "le100"
    if size <= 1000:
        return "le1000"
    return "gt1000"


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================


def record_trial(experiment: str, duration_ms: float, hit: bool | None = None) -> None:
    """Record a completed trial.

    Args:
        experiment: Experiment kind (e.g. 'wegner', 'ct')
        duration_ms: Trial wall time in milliseconds
        hit: Whether the trial hit the tested event; None when not applicable
    """
    attributes = {"experiment": experiment}
    trials_completed_counter.add(1, attributes)
    trial_duration_histogram.record(duration_ms, attributes)
    if hit:
        trial_hits_counter.add(1, attributes)


def record_eigensolve(size: int, duration_ms: float) -> None:
    """Record a dense eigensolve.

    Args:
        size: Matrix dimension
        duration_ms: Solve wall time in milliseconds
    """
    eigensolve_duration_histogram.record(duration_ms, {"size_bucket": _size_bucket(size)})


def record_assertion_failure(experiment: str, check: str) -> None:
    """Record a failed hard assertion.

    Args:
        experiment: Experiment kind
        check: Name of the failed check
    """
    assertions_failed_counter.add(1, {"experiment": experiment, "check": check})


def record_artifact(kind: str) -> None:
    """Record an artifact file written.

    Args:
        kind: Artifact format ('csv', 'json', 'jsonl', 'txt')
    """
    artifacts_written_counter.add(1, {"format": kind})
