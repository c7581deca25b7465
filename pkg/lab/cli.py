"""Command-line entry point: ``lab run`` and ``lab replay``."""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys

from opentelemetry import metrics, trace
from opentelemetry.instrumentation.logging import LoggingInstrumentor
from pydantic import ValidationError

from lab.config import settings
from lab.errors import LabError
from lab.harness import runner

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, settings.LAB_LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stdout)],
    )
    os.environ.setdefault("OTEL_SERVICE_NAME", "anderson-lab")
    with contextlib.suppress(ImportError):
        LoggingInstrumentor().instrument()


def configure_telemetry() -> None:
    """Export metrics and traces over OTLP/gRPC when LAB_OTLP_ENDPOINT is set; no-op providers otherwise."""
    endpoint = settings.LAB_OTLP_ENDPOINT
    if not endpoint:
        return
    from opentelemetry.exporter.otlp.proto.grpc.metric_exporter import OTLPMetricExporter  # noqa: PLC0415
    from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter  # noqa: PLC0415
    from opentelemetry.sdk.metrics import MeterProvider  # noqa: PLC0415
    from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader  # noqa: PLC0415
    from opentelemetry.sdk.resources import Resource  # noqa: PLC0415
    from opentelemetry.sdk.trace import TracerProvider  # noqa: PLC0415
    from opentelemetry.sdk.trace.export import BatchSpanProcessor  # noqa: PLC0415

    resource = Resource.create({"service.name": os.environ["OTEL_SERVICE_NAME"]})
    tracer_provider = TracerProvider(resource=resource)
    tracer_provider.add_span_processor(BatchSpanProcessor(OTLPSpanExporter(endpoint=endpoint, insecure=True)))
    trace.set_tracer_provider(tracer_provider)
    reader = PeriodicExportingMetricReader(OTLPMetricExporter(endpoint=endpoint, insecure=True))
    metrics.set_meter_provider(MeterProvider(resource=resource, metric_readers=[reader]))
    logger.info(f"✓ OTLP export: {endpoint}")


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="lab", description="Desk-scale two-particle Anderson model lab")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="Run one experiment config")
    run_parser.add_argument("config", help="Experiment config (JSON)")
    run_parser.add_argument("--trials", type=int, help="Override the trial count")
    run_parser.add_argument("--seed", type=int, help="Override the master seed")
    run_parser.add_argument("--workers", type=int, help="Worker threads (default: LAB_WORKERS)")
    run_parser.add_argument("--out", help="Output directory (default: LAB_OUTPUT_DIR/<kind>)")

    replay_parser = sub.add_parser("replay", help="Regenerate one archived trial")
    replay_parser.add_argument("manifest", help="manifest.json of a finished run")
    replay_parser.add_argument("trial", type=int, help="Trial index")
    return parser.parse_args(argv)


def _report_validation(e: ValidationError) -> None:
    for error in e.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        print(f"config error at {location}: {error['msg']}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    configure_logging()
    configure_telemetry()
    try:
        if args.command == "run":
            config = runner.apply_overrides(runner.load_config(args.config), args.trials, args.seed, args.out)
            outcome = runner.run(config, workers=args.workers)
            if outcome.manifest.failures:
                logger.error(f"Failed checks: {', '.join(outcome.manifest.failures)}")
            return outcome.exit_code
        outcome = runner.replay(args.manifest, args.trial)
        return 0 if outcome.matches_archive else 1
    except ValidationError as e:
        _report_validation(e)
        return 2
    except LabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
