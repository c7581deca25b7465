"""Run and replay experiments; the single writer for every artifact of a run."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from datetime import UTC, datetime
from importlib import metadata
from pathlib import Path
from typing import Any

from opentelemetry import trace

import lab
from common import metrics as lab_metrics
from lab.config import settings
from lab.errors import ChecksumMismatchError, ConfigurationError
from lab.harness.base import RunResult
from lab.harness.experiments import build_experiment
from lab.harness.seeds import GENERATOR_FAMILY, trial_seed
from lab.models.experiments import ExperimentBase, RunManifest, config_adapter
from lab.storage import FilesystemStore
from lab.storage.filesystem import canonical_json, format_csv
from lab.storage.interface import sha256_hex

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

TRIALS_CSV = "trials.csv"
SERIES_CSV = "series.csv"
SUMMARY_JSON = "summary.json"
VERDICTS_JSONL = "verdicts.jsonl"
MANIFEST_JSON = "manifest.json"


def code_version() -> str:
    try:
        return metadata.version("anderson-lab")
    except metadata.PackageNotFoundError:
        return lab.__version__


def config_sha256(config: ExperimentBase) -> str:
    return sha256_hex(canonical_json(config.model_dump(mode="json"), indent=None).encode("utf-8"))


def _now() -> str:
    return datetime.now(UTC).isoformat(timespec="seconds")


def _fieldnames(rows: list[dict[str, Any]]) -> list[str]:
    """Union of row keys in first-seen order."""
    return list(dict.fromkeys(key for row in rows for key in row))


# ==================== Configuration ====================


def load_config(path: str | Path) -> ExperimentBase:
    """
    Load and validate an experiment config file.

    Args:
        path: JSON config file

    Returns:
        The validated config of the kind named in the file

    Raises:
        ConfigurationError: The file is missing or not JSON
        pydantic.ValidationError: The content violates the schema
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        msg = f"config file not found: {path}"
        raise ConfigurationError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"{path} is not valid JSON: {e}"
        raise ConfigurationError(msg) from e
    return config_adapter.validate_python(payload)


def apply_overrides(
    config: ExperimentBase, trials: int | None = None, seed: int | None = None, out: str | None = None
) -> ExperimentBase:
    """Re-validate the config with CLI overrides applied."""
    updates = {key: value for key, value in (("trials", trials), ("seed", seed), ("output_dir", out)) if value is not None}
    if not updates:
        return config
    return config_adapter.validate_python({**config.model_dump(mode="json"), **updates})


# ==================== Run ====================


@dataclass
class RunOutcome:
    run_dir: Path
    manifest: RunManifest
    result: RunResult

    @property
    def exit_code(self) -> int:
        return self.manifest.exit_code


def run(config: ExperimentBase, workers: int | None = None) -> RunOutcome:
    """
    Execute one experiment and write its artifacts.

    Args:
        config: Validated experiment config
        workers: Worker threads; falls back to the config, then LAB_WORKERS

    Returns:
        The run directory, its manifest and the in-memory result
    """
    run_dir = Path(config.output_dir) if config.output_dir else Path(settings.LAB_OUTPUT_DIR) / config.kind
    store = FilesystemStore(run_dir)
    started = _now()
    with tracer.start_as_current_span(
        "lab.run",
        attributes={"lab.experiment": config.kind, "lab.trials": config.trials, "lab.seed": str(config.seed)},
    ):
        experiment = build_experiment(config)
        logger.info(f"Running {config.kind} ({config.trials} trials, seed={config.seed}) into {run_dir}")
        result = experiment.run(workers or config.workers)

        store.write_csv(TRIALS_CSV, result.rows, _fieldnames(result.rows))
        if result.series is not None:
            store.write_csv(SERIES_CSV, result.series, _fieldnames(result.series))
        summary = {
            "kind": config.kind,
            "trials": config.trials,
            "master_seed": config.seed,
            "failures": result.failures,
            **result.summary,
        }
        store.write_json(SUMMARY_JSON, summary)
        store.write_jsonl(VERDICTS_JSONL, result.verdicts)

    for check in result.failures:
        lab_metrics.record_assertion_failure(config.kind, check)
    manifest = RunManifest(
        kind=config.kind,
        config=config.model_dump(mode="json"),
        config_sha256=config_sha256(config),
        code_version=code_version(),
        generator=GENERATOR_FAMILY,
        master_seed=config.seed,
        trials=config.trials,
        started_at=started,
        finished_at=_now(),
        outputs=store.checksums,
        failures=result.failures,
        exit_code=1 if result.failures else 0,
    )
    store.write_json(MANIFEST_JSON, manifest.model_dump(mode="json"))
    logger.info(f"✓ wrote {len(manifest.outputs)} artifacts and {MANIFEST_JSON} to {run_dir}")
    return RunOutcome(run_dir=run_dir, manifest=manifest, result=result)


# ==================== Replay ====================


def verify_checksums(run_dir: Path, manifest: RunManifest) -> None:
    for name, digest in manifest.outputs.items():
        path = run_dir / name
        if not path.exists():
            msg = f"archived artifact {name} is missing from {run_dir}"
            raise ChecksumMismatchError(msg)
        found = sha256_hex(path.read_bytes())
        if found != digest:
            msg = f"{name}: sha256 {found[:12]} does not match manifest {digest[:12]}"
            raise ChecksumMismatchError(msg)


def _archived_line(run_dir: Path, trial: int) -> tuple[list[str], str]:
    lines = (run_dir / TRIALS_CSV).read_text(encoding="utf-8").splitlines()
    header = next(csv.reader(io.StringIO(lines[0])))
    return header, lines[trial + 1]


@dataclass
class ReplayOutcome:
    trial: int
    seed: int
    matches_archive: bool
    outputs: list[Path]


def replay(manifest_path: str | Path, trial: int) -> ReplayOutcome:
    """
    Regenerate one archived trial and dump its disorder field and verdicts.

    Args:
        manifest_path: ``manifest.json`` of a finished run
        trial: Trial index to regenerate

    Returns:
        Whether the regenerated row is byte-identical to the archived one, and the files written

    Raises:
        ChecksumMismatchError: An archived artifact or the config no longer matches the manifest
        ConfigurationError: The trial index is out of range
    """
    manifest_path = Path(manifest_path)
    run_dir = manifest_path.parent
    manifest = RunManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    verify_checksums(run_dir, manifest)
    config = config_adapter.validate_python(manifest.config)
    if config_sha256(config) != manifest.config_sha256:
        msg = "archived config does not hash to the manifest's config_sha256"
        raise ChecksumMismatchError(msg)
    if manifest.code_version != code_version():
        logger.warning(f"Replaying a run of {manifest.code_version} with {code_version()}")
    if not 0 <= trial < manifest.trials:
        msg = f"trial {trial} is outside 0..{manifest.trials - 1}"
        raise ConfigurationError(msg)

    seed = trial_seed(manifest.master_seed, trial)
    with tracer.start_as_current_span(
        "lab.replay", attributes={"lab.experiment": manifest.kind, "lab.trial": trial, "lab.seed": str(seed)}
    ):
        output = build_experiment(config).trial(trial, seed)

    header, archived = _archived_line(run_dir, trial)
    regenerated = format_csv([output.row], header).splitlines()[1]
    matches = regenerated == archived
    if matches:
        logger.info(f"✓ trial {trial} reproduces its archived row")
    else:
        logger.error(f"Trial {trial} differs from the archive:\n  archived:    {archived}\n  regenerated: {regenerated}")

    store = FilesystemStore(run_dir)
    written = [f"replay-{trial}.json"]
    store.write_json(
        written[0],
        {
            "kind": manifest.kind,
            "trial": trial,
            "seed": seed,
            "code_version": code_version(),
            "matches_archive": matches,
            "row": output.row,
            "verdicts": output.verdicts,
        },
    )
    for name, field in output.fields.items():
        written.append(f"replay-{trial}-{name}.disorder.txt")
        store.write_text(written[-1], field.dump())
    return ReplayOutcome(trial=trial, seed=seed, matches_archive=matches, outputs=[run_dir / w for w in written])
