"""Filesystem artifact store."""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
from opentelemetry import trace

from common import metrics as lab_metrics
from lab.storage.interface import ArtifactStore, sha256_hex

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)


def _json_safe(value: Any) -> Any:
    """Numpy scalars and arrays become Python values; non-finite floats become strings (strict JSON)."""
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_json_safe(v) for v in value]
    return value


def canonical_json(payload: Any, indent: int | None = 2) -> str:
    return json.dumps(_json_safe(payload), sort_keys=True, indent=indent, allow_nan=False)


def format_csv(rows: list[dict[str, Any]], fieldnames: list[str]) -> str:
    """CSV text with a header line; replay formats regenerated rows through the same writer."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


class FilesystemStore(ArtifactStore):
    """Writes artifacts under one run directory, creating it on first use."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._checksums: dict[str, str] = {}

    def _write(self, name: str, data: bytes, kind: str) -> str:
        path = self.root / name
        with tracer.start_as_current_span(
            "lab.artifact.write", attributes={"lab.artifact": name, "lab.artifact.bytes": len(data)}
        ):
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        digest = sha256_hex(data)
        self._checksums[name] = digest
        lab_metrics.record_artifact(kind)
        logger.debug(f"Wrote {path} ({len(data)} bytes, sha256={digest[:12]})")
        return digest

    def write_csv(self, name: str, rows: list[dict[str, Any]], fieldnames: list[str] | None = None) -> str:
        if fieldnames is None:
            fieldnames = list(rows[0].keys()) if rows else []
        return self._write(name, format_csv(rows, fieldnames).encode("utf-8"), "csv")

    def write_json(self, name: str, payload: Any) -> str:
        return self._write(name, (canonical_json(payload) + "\n").encode("utf-8"), "json")

    def write_jsonl(self, name: str, records: list[dict[str, Any]]) -> str:
        text = "".join(canonical_json(r, indent=None) + "\n" for r in records)
        return self._write(name, text.encode("utf-8"), "jsonl")

    def write_text(self, name: str, text: str) -> str:
        return self._write(name, text.encode("utf-8"), "txt")

    def read_bytes(self, name: str) -> bytes:
        return (self.root / name).read_bytes()

    @property
    def checksums(self) -> dict[str, str]:
        return dict(self._checksums)
