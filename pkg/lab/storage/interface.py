"""Artifact storage abstraction for run outputs."""

import hashlib
from abc import ABC, abstractmethod
from typing import Any


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArtifactStore(ABC):
    """Abstract artifact store: one instance per run directory."""

    # ==================== Writes ====================

    @abstractmethod
    def write_csv(self, name: str, rows: list[dict[str, Any]], fieldnames: list[str] | None = None) -> str:
        """
        Write a CSV table.

        Args:
            name: Artifact name relative to the run directory
            rows: Table rows; missing keys are written empty
            fieldnames: Column order; keys of the first row when omitted

        Returns:
            SHA-256 of the written bytes
        """
        pass

    @abstractmethod
    def write_json(self, name: str, payload: Any) -> str:
        """
        Write canonical JSON (sorted keys, two-space indent).

        Args:
            name: Artifact name relative to the run directory
            payload: JSON-serializable object

        Returns:
            SHA-256 of the written bytes
        """
        pass

    @abstractmethod
    def write_jsonl(self, name: str, records: list[dict[str, Any]]) -> str:
        """
        Write one canonical JSON object per line.

        Returns:
            SHA-256 of the written bytes
        """
        pass

    @abstractmethod
    def write_text(self, name: str, text: str) -> str:
        pass

    # ==================== Reads ====================

    @abstractmethod
    def read_bytes(self, name: str) -> bytes:
        """
        Read an artifact back.

        Raises:
            FileNotFoundError: if the artifact does not exist
        """
        pass

    def checksum(self, name: str) -> str:
        """SHA-256 of the stored artifact."""
        return sha256_hex(self.read_bytes(name))

    @property
    @abstractmethod
    def checksums(self) -> dict[str, str]:
        """Name -> SHA-256 of every artifact written through this store."""
        pass
