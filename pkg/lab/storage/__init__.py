"""Artifact storage package."""

from lab.storage.filesystem import FilesystemStore
from lab.storage.interface import ArtifactStore

__all__ = ["ArtifactStore", "FilesystemStore"]
