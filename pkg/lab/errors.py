"""Error hierarchy for the lab.

Every error carries the process exit code the CLI reports for it.
"""


class LabError(Exception):
    """Base class for lab errors."""

    exit_code = 1


class ConfigurationError(LabError):
    """Experiment configuration is malformed or inconsistent."""

    exit_code = 2


class ResourceCeilingError(LabError):
    """An enumeration or dense solve would exceed a configured ceiling."""

    exit_code = 3


class GeometryError(LabError, ValueError):
    """Dimension mismatch or an invalid lattice construction."""


class PreconditionError(LabError, ValueError):
    """An operation was called outside its hypotheses."""


class ResonantEnergyError(PreconditionError):
    """Energy lies on (or numerically at) the finite-volume spectrum."""


class ConvergenceError(LabError, RuntimeError):
    """Eigensolver failed; the offending instance is attached for archival."""

    def __init__(self, msg: str, instance: dict | None = None):
        super().__init__(msg)
        self.instance = instance or {}


class ChecksumMismatchError(LabError):
    """An archived artifact no longer matches its manifest checksum."""
