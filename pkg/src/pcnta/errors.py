"""
Exception hierarchy for pcnta.
Every failure the package raises on purpose derives from PcntaError so the
CLI can map families of errors onto exit codes.
"""


class PcntaError(Exception):
    """Base class for all pcnta errors."""
    pass


class DimensionError(PcntaError, ValueError):
    """Operand shapes do not conform."""
    pass


class GraphBuildError(PcntaError, ValueError):
    """Layer specs do not describe a consistent chain."""
    pass


class SnapshotError(PcntaError, ValueError):
    """State snapshot does not match the graph it is restored into."""
    pass


class ConfigError(PcntaError):
    """Invalid run configuration."""
    pass


class DataError(PcntaError):
    """Input data could not be read or is inconsistent."""
    pass


class PgmParseError(DataError):
    """Malformed PGM file. Carries the byte offset of the failure."""

    def __init__(self, path: str, offset: int, reason: str) -> None:
        super().__init__(f"{path}: byte {offset}: {reason}")
        self.path = path
        self.offset = offset
        self.reason = reason


class IngestionError(DataError):
    """Dataset directory is missing views or holds duplicates."""

    def __init__(self, message: str, offenders: list[str]) -> None:
        listing = ", ".join(offenders[:20])
        more = f" (+{len(offenders) - 20} more)" if len(offenders) > 20 else ""
        super().__init__(f"{message}: {listing}{more}")
        self.offenders = offenders


class EmptyStreamError(DataError):
    """An operation that needs at least one frame or result got none."""
    pass


class MetricsIOError(PcntaError):
    """Metrics file could not be written or read."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path


class CheckpointError(DataError):
    """Checkpoint file is malformed or truncated."""
    pass


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""
    pass


class CheckFailure(PcntaError):
    """A run finished but one of its checks did not hold."""
    pass
