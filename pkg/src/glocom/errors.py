"""Exception types shared across the package."""


class GlocomError(Exception):
    """Base class for all package-specific failures."""


class CorpusError(GlocomError):
    """Raised for malformed or degenerate corpus inputs."""


class EmbeddingError(GlocomError):
    """Raised for unreadable or inconsistent embedding files."""


class ClusteringError(GlocomError):
    """Raised when clustering preconditions are violated."""


class ConfigError(GlocomError):
    """Raised for invalid configuration values or files."""


class TrainingError(GlocomError):
    """Raised when optimization diverges or a checkpoint is unusable."""


class TransportError(GlocomError):
    """Raised when a transport plan cannot be computed reliably."""
