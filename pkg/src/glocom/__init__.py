"""Short-text topic modeling with clustered global context.

Documents are grouped by k-means on document representations, each group's
concatenated bag-of-words serves as a shared global context, and a VAE-style
topic model infers one topic distribution per group plus a per-document
adaptive modulation. Topic-word structure is kept apart by an entropic
optimal-transport pull between word and topic embeddings.
"""

__version__ = "0.1.0"

from .errors import (
    ClusteringError,
    ConfigError,
    CorpusError,
    EmbeddingError,
    GlocomError,
    TrainingError,
    TransportError,
)

__all__ = [
    "ClusteringError",
    "ConfigError",
    "CorpusError",
    "EmbeddingError",
    "GlocomError",
    "TrainingError",
    "TransportError",
    "__version__",
]
