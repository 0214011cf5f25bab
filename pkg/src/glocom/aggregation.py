"""Document clustering, global context documents, augmented targets.

Each document gets a cluster g; the cluster's concatenated bag-of-words x^g
acts as shared context, and reconstruction targets become x + eta * x^g.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import BowCorpus, EmbeddingMatrix
from .errors import ClusteringError
from .rng import substream


@dataclass
class ClusterAssignment:
    assignment: np.ndarray  # (D,) int, values in 0..G-1
    G: int
    centroids: np.ndarray  # (G, E)
    inertia: float
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.size and (
            self.assignment.min() < 0 or self.assignment.max() >= self.G
        ):
            raise ClusteringError("cluster id out of range")
        if self.inertia < 0:
            raise ClusteringError("negative inertia")

    @property
    def num_docs(self) -> int:
        return self.assignment.shape[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.G)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (N, G). Clamped at 0 because the
    expanded form can go slightly negative in floating point."""
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * (X @ C.T)
        + np.sum(C * C, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_seed(X: np.ndarray, G: int, rng: np.random.Generator) -> np.ndarray:
    N = X.shape[0]
    centroids = np.empty((G, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(N))
    centroids[0] = X[first]
    closest = _sq_dists(X, centroids[:1]).ravel()
    for j in range(1, G):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(N))  # all points coincide with a centroid
        else:
            idx = int(rng.choice(N, p=closest / total))
        centroids[j] = X[idx]
        np.minimum(closest, _sq_dists(X, centroids[j : j + 1]).ravel(), out=closest)
    return centroids


def kmeans(
    embeddings: EmbeddingMatrix,
    G: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    init_centroids: Optional[np.ndarray] = None,
    normalize: bool = False,
) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding on Euclidean distance.

    Deterministic given the seed. Empty clusters are re-seeded to the point
    currently farthest from its assigned centroid. ``init_centroids``
    bypasses seeding (used for reproducibility across row permutations).
    """
    X = np.asarray(embeddings.rows, dtype=np.float64)
    N = X.shape[0]
    if N == 0:
        raise ClusteringError("cannot cluster an empty embedding matrix")
    if G < 1 or G > N:
        raise ClusteringError(f"need 1 <= G <= {N} documents, got G={G}")
    if normalize:
        norms = np.linalg.norm(X, axis=1)
        X = X.copy()
        nz = norms > 0
        X[nz] /= norms[nz, None]

    rng = substream(seed, "clustering")
    if init_centroids is not None:
        C = np.array(init_centroids, dtype=np.float64, copy=True)
        if C.shape != (G, X.shape[1]):
            raise ClusteringError(
                f"init_centroids shape {C.shape} != ({G}, {X.shape[1]})"
            )
    else:
        C = _kmeanspp_seed(X, G, rng)

    history: list[float] = []
    assign = np.zeros(N, dtype=np.int64)
    for _ in range(max_iters):
        d2 = _sq_dists(X, C)
        assign = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(N), assign].sum()))
        newC = np.zeros_like(C)
        counts = np.bincount(assign, minlength=G).astype(np.float64)
        np.add.at(newC, assign, X)
        nonempty = counts > 0
        newC[nonempty] /= counts[nonempty, None]
        for g in np.flatnonzero(~nonempty):
            # farthest point from its assigned centroid claims the slot
            cur = d2[np.arange(N), assign]
            far = int(np.argmax(cur))
            newC[g] = X[far]
            assign[far] = g
            d2[far, :] = np.inf
            d2[far, g] = 0.0
        shift = float(np.sqrt(np.sum((newC - C) ** 2, axis=1)).max())
        C = newC
        if shift < tol:
            break
    d2 = _sq_dists(X, C)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(N), assign].sum())
    history.append(inertia)
    return ClusterAssignment(assign, G, C, inertia, history)


def _normalize_assignment(assignment, G: Optional[int] = None) -> ClusterAssignment:
    """Accept a ClusterAssignment or a raw (D,) label array; for raw arrays
    the cluster count defaults to max id + 1 unless given explicitly."""
    if isinstance(assignment, ClusterAssignment):
        return assignment
    labels = np.asarray(assignment, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise ClusteringError("assignment must be a non-empty 1-d label array")
    g = int(labels.max()) + 1 if G is None else int(G)
    return ClusterAssignment(labels, g, np.zeros((g, 0)), 0.0)


def build_global_docs(
    corpus: BowCorpus, assignment, G: Optional[int] = None
) -> np.ndarray:
    """Per-cluster elementwise sum of member count vectors, exact integers."""
    assignment = _normalize_assignment(assignment, G)
    if assignment.num_docs != corpus.num_docs:
        raise ClusteringError(
            f"assignment covers {assignment.num_docs} documents, corpus has {corpus.num_docs}"
        )
    G, V = assignment.G, corpus.num_words
    out = np.zeros((G, V), dtype=np.int64)
    coo = corpus.counts.tocoo()
    np.add.at(out, (assignment.assignment[coo.row], coo.col), coo.data)
    empty = np.flatnonzero(assignment.counts() == 0)
    if empty.size:
        warnings.warn(f"clusters with no documents: {empty.tolist()}", stacklevel=2)
    return out


def build_augmented_docs(
    corpus: BowCorpus, global_docs: np.ndarray, assignment, eta: float
) -> np.ndarray:
    """x + eta * (own cluster's global doc), as real-valued soft counts."""
    assignment = _normalize_assignment(assignment, global_docs.shape[0])
    if eta < 0:
        raise ClusteringError(f"eta must be >= 0, got {eta}")
    if global_docs.shape[1] != corpus.num_words:
        raise ClusteringError("global docs and corpus disagree on vocabulary size")
    X = corpus.dense()
    return X + eta * global_docs[assignment.assignment].astype(np.float64)


@dataclass
class GlobalCorpus:
    global_docs: np.ndarray  # (G, V) exact integer sums
    augmented_docs: np.ndarray  # (D, V) real-valued soft counts
    eta: float


def build_global_corpus(
    corpus: BowCorpus, assignment, eta: float, G: Optional[int] = None
) -> GlobalCorpus:
    assignment = _normalize_assignment(assignment, G)
    g = build_global_docs(corpus, assignment)
    aug = build_augmented_docs(corpus, g, assignment, eta)
    return GlobalCorpus(g, aug, float(eta))


def profile_word_embeddings(
    corpus: BowCorpus, assignment, G: Optional[int] = None
) -> EmbeddingMatrix:
    """Corpus-derived word vectors from the global documents.

    Each word gets its distribution of relative frequency across the G
    clusters (share of each cluster's mass, renormalized per word), then
    every cluster dimension is standardized. Words loading on the same
    clusters land close together, so this serves where pretrained vectors
    do not exist for the vocabulary (synthetic corpora above all).
    """
    gd = build_global_docs(corpus, assignment, G).astype(np.float64)
    totals = gd.sum(axis=1, keepdims=True)
    share = np.divide(gd, totals, out=np.zeros_like(gd), where=totals > 0).T
    row = share.sum(axis=1, keepdims=True)
    prof = np.divide(
        share,
        row,
        out=np.full_like(share, 1.0 / share.shape[1]),
        where=row > 0,
    )
    prof = (prof - prof.mean(axis=0)) / (prof.std(axis=0) + 1e-12)
    return EmbeddingMatrix(prof, "cluster-profile")


def write_assignment(assignment: ClusterAssignment, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in assignment.assignment:
            fh.write(f"{g}\n")


def read_assignment(path: str, G: Optional[int] = None) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        ids = np.asarray([int(line) for line in fh if line.strip()], dtype=np.int64)
    if ids.size == 0:
        raise ClusteringError(f"assignment file is empty: {path}")
    if G is not None and ids.max() >= G:
        raise ClusteringError(f"assignment id {ids.max()} out of range for G={G}")
    return ids
