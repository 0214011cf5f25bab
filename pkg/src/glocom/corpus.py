"""Corpus ingestion: vocabulary, bag-of-words, TF-IDF, embedding files.

Input corpora are pre-tokenized (one document per line, whitespace-separated,
already lowercased); no stemming or stopword logic lives here.
"""

import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CorpusError, EmbeddingError
from .rng import substream

_GEMB_MAGIC = b"GEMB"


@dataclass
class Vocabulary:
    words: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {}
        for i, w in enumerate(self.words):
            if not w:
                raise CorpusError("empty token in vocabulary")
            if w in self.index:
                raise CorpusError(f"duplicate token in vocabulary: {w!r}")
            self.index[w] = i

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, token: str) -> bool:
        return token in self.index


@dataclass
class BowCorpus:
    """Sparse document-term count matrix with optional gold labels."""

    counts: sp.csr_matrix  # D x V, non-negative integers
    vocab: Vocabulary
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.counts = sp.csr_matrix(self.counts)
        self.counts.eliminate_zeros()
        if self.counts.shape[1] != len(self.vocab):
            raise CorpusError(
                f"count matrix has {self.counts.shape[1]} columns for a "
                f"{len(self.vocab)}-word vocabulary"
            )
        if self.counts.nnz and self.counts.data.min() <= 0:
            raise CorpusError("count matrix contains non-positive stored entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.counts.shape[0]:
                raise CorpusError(
                    f"{self.labels.shape[0]} labels for {self.counts.shape[0]} documents"
                )

    @property
    def num_docs(self) -> int:
        return self.counts.shape[0]

    @property
    def num_words(self) -> int:
        return self.counts.shape[1]

    @property
    def doc_lengths(self) -> np.ndarray:
        return np.asarray(self.counts.sum(axis=1), dtype=np.int64).ravel()

    def dense(self) -> np.ndarray:
        return np.asarray(self.counts.todense(), dtype=np.float64)


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray  # N x E, finite
    source_tag: str  # "precomputed-file", "tfidf", or "cluster-profile"

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] < 1:
            raise EmbeddingError(f"embedding matrix must be 2-D, got shape {self.rows.shape}")
        if not np.all(np.isfinite(self.rows)):
            raise EmbeddingError("embedding matrix contains non-finite values")
        if self.source_tag not in ("precomputed-file", "tfidf", "cluster-profile"):
            raise EmbeddingError(f"unknown embedding source tag: {self.source_tag!r}")


@dataclass
class WordEmbeddingInit:
    vectors: np.ndarray  # V x L
    coverage: float  # fraction of vocabulary found in the init file


def build_vocabulary(raw_docs: Sequence[Sequence[str]], min_freq: int) -> Vocabulary:
    """Keep tokens with corpus frequency >= min_freq, in first-occurrence order."""
    if min_freq < 1:
        raise CorpusError(f"min_freq must be >= 1, got {min_freq}")
    if not raw_docs:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    freq: Counter[str] = Counter()
    order: list[str] = []
    seen: set[str] = set()
    for doc in raw_docs:
        for tok in doc:
            freq[tok] += 1
            if tok not in seen:
                seen.add(tok)
                order.append(tok)
    kept = [w for w in order if freq[w] >= min_freq]
    if not kept:
        raise CorpusError(f"vocabulary is empty after min_freq={min_freq} filtering")
    return Vocabulary(kept)


def build_bow(
    raw_docs: Sequence[Sequence[str]],
    vocab: Vocabulary,
    min_terms: int,
    labels: Optional[Sequence[int]] = None,
) -> tuple[BowCorpus, list[int]]:
    """Count in-vocabulary tokens per document.

    Documents with fewer than ``min_terms`` distinct in-vocabulary terms are
    dropped. Returns the corpus plus the kept-index list so labels and
    precomputed embeddings can be filtered consistently.
    """
    if min_terms < 1:
        raise CorpusError(f"min_terms must be >= 1, got {min_terms}")
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    kept: list[int] = []
    for d, doc in enumerate(raw_docs):
        cnt = Counter(vocab.index[t] for t in doc if t in vocab.index)
        if len(cnt) < min_terms:
            continue
        kept.append(d)
        for w in sorted(cnt):
            indices.append(w)
            data.append(cnt[w])
        indptr.append(len(indices))
    if not kept:
        raise CorpusError(f"all documents dropped at min_terms={min_terms}")
    counts = sp.csr_matrix(
        (np.asarray(data, dtype=np.int64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(kept), len(vocab)),
    )
    kept_labels = None
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != len(raw_docs):
            raise CorpusError(f"{labels.shape[0]} labels for {len(raw_docs)} raw documents")
        kept_labels = labels[kept]
    return BowCorpus(counts, vocab, kept_labels), kept


def preprocess(
    raw_docs: Sequence[Sequence[str]],
    min_freq: int = 3,
    min_terms: int = 2,
    labels: Optional[Sequence[int]] = None,
    vocab: Optional[Vocabulary] = None,
) -> tuple[BowCorpus, list[int]]:
    """Vocabulary pruning and document filtering, iterated to a fixpoint.

    Dropping short documents can push some word frequencies back below
    min_freq, so the two filters are alternated until the kept corpus is
    stable. With a caller-supplied ``vocab`` the vocabulary is pinned and only
    the document filter runs.
    """
    kept = list(range(len(raw_docs)))
    docs = [list(d) for d in raw_docs]
    if vocab is not None:
        bow, sub = build_bow(docs, vocab, min_terms, labels)
        return bow, [kept[i] for i in sub]
    cur_labels = None if labels is None else np.asarray(labels, dtype=np.int64)
    while True:
        vocab = build_vocabulary(docs, min_freq)
        bow, sub = build_bow(docs, vocab, min_terms, cur_labels)
        if len(sub) == len(docs):
            return bow, kept
        kept = [kept[i] for i in sub]
        docs = [docs[i] for i in sub]
        if cur_labels is not None:
            cur_labels = cur_labels[sub]


def tfidf(corpus: BowCorpus) -> EmbeddingMatrix:
    """Raw-count TF times log(D/df), rows L2-normalized (zero rows stay zero)."""
    D = corpus.num_docs
    if D == 0:
        raise CorpusError("cannot compute TF-IDF of an empty corpus")
    df = np.asarray((corpus.counts > 0).sum(axis=0), dtype=np.float64).ravel()
    idf = np.zeros_like(df)
    present = df > 0
    idf[present] = np.log(D / df[present])
    X = corpus.counts.toarray().astype(np.float64) * idf[None, :]
    norms = np.linalg.norm(X, axis=1)
    nz = norms > 0
    X[nz] /= norms[nz, None]
    return EmbeddingMatrix(X, "tfidf")


# ---------------------------------------------------------------------------
# file formats


def read_corpus_file(path: str) -> list[list[str]]:
    """One document per line, whitespace-separated tokens. Blank lines are
    empty documents (they will be dropped by any min_terms >= 1 filter)."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            docs.append(line.split())
    if not docs:
        raise CorpusError(f"corpus file is empty: {path}")
    return docs


def read_label_file(path: str) -> np.ndarray:
    labels = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise CorpusError(f"{path}:{ln}: label is not an integer: {line!r}")
    return np.asarray(labels, dtype=np.int64)


def write_vocabulary(vocab: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in vocab.words:
            fh.write(w + "\n")


def read_vocabulary(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        words = [line.rstrip("\n") for line in fh if line.strip()]
    if not words:
        raise CorpusError(f"vocabulary file is empty: {path}")
    return Vocabulary(words)


def write_bow(corpus: BowCorpus, path: str) -> None:
    """Header "D V NNZ", then one "doc word count" triple per line."""
    coo = corpus.counts.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{corpus.num_docs} {corpus.num_words} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]}\n")


def read_bow(path: str, vocab: Vocabulary, labels: Optional[np.ndarray] = None) -> BowCorpus:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise CorpusError(f"{path}: expected 'D V NNZ' header, got {header}")
        D, V, nnz = (int(x) for x in header)
        if V != len(vocab):
            raise CorpusError(f"{path}: file has V={V}, vocabulary has {len(vocab)} words")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.int64)
        for i in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise CorpusError(f"{path}: truncated at entry {i} of {nnz}")
            rows[i], cols[i], vals[i] = int(parts[0]), int(parts[1]), int(parts[2])
    counts = sp.csr_matrix((vals, (rows, cols)), shape=(D, V))
    return BowCorpus(counts, vocab, labels)


def write_kept_indices(kept: Sequence[int], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in kept:
            fh.write(f"{i}\n")


def read_kept_indices(path: str) -> list[int]:
    with open(path, encoding="utf-8") as fh:
        return [int(line) for line in fh if line.strip()]


def save_embeddings(matrix: np.ndarray, path: str) -> None:
    """Binary layout: magic "GEMB", u64-LE rows, u64-LE cols, f32-LE row-major."""
    M = np.asarray(matrix, dtype=np.float32)
    if M.ndim != 2:
        raise EmbeddingError(f"can only save 2-D matrices, got shape {M.shape}")
    with open(path, "wb") as fh:
        fh.write(_GEMB_MAGIC)
        fh.write(struct.pack("<QQ", M.shape[0], M.shape[1]))
        fh.write(np.ascontiguousarray(M).tobytes())


def _load_embeddings_binary(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _GEMB_MAGIC:
            raise EmbeddingError(f"{path}: bad magic bytes {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise EmbeddingError(f"{path}: truncated header")
        rows, cols = struct.unpack("<QQ", header)
        payload = fh.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise EmbeddingError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)


def _load_embeddings_csv(path: str) -> np.ndarray:
    rows = []
    width = None
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except UnicodeDecodeError:
        raise EmbeddingError(f"{path}: neither the binary format nor UTF-8 CSV")
    for ln, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            vals = [float(x) for x in line.split(",")]
        except ValueError:
            raise EmbeddingError(f"{path}:{ln}: unparseable CSV row")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise EmbeddingError(f"{path}:{ln}: row has {len(vals)} values, expected {width}")
        rows.append(vals)
    if not rows:
        raise EmbeddingError(f"{path}: no embedding rows")
    return np.asarray(rows, dtype=np.float64)


def load_embeddings(path: str, expected_rows: int) -> EmbeddingMatrix:
    """Load a dense matrix from the binary format (by magic) or CSV fallback."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _GEMB_MAGIC:
        M = _load_embeddings_binary(path)
    else:
        M = _load_embeddings_csv(path)
    if M.shape[0] != expected_rows:
        raise EmbeddingError(f"{path}: has {M.shape[0]} rows, expected {expected_rows}")
    if not np.all(np.isfinite(M)):
        raise EmbeddingError(f"{path}: contains non-finite values")
    return EmbeddingMatrix(M, "precomputed-file")


def load_word_embeddings(path: str, vocab: Vocabulary, seed: int = 0) -> WordEmbeddingInit:
    """Read a "token v1 ... vL" text file aligned to the vocabulary.

    Out-of-file words are filled uniformly from [-0.05, 0.05] per coordinate
    using the run seed, so initialization is deterministic.
    """
    found: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            tok, vals = parts[0], parts[1:]
            if not vals:
                raise EmbeddingError(f"{path}:{ln}: no embedding values for {tok!r}")
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise EmbeddingError(
                    f"{path}:{ln}: dimension {len(vals)} differs from earlier {dim}"
                )
            if tok in vocab.index and tok not in found:
                found[tok] = np.asarray([float(x) for x in vals], dtype=np.float64)
    if dim is None:
        raise EmbeddingError(f"{path}: no embedding lines")
    V = len(vocab)
    rng = substream(seed, "init.word-embeddings")
    vectors = rng.uniform(-0.05, 0.05, size=(V, dim))
    for tok, vec in found.items():
        vectors[vocab.index[tok]] = vec
    return WordEmbeddingInit(vectors, coverage=len(found) / V)
