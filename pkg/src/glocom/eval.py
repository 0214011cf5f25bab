"""Topic and clustering quality metrics.

Covers topic diversity over top-N word lists, purity and NMI of the
argmax document clustering against gold labels, and document-level NPMI
coherence against a reference corpus. Conventions that the literature
leaves open are fixed here and relied on by the tests: NMI normalizes by
the arithmetic mean of the two entropies (natural log, 0/0 -> 0), and
NPMI pairs involving a word absent from the reference, or a pair that
never co-occurs, score the floor value -1.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import BowCorpus
from .errors import GlocomError

NPMI_EPS = 1e-12


@dataclass
class TopicSet:
    """Ranked top-N word lists, one list per topic, uniform N."""

    topics: list[list[str]]

    def __post_init__(self):
        if not self.topics:
            raise GlocomError("TopicSet needs at least one topic")
        n = len(self.topics[0])
        for k, words in enumerate(self.topics):
            if len(words) != n:
                raise GlocomError(
                    f"topic {k} has {len(words)} words, topic 0 has {n}"
                )
            if len(set(words)) != len(words):
                raise GlocomError(f"topic {k} repeats a word")
        if n == 0:
            raise GlocomError("topics are empty word lists")

    @property
    def num_topics(self) -> int:
        return len(self.topics)

    @property
    def top_n(self) -> int:
        return len(self.topics[0])


def read_topics(path: str) -> TopicSet:
    """Parse 'k w1 w2 ...' lines as written by write_topics."""
    topics = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            try:
                k = int(parts[0])
            except ValueError as exc:
                raise GlocomError(f"bad topic line in {path}: {line!r}") from exc
            if k in topics:
                raise GlocomError(f"topic {k} listed twice in {path}")
            topics[k] = parts[1:]
    if not topics:
        raise GlocomError(f"no topics found in {path}")
    if sorted(topics) != list(range(len(topics))):
        raise GlocomError(f"topic ids in {path} are not 0..K-1")
    return TopicSet([topics[k] for k in range(len(topics))])


def topic_diversity(topics: TopicSet) -> float:
    """Distinct words across all lists over total list slots."""
    all_words = [w for t in topics.topics for w in t]
    return len(set(all_words)) / len(all_words)


def _as_labels(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise GlocomError(f"{name} must be a non-empty 1-d label array")
    return arr


def _contingency(predicted, gold) -> np.ndarray:
    p = _as_labels(predicted, "predicted")
    g = _as_labels(gold, "gold")
    if p.shape[0] != g.shape[0]:
        raise GlocomError(
            f"{p.shape[0]} predicted labels vs {g.shape[0]} gold labels"
        )
    _, pi = np.unique(p, return_inverse=True)
    _, gi = np.unique(g, return_inverse=True)
    table = np.zeros((pi.max() + 1, gi.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, gi), 1)
    return table


def purity(predicted, gold) -> float:
    """Fraction of documents in their cluster's majority gold class."""
    table = _contingency(predicted, gold)
    return float(table.max(axis=1).sum() / table.sum())


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(predicted, gold) -> float:
    """Mutual information over the arithmetic mean of the marginal
    entropies, natural log; 0/0 (both sides constant) -> 0."""
    table = _contingency(predicted, gold).astype(np.float64)
    n = table.sum()
    pr = table.sum(axis=1)
    gc = table.sum(axis=0)
    mi = 0.0
    nz = np.nonzero(table)
    for i, j in zip(*nz):
        nij = table[i, j]
        mi += (nij / n) * np.log(nij * n / (pr[i] * gc[j]))
    denom = 0.5 * (_entropy(pr) + _entropy(gc))
    if denom == 0.0:
        return 0.0
    # mi can dip an ulp below zero on near-independent tables
    return float(max(mi, 0.0) / denom)


def assign_documents(theta: np.ndarray) -> np.ndarray:
    """Argmax topic per document; ties go to the lowest topic index."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[0] == 0:
        raise GlocomError("theta must be a non-empty D x K matrix")
    return np.argmax(theta, axis=1).astype(np.int64)


@dataclass
class ClusteringEval:
    predicted: np.ndarray
    gold: np.ndarray
    purity: float = field(init=False)
    nmi: float = field(init=False)

    def __post_init__(self):
        self.predicted = _as_labels(self.predicted, "predicted")
        self.gold = _as_labels(self.gold, "gold")
        self.purity = purity(self.predicted, self.gold)
        self.nmi = nmi(self.predicted, self.gold)


def evaluate_clustering(theta: np.ndarray, gold) -> ClusteringEval:
    return ClusteringEval(assign_documents(theta), gold)


def _pair_npmi(p_a: float, p_b: float, p_ab: float) -> float:
    if p_ab <= 0.0:
        return -1.0
    if p_ab >= 1.0:
        # both words in every document: 0/0 in the formula, limit is 1
        return 1.0
    num = np.log(p_ab + NPMI_EPS) - np.log(p_a * p_b + NPMI_EPS)
    den = -np.log(p_ab + NPMI_EPS)
    # epsilon can push the ratio an ulp past the analytic [-1, 1] range
    return float(np.clip(num / den, -1.0, 1.0))


def npmi_coherence(
    topics: TopicSet, reference: BowCorpus
) -> tuple[float, np.ndarray]:
    """Mean over topics of mean pairwise NPMI of the top-N words, using
    whole documents of ``reference`` as co-occurrence windows.

    Returns (overall mean, per-topic means). A word missing from the
    reference vocabulary, or never occurring in it, contributes -1 to
    every pair it appears in.
    """
    if reference.num_docs == 0:
        raise GlocomError("reference corpus is empty")
    if topics.top_n < 2:
        raise GlocomError("need at least two words per topic for pair NPMI")
    D = reference.num_docs
    index = reference.vocab.index

    words = sorted({w for t in topics.topics for w in t if w in index})
    cols = [index[w] for w in words]
    local = {w: i for i, w in enumerate(words)}
    if cols:
        present = np.asarray(
            (reference.counts[:, cols] > 0).todense(), dtype=np.float64
        )
        joint = present.T @ present  # document co-occurrence counts
        df = np.diag(joint).copy()
    else:
        joint = np.zeros((0, 0))
        df = np.zeros(0)

    per_topic = np.empty(topics.num_topics)
    for k, topic in enumerate(topics.topics):
        vals = []
        for i in range(len(topic)):
            for j in range(i + 1, len(topic)):
                a, b = topic[i], topic[j]
                ia, ib = local.get(a), local.get(b)
                if ia is None or ib is None or df[ia] == 0 or df[ib] == 0:
                    vals.append(-1.0)
                    continue
                vals.append(
                    _pair_npmi(df[ia] / D, df[ib] / D, joint[ia, ib] / D)
                )
        per_topic[k] = np.mean(vals)
    return float(per_topic.mean()), per_topic


def write_metrics(
    path: str,
    td: float,
    npmi: float,
    npmi_per_topic: np.ndarray,
    purity: float = None,
    nmi: float = None,
) -> None:
    """Flat metrics.json; purity/nmi are null when no gold labels exist."""
    payload = {
        "td": float(td),
        "purity": None if purity is None else float(purity),
        "nmi": None if nmi is None else float(nmi),
        "npmi": float(npmi),
        "npmi_per_topic": [float(v) for v in np.asarray(npmi_per_topic)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
