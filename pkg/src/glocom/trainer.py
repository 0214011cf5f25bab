"""Training loop, configuration, ablations, and grid search.

The loop batches over documents, gathers the distinct global documents a
batch touches, refreshes the word-topic transport plan every step at a
fixed regularization strength, and Adam-updates all parameters. Runs are
bit-reproducible given the seed: all noise comes from one named
substream consumed in a deterministic order.
"""

import itertools
import math
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .aggregation import GlobalCorpus, build_global_corpus
from .corpus import BowCorpus
from .ecr import TransportProblem, default_nu, sinkhorn, squared_distances
from .errors import ConfigError, TrainingError
from .eval import assign_documents, nmi
from .model import GlocomModel, infer, save_checkpoint
from .numerics import Adam
from .rng import substream

ABLATIONS = ("full", "no_clustering", "no_augmentation")
EMBEDDING_SOURCES = ("precomputed", "tfidf")
KL_ATTRIBUTIONS = ("divide", "literal")
TRAJECTORY_COLUMNS = ("total", "recon", "kl_global", "kl_local", "ecr")
_COMPONENT_KEYS = ("loss", "recon", "kl_global", "kl_local", "ecr")


@dataclass
class TrainConfig:
    K: int = 50
    G: int = 20
    tau: float = 0.2
    eta: float = 0.1
    epsilon: float = 0.01
    lambda_ecr: float = 20.0
    epochs: int = 200
    batch_size: int = 200
    lr: float = 0.002
    hidden_width: int = 200
    embed_dim: int = 200
    seed: int = 0
    ablation: str = "full"
    embedding_source: str = "tfidf"
    kl_attribution: str = "divide"
    kl_warmup_epochs: int = 0
    ecr_nu: float = 0.0  # 0 means auto: half the mean initial transport cost
    ecr_max_iters: int = 50
    ecr_tol: float = 1e-6

    def __post_init__(self):
        if self.K < 1 or self.G < 1:
            raise ConfigError(f"K and G must be positive (K={self.K}, G={self.G})")
        if self.tau <= 0 or self.epsilon <= 0:
            raise ConfigError(
                f"tau and epsilon must be positive (tau={self.tau}, "
                f"epsilon={self.epsilon})"
            )
        if self.eta < 0 or self.lambda_ecr < 0:
            raise ConfigError(
                f"eta and lambda_ecr must be non-negative (eta={self.eta}, "
                f"lambda_ecr={self.lambda_ecr})"
            )
        if self.epochs < 0 or self.kl_warmup_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch_size < 1 or self.hidden_width < 1 or self.embed_dim < 1:
            raise ConfigError("batch_size, hidden_width, embed_dim must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; use {ABLATIONS}")
        if self.embedding_source not in EMBEDDING_SOURCES:
            raise ConfigError(
                f"unknown embedding_source {self.embedding_source!r}; "
                f"use {EMBEDDING_SOURCES}"
            )
        if self.kl_attribution not in KL_ATTRIBUTIONS:
            raise ConfigError(
                f"unknown kl_attribution {self.kl_attribution!r}; "
                f"use {KL_ATTRIBUTIONS}"
            )
        if self.ecr_nu < 0 or self.ecr_tol <= 0 or self.ecr_max_iters < 1:
            raise ConfigError("bad transport settings")


# Config files use dots where a field groups under a component, e.g.
# `ecr.nu` for the ecr_nu field; everything else is the field name as-is.
def _file_key(field_name: str) -> str:
    if field_name.startswith("ecr_"):
        return "ecr." + field_name[len("ecr_"):]
    return field_name


_FIELD_BY_KEY = {_file_key(f.name): f for f in fields(TrainConfig)}


def parse_config_text(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    """Flat key=value lines; '#' starts a comment; later duplicate keys
    are an error so silent overrides cannot hide in a file."""
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELD_BY_KEY:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        fname = _FIELD_BY_KEY[key].name
        if fname in overrides:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        ftype = _FIELD_BY_KEY[key].type
        try:
            if ftype in (int, "int"):
                overrides[fname] = int(value)
            elif ftype in (float, "float"):
                overrides[fname] = float(value)
            else:
                overrides[fname] = value
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: cannot parse {value!r} for key {key!r}"
            ) from exc
    return replace(base if base is not None else TrainConfig(), **overrides)


def parse_config_file(path: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, base)


def config_to_text(config: TrainConfig) -> str:
    lines = [f"{_file_key(f.name)}={getattr(config, f.name)}"
             for f in fields(TrainConfig)]
    return "\n".join(lines) + "\n"


def apply_ablation(config: TrainConfig, num_docs: int) -> TrainConfig:
    """Resolve the ablation switches into concrete hyperparameters:
    no_augmentation zeroes eta, no_clustering makes every document its
    own cluster (G = D)."""
    if config.ablation == "no_augmentation":
        return replace(config, eta=0.0)
    if config.ablation == "no_clustering":
        return replace(config, G=num_docs)
    return config


@dataclass
class TrainSetup:
    corpus: BowCorpus
    assignment: np.ndarray  # (D,) cluster id per document
    global_corpus: GlobalCorpus
    config: TrainConfig  # with ablation switches already resolved


def build_setup(
    corpus: BowCorpus,
    config: TrainConfig,
    assignment: Optional[np.ndarray] = None,
) -> TrainSetup:
    """Resolve ablations and build the global/augmented corpus.

    For no_clustering the supplied assignment is ignored; the identity
    assignment is used and the resulting global documents are verified to
    equal the documents themselves.
    """
    D = corpus.num_docs
    cfg = apply_ablation(config, D)
    if cfg.ablation == "no_clustering":
        assignment = np.arange(D, dtype=np.int64)
    elif assignment is None:
        raise TrainingError("a cluster assignment is required outside no_clustering")
    else:
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.shape != (D,):
            raise TrainingError(
                f"assignment covers {assignment.shape[0]} docs, corpus has {D}"
            )
        if assignment.min() < 0 or assignment.max() >= cfg.G:
            raise TrainingError(
                f"assignment ids outside [0, {cfg.G}) for G={cfg.G}"
            )
    gc = build_global_corpus(corpus, assignment, cfg.eta, G=cfg.G)
    if cfg.ablation == "no_clustering" and not np.array_equal(
        gc.global_docs, corpus.dense()
    ):
        raise TrainingError("no_clustering setup: global docs differ from docs")
    return TrainSetup(corpus, assignment, gc, cfg)


@dataclass
class TrainReport:
    trajectory: np.ndarray  # (epochs, 5) epoch means: TRAJECTORY_COLUMNS
    wall_time: float
    checkpoint_path: Optional[str]
    nu: float = 0.0  # transport strength actually used (0 when lambda_ecr=0)

    def __post_init__(self):
        self.trajectory = np.asarray(self.trajectory, dtype=np.float64)
        if self.trajectory.ndim != 2 or self.trajectory.shape[1] != len(
            TRAJECTORY_COLUMNS
        ):
            raise TrainingError(
                f"trajectory must have {len(TRAJECTORY_COLUMNS)} columns"
            )
        if self.trajectory.size and not np.all(np.isfinite(self.trajectory)):
            raise TrainingError("non-finite values in the loss trajectory")

    @property
    def final_tm_loss(self) -> float:
        if self.trajectory.shape[0] == 0:
            raise TrainingError("no epochs were run")
        total, ecr = self.trajectory[-1, 0], self.trajectory[-1, 4]
        return float(total - ecr)


def write_trajectory(report: TrainReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch," + ",".join(TRAJECTORY_COLUMNS) + "\n")
        for e, row in enumerate(report.trajectory):
            fh.write(f"{e}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def _kl_scale(epoch: int, warmup_epochs: int) -> float:
    if warmup_epochs <= 0:
        return 1.0
    return min(1.0, (epoch + 1) / warmup_epochs)


def train(
    corpus: BowCorpus,
    assignment: np.ndarray,
    global_corpus: GlobalCorpus,
    config: TrainConfig,
    word_init: Optional[np.ndarray] = None,
    topic_init: Optional[np.ndarray] = None,
    checkpoint_dir: Optional[str] = None,
) -> tuple[GlocomModel, TrainReport]:
    """Run the full optimization and return the model plus its report.

    The transport plan is re-solved from the current embeddings at every
    step, holding the regularization strength nu fixed at its value from
    the initial embeddings (or the configured override). Training aborts
    on the first non-finite loss with a component breakdown in the error.
    """
    t0 = time.perf_counter()
    assignment = np.asarray(assignment, dtype=np.int64)
    D = corpus.num_docs
    if D == 0:
        raise TrainingError("corpus has no documents")
    if assignment.shape != (D,):
        raise TrainingError(
            f"assignment covers {assignment.shape[0]} docs, corpus has {D}"
        )
    if abs(global_corpus.eta - config.eta) > 1e-12:
        raise TrainingError(
            f"global corpus built with eta={global_corpus.eta}, "
            f"config says eta={config.eta}"
        )

    rng = substream(config.seed, "training")
    model = GlocomModel(
        corpus.num_words,
        config.K,
        embed_dim=config.embed_dim,
        hidden=config.hidden_width,
        tau=config.tau,
        epsilon=config.epsilon,
        seed=config.seed,
        word_init=word_init,
        topic_init=topic_init,
    )
    adam = Adam(model.params(), lr=config.lr)

    x = corpus.dense()
    x_aug = global_corpus.augmented_docs
    gdocs = global_corpus.global_docs
    if gdocs.shape[0] < int(assignment.max()) + 1:
        raise TrainingError("assignment refers to clusters beyond the global docs")

    use_ecr = config.lambda_ecr != 0.0
    nu = 0.0
    if use_ecr:
        cost0 = squared_distances(model.space.W.value, model.space.T.value)
        nu = config.ecr_nu if config.ecr_nu > 0 else default_nu(cost0)

    trajectory = np.zeros((config.epochs, len(TRAJECTORY_COLUMNS)))
    for epoch in range(config.epochs):
        perm = rng.permutation(D)
        scale = _kl_scale(epoch, config.kl_warmup_epochs)
        sums = np.zeros(len(TRAJECTORY_COLUMNS))
        n_batches = 0
        for start in range(0, D, config.batch_size):
            idx = perm[start : start + config.batch_size]
            cids = assignment[idx]
            n_clusters = np.unique(cids).shape[0]
            noise_g = rng.standard_normal((n_clusters, config.K))
            noise_d = rng.standard_normal((idx.shape[0], config.K))

            psi = None
            if use_ecr:
                cost = squared_distances(model.space.W.value, model.space.T.value)
                plan = sinkhorn(
                    TransportProblem(
                        cost, nu, max_iters=config.ecr_max_iters, tol=config.ecr_tol
                    )
                )
                psi = plan.psi

            model.zero_grad()
            loss, comps, _ = model.forward_backward(
                x[idx],
                x_aug[idx],
                cids,
                gdocs,
                noise_g,
                noise_d,
                lambda_ecr=config.lambda_ecr,
                psi=psi,
                kl_mode=config.kl_attribution,
                kl_scale=scale,
            )
            if not all(math.isfinite(v) for v in comps.values()):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} batch {n_batches}: "
                    + ", ".join(f"{k}={v:.6g}" for k, v in comps.items())
                )
            adam.step()
            sums += [comps[c] for c in _COMPONENT_KEYS]
            n_batches += 1
        trajectory[epoch] = sums / n_batches

    checkpoint_path = None
    if checkpoint_dir is not None:
        save_checkpoint(model, checkpoint_dir)
        checkpoint_path = checkpoint_dir
    report = TrainReport(
        trajectory, time.perf_counter() - t0, checkpoint_path, nu=nu
    )
    return model, report


def train_from_setup(
    setup: TrainSetup,
    word_init: Optional[np.ndarray] = None,
    topic_init: Optional[np.ndarray] = None,
    checkpoint_dir: Optional[str] = None,
) -> tuple[GlocomModel, TrainReport]:
    return train(
        setup.corpus,
        setup.assignment,
        setup.global_corpus,
        setup.config,
        word_init=word_init,
        topic_init=topic_init,
        checkpoint_dir=checkpoint_dir,
    )


@dataclass
class GridEntry:
    params: dict
    config: TrainConfig
    objective: float
    report: TrainReport


@dataclass
class GridResult:
    objective_name: str  # "nmi" or "neg_tm_loss"
    entries: list  # ranked, best first

    @property
    def best(self) -> GridEntry:
        return self.entries[0]


def grid_search(
    corpus: BowCorpus,
    base_config: TrainConfig,
    grids: dict,
    assignment: Optional[np.ndarray] = None,
    word_init: Optional[np.ndarray] = None,
) -> GridResult:
    """Train every combination and rank by the validation objective.

    Objective: NMI of the argmax document clustering against the corpus
    labels when labels exist, else the negated final epoch-mean TM loss
    (so larger is always better). Combinations are enumerated with grid
    keys in sorted order and values in the order supplied; ties keep the
    earliest combination, so the winner is lexicographic in that order.
    """
    if not grids:
        raise ConfigError("empty grid")
    keys = sorted(grids)
    valid = {f.name for f in fields(TrainConfig)}
    for k in keys:
        if k not in valid:
            raise ConfigError(f"grid key {k!r} is not a TrainConfig field")
        if not grids[k]:
            raise ConfigError(f"grid for {k!r} is empty")
    has_labels = corpus.labels is not None
    if not has_labels and base_config.epochs < 1:
        raise ConfigError("label-free grid search needs epochs >= 1")

    entries = []
    for values in itertools.product(*(grids[k] for k in keys)):
        params = dict(zip(keys, values))
        cfg = replace(base_config, **params)
        setup = build_setup(corpus, cfg, assignment)
        model, report = train_from_setup(setup, word_init=word_init)
        if has_labels:
            out = infer(
                model,
                setup.corpus.dense(),
                setup.assignment,
                setup.global_corpus.global_docs,
                setup.corpus.vocab.words,
            )
            objective = nmi(assign_documents(out.theta_local), corpus.labels)
        else:
            objective = -report.final_tm_loss
        entries.append(GridEntry(params, setup.config, float(objective), report))

    ranked = sorted(
        range(len(entries)), key=lambda i: (-entries[i].objective, i)
    )
    name = "nmi" if has_labels else "neg_tm_loss"
    return GridResult(name, [entries[i] for i in ranked])
