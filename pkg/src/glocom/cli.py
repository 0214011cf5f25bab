"""Command line interface: preprocess, cluster, train, infer, eval, synth,
pipeline, and grid subcommands sharing one config and one seed.

Every subcommand writes a manifest (command line, resolved config, input
digests, seed, version, timestamp) into its output directory before any
other output, so a run can be reproduced from the artifacts alone.

Exit codes:
  0  success
  1  unexpected internal error
  2  missing or unreadable input file
  3  configuration error
  4  corpus or embedding error
  5  clustering error
  6  training or transport error
  7  evaluation error

The environment variable GLOCOM_THREADS caps BLAS parallelism; it is
applied before numpy is first imported, so it only takes full effect for
fresh `glocom` processes.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import fields, replace

from .errors import (
    ClusteringError,
    ConfigError,
    CorpusError,
    EmbeddingError,
    GlocomError,
    TrainingError,
    TransportError,
)

_BLAS_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


class _MissingInput(Exception):
    pass


def _cap_threads() -> None:
    raw = os.environ.get("GLOCOM_THREADS")
    if raw is None or raw == "":
        return
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"GLOCOM_THREADS must be a positive integer, got {raw!r}")
    for var in _BLAS_VARS:
        os.environ[var] = str(n)


def _require(path, what: str) -> str:
    if path is None:
        raise _MissingInput(f"{what} is required")
    if not os.path.exists(path):
        raise _MissingInput(f"{what} file missing: {path}")
    return path


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, args, inputs, seed, config=None, name="manifest.json"):
    """Record enough to re-run the command; written before any output."""
    from . import __version__

    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": ["glocom"] + list(args._argv),
        "config": config,
        "inputs": {p: _sha256(p) for p in inputs if p},
        "seed": seed,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _config_dict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


# -------------------------------------------------------- config via flags


def _add_config_flags(parser) -> None:
    """One override flag per TrainConfig field, named like the config file
    keys (dotted for the transport block)."""
    from .trainer import (
        ABLATIONS,
        EMBEDDING_SOURCES,
        KL_ATTRIBUTIONS,
        TrainConfig,
        _file_key,
    )

    choices = {
        "ablation": ABLATIONS,
        "embedding_source": EMBEDDING_SOURCES,
        "kl_attribution": KL_ATTRIBUTIONS,
    }
    for f in fields(TrainConfig):
        kind = f.type if isinstance(f.type, type) else {"int": int, "float": float}.get(f.type, str)
        parser.add_argument(
            "--" + _file_key(f.name),
            dest="cfg_" + f.name,
            type=kind,
            default=None,
            choices=choices.get(f.name),
            help=f"override config key {_file_key(f.name)}",
        )


def _resolve_config(args):
    from .trainer import TrainConfig, parse_config_file

    base = TrainConfig()
    if getattr(args, "config", None):
        _require(args.config, "config")
        base = parse_config_file(args.config)
    overrides = {}
    for f in fields(TrainConfig):
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            overrides[f.name] = v
    return replace(base, **overrides) if overrides else base


def _add_synth_flags(parser) -> None:
    parser.add_argument("--num-words", type=int, default=100)
    parser.add_argument("--num-topics", type=int, default=5)
    parser.add_argument("--num-clusters", type=int, default=5)
    parser.add_argument("--num-docs", type=int, default=1000)
    parser.add_argument("--len-min", type=int, default=4)
    parser.add_argument("--len-max", type=int, default=12)
    parser.add_argument("--epsilon-true", type=float, default=0.01)
    parser.add_argument("--block-mass", type=float, default=0.9)


def _synth_spec(args, seed):
    from .synthetic import SyntheticSpec

    return SyntheticSpec(
        V=args.num_words,
        K=args.num_topics,
        G=args.num_clusters,
        D=args.num_docs,
        len_min=args.len_min,
        len_max=args.len_max,
        epsilon_true=args.epsilon_true,
        block_mass=args.block_mass,
        seed=seed,
    )


# ------------------------------------------------------------- subcommands


def cmd_preprocess(args) -> int:
    from .corpus import (
        preprocess,
        read_corpus_file,
        read_label_file,
        write_bow,
        write_kept_indices,
        write_vocabulary,
    )

    _require(args.corpus, "corpus")
    if args.labels:
        _require(args.labels, "labels")
    _write_manifest(args.out, args, [args.corpus, args.labels], seed=None)

    raw = read_corpus_file(args.corpus)
    labels = read_label_file(args.labels) if args.labels else None
    if labels is not None and len(labels) != len(raw):
        raise CorpusError(
            f"{len(labels)} labels for {len(raw)} documents in {args.corpus}"
        )
    bow, kept = preprocess(raw, args.min_freq, args.min_terms, labels)
    write_vocabulary(bow.vocab, os.path.join(args.out, "vocab.txt"))
    write_bow(bow, os.path.join(args.out, "bow.txt"))
    write_kept_indices(kept, os.path.join(args.out, "kept.txt"))
    if bow.labels is not None:
        _write_labels(bow.labels, os.path.join(args.out, "labels.txt"))
    print(
        f"preprocess: kept {bow.num_docs}/{len(raw)} documents, "
        f"{bow.num_words} words"
    )
    return 0


def _write_labels(labels, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


def _read_corpus(bow_path, vocab_path, labels_path=None):
    from .corpus import read_bow, read_label_file, read_vocabulary

    _require(bow_path, "corpus")
    _require(vocab_path, "vocabulary")
    vocab = read_vocabulary(vocab_path)
    labels = None
    if labels_path:
        _require(labels_path, "labels")
        labels = read_label_file(labels_path)
    return read_bow(bow_path, vocab, labels)


def _doc_embeddings(corpus, source, path):
    from .corpus import load_embeddings, tfidf

    if source == "precomputed":
        _require(path, "document embeddings")
        return load_embeddings(path, expected_rows=corpus.num_docs)
    return tfidf(corpus)


def cmd_cluster(args) -> int:
    from .aggregation import kmeans, write_assignment

    corpus = _read_corpus(args.bow, args.vocab)
    if args.embeddings:
        _require(args.embeddings, "document embeddings")
    _write_manifest(
        args.out, args, [args.bow, args.vocab, args.embeddings], seed=args.seed
    )
    source = "precomputed" if args.embeddings else "tfidf"
    emb = _doc_embeddings(corpus, source, args.embeddings)
    assignment = kmeans(emb, args.num_clusters, seed=args.seed,
                        normalize=args.normalize)
    write_assignment(assignment, os.path.join(args.out, "assignment.txt"))
    sizes = assignment.counts()
    print(
        f"cluster: G={args.num_clusters} inertia={assignment.inertia:.6g} "
        f"sizes min={sizes.min()} max={sizes.max()}"
    )
    return 0


def _load_assignment_for(cfg, args, corpus):
    from .aggregation import read_assignment

    if cfg.ablation == "no_clustering":
        return None
    path = getattr(args, "clusters", None)
    _require(path, "cluster assignment")
    assignment = read_assignment(path, G=cfg.G)
    if assignment.shape[0] != corpus.num_docs:
        raise ClusteringError(
            f"assignment covers {assignment.shape[0]} documents, "
            f"corpus has {corpus.num_docs}"
        )
    return assignment


def _word_init_for(cfg, args, vocab):
    """Optional pretrained word vectors for the topic space; random init
    otherwise. Independent of embedding_source, which picks the document
    embeddings used for clustering."""
    from .corpus import load_word_embeddings

    path = getattr(args, "word_embeddings", None)
    if path is None:
        return None
    _require(path, "word embeddings")
    init = load_word_embeddings(path, vocab, seed=cfg.seed)
    print(f"word embeddings: coverage {init.coverage:.1%}")
    return init.vectors


def cmd_train(args) -> int:
    from .trainer import build_setup, config_to_text, train_from_setup, write_trajectory

    cfg = _resolve_config(args)
    corpus = _read_corpus(args.bow, args.vocab)
    assignment = _load_assignment_for(cfg, args, corpus)
    word_init = _word_init_for(cfg, args, corpus.vocab)
    _write_manifest(
        args.out,
        args,
        [args.bow, args.vocab, getattr(args, "clusters", None),
         getattr(args, "config", None), getattr(args, "word_embeddings", None)],
        seed=cfg.seed,
        config=_config_dict(cfg),
    )
    setup = build_setup(corpus, cfg, assignment)
    with open(os.path.join(args.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_to_text(setup.config))
    ckpt = os.path.join(args.out, "checkpoint")
    model, report = train_from_setup(setup, word_init=word_init, checkpoint_dir=ckpt)
    write_trajectory(report, os.path.join(args.out, "trajectory.csv"))
    final = report.trajectory[-1, 0] if report.trajectory.size else float("nan")
    print(
        f"train: {setup.config.epochs} epochs in {report.wall_time:.1f}s, "
        f"final loss {final:.6g}, checkpoint at {ckpt}"
    )
    return 0


def _run_inference(model, corpus, assignment, top_n):
    from .aggregation import build_global_docs
    from .model import infer

    global_docs = build_global_docs(corpus, assignment)
    return infer(
        model, corpus.dense(), assignment, global_docs, corpus.vocab.words,
        top_n=top_n,
    )


def _write_inference(output, out_dir):
    from .model import write_matrix_csv, write_topics

    write_topics(output, os.path.join(out_dir, "topics.txt"))
    write_matrix_csv(output.theta_local, os.path.join(out_dir, "theta_local.csv"))
    write_matrix_csv(output.theta_global, os.path.join(out_dir, "theta_global.csv"))
    write_matrix_csv(output.beta, os.path.join(out_dir, "beta.csv"))


def cmd_infer(args) -> int:
    from .aggregation import read_assignment
    from .model import load_checkpoint

    _require(args.checkpoint, "checkpoint")
    _require(os.path.join(args.checkpoint, "manifest.txt"), "checkpoint manifest")
    corpus = _read_corpus(args.bow, args.vocab)
    _require(args.clusters, "cluster assignment")
    assignment = read_assignment(args.clusters)
    _write_manifest(
        args.out, args,
        [args.bow, args.vocab, args.clusters,
         os.path.join(args.checkpoint, "manifest.txt")],
        seed=None,
    )
    model = load_checkpoint(args.checkpoint)
    output = _run_inference(model, corpus, assignment, args.top_n)
    _write_inference(output, args.out)
    print(f"infer: {output.beta.shape[1]} topics over {corpus.num_docs} documents")
    return 0


def _evaluate(topics, theta, reference, labels):
    from .eval import (
        assign_documents,
        nmi,
        npmi_coherence,
        purity,
        topic_diversity,
    )

    td = topic_diversity(topics)
    overall, per_topic = npmi_coherence(topics, reference)
    pur = nm = None
    if labels is not None:
        predicted = assign_documents(theta)
        pur, nm = purity(predicted, labels), nmi(predicted, labels)
    return td, overall, per_topic, pur, nm


def cmd_eval(args) -> int:
    import numpy as np

    from .corpus import read_label_file
    from .eval import read_topics, write_metrics

    _require(args.topics, "topics")
    _require(args.theta, "theta")
    reference = _read_corpus(args.reference, args.vocab)
    labels = None
    if args.labels:
        _require(args.labels, "labels")
        labels = read_label_file(args.labels)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    _write_manifest(
        out_dir, args,
        [args.topics, args.theta, args.reference, args.vocab, args.labels],
        seed=None, name="eval-manifest.json",
    )
    topics = read_topics(args.topics)
    theta = np.loadtxt(args.theta, delimiter=",", ndmin=2)
    if labels is not None and theta.shape[0] != labels.shape[0]:
        raise GlocomError(
            f"theta has {theta.shape[0]} rows, labels file has {labels.shape[0]}"
        )
    td, overall, per_topic, pur, nm = _evaluate(topics, theta, reference, labels)
    write_metrics(args.out, td=td, npmi=overall, npmi_per_topic=per_topic,
                  purity=pur, nmi=nm)
    line = f"eval: td={td:.4f} npmi={overall:.4f}"
    if pur is not None:
        line += f" purity={pur:.4f} nmi={nm:.4f}"
    print(line)
    return 0


def _write_synth(corpus, truth, out_dir):
    from .corpus import write_bow, write_vocabulary
    from .model import write_matrix_csv

    write_vocabulary(corpus.vocab, os.path.join(out_dir, "vocab.txt"))
    write_bow(corpus, os.path.join(out_dir, "bow.txt"))
    _write_labels(corpus.labels, os.path.join(out_dir, "labels.txt"))
    write_matrix_csv(truth.beta, os.path.join(out_dir, "truth_beta.csv"))
    write_matrix_csv(truth.theta_g, os.path.join(out_dir, "truth_theta_g.csv"))
    write_matrix_csv(truth.theta_gd, os.path.join(out_dir, "truth_theta_gd.csv"))


def cmd_synth(args) -> int:
    from .synthetic import generate

    spec = _synth_spec(args, args.seed)
    _write_manifest(args.out, args, [], seed=args.seed)
    corpus, truth = generate(spec)
    _write_synth(corpus, truth, args.out)
    print(
        f"synth: {corpus.num_docs} documents, {corpus.num_words} words, "
        f"{spec.K} topics, {spec.G} clusters"
    )
    return 0


def _stage(name, fn):
    """Run one pipeline stage; failures keep their type but name the stage."""
    try:
        return fn()
    except GlocomError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def cmd_pipeline(args) -> int:
    from .aggregation import kmeans, write_assignment
    from .corpus import (
        preprocess,
        read_corpus_file,
        read_label_file,
        write_bow,
        write_kept_indices,
        write_vocabulary,
    )
    from .eval import write_metrics
    from .model import load_checkpoint
    from .synthetic import generate
    from .trainer import build_setup, config_to_text, train_from_setup, write_trajectory

    cfg = _resolve_config(args)
    if not args.synth:
        _require(args.corpus, "corpus")
        if args.labels:
            _require(args.labels, "labels")
    _write_manifest(
        args.out, args,
        [args.corpus, args.labels, getattr(args, "config", None),
         getattr(args, "word_embeddings", None), args.embeddings],
        seed=cfg.seed, config=_config_dict(cfg),
    )

    corpus_dir = os.path.join(args.out, "corpus")
    os.makedirs(corpus_dir, exist_ok=True)

    def make_corpus():
        if args.synth:
            corpus, truth = generate(_synth_spec(args, cfg.seed))
            _write_synth(corpus, truth, corpus_dir)
            return corpus
        raw = read_corpus_file(args.corpus)
        labels = read_label_file(args.labels) if args.labels else None
        if labels is not None and len(labels) != len(raw):
            raise CorpusError(f"{len(labels)} labels for {len(raw)} documents")
        bow, kept = preprocess(raw, args.min_freq, args.min_terms, labels)
        write_vocabulary(bow.vocab, os.path.join(corpus_dir, "vocab.txt"))
        write_bow(bow, os.path.join(corpus_dir, "bow.txt"))
        write_kept_indices(kept, os.path.join(corpus_dir, "kept.txt"))
        if bow.labels is not None:
            _write_labels(bow.labels, os.path.join(corpus_dir, "labels.txt"))
        return bow

    corpus = _stage("corpus", make_corpus)

    assignment = None
    if cfg.ablation != "no_clustering":

        def make_clusters():
            source = "precomputed" if args.embeddings else cfg.embedding_source
            emb = _doc_embeddings(corpus, source, args.embeddings)
            result = kmeans(emb, cfg.G, seed=cfg.seed)
            cdir = os.path.join(args.out, "cluster")
            os.makedirs(cdir, exist_ok=True)
            write_assignment(result, os.path.join(cdir, "assignment.txt"))
            return result.assignment

        assignment = _stage("cluster", make_clusters)

    word_init = _stage("embeddings", lambda: _word_init_for(cfg, args, corpus.vocab))

    train_dir = os.path.join(args.out, "train")
    ckpt = os.path.join(train_dir, "checkpoint")

    def run_train():
        os.makedirs(train_dir, exist_ok=True)
        setup = build_setup(corpus, cfg, assignment)
        with open(os.path.join(train_dir, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(config_to_text(setup.config))
        model, report = train_from_setup(setup, word_init=word_init,
                                         checkpoint_dir=ckpt)
        write_trajectory(report, os.path.join(train_dir, "trajectory.csv"))
        return setup, model, report

    setup, model, report = _stage("train", run_train)

    infer_dir = os.path.join(args.out, "infer")

    def run_infer():
        os.makedirs(infer_dir, exist_ok=True)
        reloaded = load_checkpoint(ckpt)
        output = _run_inference(reloaded, corpus, setup.assignment, args.top_n)
        _write_inference(output, infer_dir)
        return output

    output = _stage("infer", run_infer)

    def run_eval():
        from .eval import TopicSet

        topics = TopicSet(output.top_words)
        td, overall, per_topic, pur, nm = _evaluate(
            topics, output.theta_local, corpus, corpus.labels
        )
        write_metrics(os.path.join(args.out, "metrics.json"), td=td, npmi=overall,
                      npmi_per_topic=per_topic, purity=pur, nmi=nm)
        return td, overall, pur, nm

    td, overall, pur, nm = _stage("eval", run_eval)

    line = f"pipeline: done, td={td:.4f} npmi={overall:.4f}"
    if pur is not None:
        line += f" purity={pur:.4f} nmi={nm:.4f}"
    print(line)
    return 0


def _parse_grid(specs) -> dict:
    from .trainer import _FIELD_BY_KEY

    grids = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"grid spec must be key=v1,v2,... got {spec!r}")
        key, _, vals = spec.partition("=")
        key = key.strip()
        if key not in _FIELD_BY_KEY:
            raise ConfigError(f"unknown grid key {key!r}")
        f = _FIELD_BY_KEY[key]
        kind = f.type if isinstance(f.type, type) else {"int": int, "float": float}.get(f.type, str)
        try:
            values = [kind(v.strip()) for v in vals.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"cannot parse grid values for {key!r}: {vals!r}") from exc
        if not values:
            raise ConfigError(f"grid for {key!r} is empty")
        if f.name in grids:
            raise ConfigError(f"grid key {key!r} given twice")
        grids[f.name] = values
    return grids


def cmd_grid(args) -> int:
    from .trainer import config_to_text, grid_search

    cfg = _resolve_config(args)
    corpus = _read_corpus(args.bow, args.vocab, getattr(args, "labels", None))
    assignment = _load_assignment_for(cfg, args, corpus)
    word_init = _word_init_for(cfg, args, corpus.vocab)
    grids = _parse_grid(args.grid)
    _write_manifest(
        args.out, args,
        [args.bow, args.vocab, getattr(args, "clusters", None),
         getattr(args, "config", None), getattr(args, "labels", None)],
        seed=cfg.seed, config=_config_dict(cfg),
    )
    result = grid_search(corpus, cfg, grids, assignment=assignment,
                         word_init=word_init)
    keys = sorted(grids)
    with open(os.path.join(args.out, "grid_report.csv"), "w", encoding="utf-8") as fh:
        fh.write("rank," + ",".join(keys) + f",{result.objective_name}\n")
        for rank, entry in enumerate(result.entries):
            vals = ",".join(str(entry.params[k]) for k in keys)
            fh.write(f"{rank},{vals},{entry.objective:.17g}\n")
    with open(os.path.join(args.out, "best_config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_to_text(result.best.config))
    best = ", ".join(f"{k}={result.best.params[k]}" for k in keys)
    print(
        f"grid: {len(result.entries)} combinations, best "
        f"{result.objective_name}={result.best.objective:.6g} at {best}"
    )
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glocom",
        description="Clustering-aggregated topic modeling for short texts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter raw text into bow + vocab")
    p.add_argument("--corpus", required=True, help="one document per line")
    p.add_argument("--labels", default=None)
    p.add_argument("--min-freq", type=int, default=3)
    p.add_argument("--min-terms", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("cluster", help="k-means document clustering")
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--embeddings", default=None,
                   help="precomputed document embeddings (default: TF-IDF)")
    p.add_argument("--num-clusters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="fit the topic model")
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--clusters", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--word-embeddings", dest="word_embeddings", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="posterior-mean inference from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--top-n", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="topic and clustering metrics")
    p.add_argument("--topics", required=True)
    p.add_argument("--theta", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--reference", required=True, help="reference bow corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="metrics.json path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="preprocess/synth, cluster, train, infer, eval")
    p.add_argument("--corpus", default=None, help="raw text, one document per line")
    p.add_argument("--labels", default=None)
    p.add_argument("--synth", action="store_true",
                   help="generate a synthetic corpus instead of reading one")
    _add_synth_flags(p)
    p.add_argument("--min-freq", type=int, default=3)
    p.add_argument("--min-terms", type=int, default=2)
    p.add_argument("--embeddings", default=None,
                   help="precomputed document embeddings for clustering")
    p.add_argument("--word-embeddings", dest="word_embeddings", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--top-n", type=int, default=15)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("grid", help="grid search over config values")
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--clusters", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--word-embeddings", dest="word_embeddings", default=None)
    p.add_argument("--grid", action="append", required=True,
                   help="key=v1,v2,... (repeatable)")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_grid)

    return parser


_EXIT_CODES = (
    (_MissingInput, 2),
    (ConfigError, 3),
    ((CorpusError, EmbeddingError), 4),
    (ClusteringError, 5),
    ((TrainingError, TransportError), 6),
    (GlocomError, 7),
)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _cap_threads()
        args = build_parser().parse_args(argv)
        args._argv = argv
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single translation point
        for kinds, code in _EXIT_CODES:
            if isinstance(exc, kinds):
                print(f"glocom: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
