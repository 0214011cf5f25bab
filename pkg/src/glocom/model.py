"""The topic model: embedding-kernel topic-word matrix, dual encoders,
cluster-level topic distributions modulated per document, and the training
loss with its hand-derived backward pass.

Generative picture per cluster g and member document d:
    alpha^g ~ N(0, I),  theta^g = softmax(alpha^g)
    rho_d   ~ N(1, eps I)                    (adaptive modulation, signed)
    theta^g_d = softmax(theta^g * rho_d)
    x_d ~ Multinomial(softmax(beta @ theta^g_d))
Reconstruction targets are the augmented counts x + eta * x^g.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .ecr import squared_distances
from .errors import TrainingError
from .numerics import (
    Encoder,
    Param,
    gaussian_reparameterize,
    gaussian_reparameterize_backward,
    kl_diag_gaussian,
    kl_diag_gaussian_backward,
    softmax_backward,
    softmax_forward,
)
from .rng import substream


def normalize_rows(X: np.ndarray, what: str = "input") -> np.ndarray:
    """Divide every row by its sum. Zero-sum rows are rejected: a document
    with no mass cannot be encoded."""
    X = np.asarray(X, dtype=np.float64)
    sums = X.sum(axis=-1, keepdims=True)
    if np.any(sums == 0):
        raise TrainingError(f"zero-sum {what} row cannot be normalized")
    return X / sums


class TopicSpace:
    """Word embeddings W (V,L), topic embeddings T (K,L), temperature tau."""

    def __init__(self, W: np.ndarray, T: np.ndarray, tau: float):
        if tau <= 0:
            raise TrainingError(f"tau must be positive, got {tau}")
        W = np.asarray(W, dtype=np.float64)
        T = np.asarray(T, dtype=np.float64)
        if W.ndim != 2 or T.ndim != 2 or W.shape[1] != T.shape[1]:
            raise TrainingError(f"embedding shapes disagree: {W.shape} vs {T.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(T))):
            raise TrainingError("non-finite embedding values")
        self.W = Param("space.W", W)
        self.T = Param("space.T", T)
        self.tau = float(tau)

    @property
    def num_words(self) -> int:
        return self.W.value.shape[0]

    @property
    def num_topics(self) -> int:
        return self.T.value.shape[0]

    def squared_dists(self) -> np.ndarray:
        return squared_distances(self.W.value, self.T.value)

    def params(self) -> list[Param]:
        return [self.W, self.T]


def compute_beta(space: TopicSpace) -> np.ndarray:
    """beta_ij = exp(-|w_i - t_j|^2 / tau), normalized over topics per word.

    Row-wise softmax of -sqd/tau with max subtraction, so no overflow."""
    return softmax_forward(-space.squared_dists() / space.tau)


def compute_beta_backward(space: TopicSpace, beta: np.ndarray, dbeta: np.ndarray,
                          extra_dsqd: Optional[np.ndarray] = None) -> None:
    """Accumulate d(loss)/dW and d(loss)/dT into the space's grads.

    ``extra_dsqd`` adds a gradient that hits the squared-distance matrix
    directly (the transport regularizer shares this cost matrix)."""
    dA = softmax_backward(dbeta, beta)
    dsqd = -dA / space.tau
    if extra_dsqd is not None:
        dsqd = dsqd + extra_dsqd
    W, T = space.W.value, space.T.value
    space.W.grad += 2.0 * (W * dsqd.sum(axis=1)[:, None] - dsqd @ T)
    space.T.grad += 2.0 * (T * dsqd.sum(axis=0)[:, None] - dsqd.T @ W)


def combine(theta_g: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """softmax(theta_g * rho), rows; the document's adapted topic mix."""
    return softmax_forward(theta_g * rho)


def elbo_per_doc(
    x_aug: np.ndarray,
    theta_gd: np.ndarray,
    beta: np.ndarray,
    kl_global_share: float,
    kl_local: float,
) -> float:
    """Per-document loss: -(x_aug)^T log softmax(beta @ theta_gd) + KLs."""
    logits = beta @ theta_gd
    logp = logits - logsumexp(logits)
    return float(-(x_aug @ logp) + kl_global_share + kl_local)


@dataclass
class LatentBatch:
    theta_g: np.ndarray  # (C, K), one row per distinct cluster in the batch
    rho: np.ndarray  # (B, K)
    theta_gd: np.ndarray  # (B, K)
    kl_global: np.ndarray  # (C,)
    kl_local: np.ndarray  # (B,)
    cluster_rows: np.ndarray  # (B,) index into theta_g per document

    def __post_init__(self):
        for name, M in (("theta_g", self.theta_g), ("theta_gd", self.theta_gd)):
            if np.any(M < 0) or np.any(np.abs(M.sum(axis=1) - 1.0) > 1e-9):
                raise TrainingError(f"{name} rows are not on the simplex")
        if np.any(self.kl_global < -1e-12) or np.any(self.kl_local < -1e-12):
            raise TrainingError("negative KL term")


class GlocomModel:
    """Parameters plus the forward/backward of the full training loss."""

    def __init__(
        self,
        num_words: int,
        num_topics: int,
        embed_dim: int = 200,
        hidden: int = 200,
        tau: float = 0.2,
        epsilon: float = 0.01,
        seed: int = 0,
        word_init: Optional[np.ndarray] = None,
        topic_init: Optional[np.ndarray] = None,
    ):
        rng = substream(seed, "init")
        if word_init is not None:
            W = np.asarray(word_init, dtype=np.float64)
            if W.shape[0] != num_words:
                raise TrainingError(
                    f"word_init has {W.shape[0]} rows for {num_words} words"
                )
            embed_dim = W.shape[1]
        else:
            W = rng.uniform(-0.05, 0.05, size=(num_words, embed_dim))
        if topic_init is not None:
            T = np.asarray(topic_init, dtype=np.float64)
            if T.shape != (num_topics, embed_dim):
                raise TrainingError(
                    f"topic_init has shape {T.shape}, "
                    f"expected ({num_topics}, {embed_dim})"
                )
        else:
            limit = np.sqrt(6.0 / (num_topics + embed_dim))
            T = rng.uniform(-limit, limit, size=(num_topics, embed_dim))
        self.space = TopicSpace(W, T, tau)
        self.phi = Encoder("phi", num_words, hidden, num_topics, rng)
        self.gamma = Encoder("gamma", num_words, hidden, num_topics, rng)
        self.epsilon = float(epsilon)
        self.hidden = int(hidden)
        if epsilon <= 0:
            raise TrainingError(f"epsilon must be positive, got {epsilon}")

    # -- parameter plumbing ------------------------------------------------

    def params(self) -> list[Param]:
        return self.space.params() + self.phi.params() + self.gamma.params()

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    # -- encoders ----------------------------------------------------------

    def encode_global(self, x_g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(mu, log_var) of the cluster-level latent; input raw counts."""
        mu, lv, _ = self.phi.forward(normalize_rows(np.atleast_2d(x_g), "global doc"))
        return mu, lv

    def encode_local(self, x_d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu, lv, _ = self.gamma.forward(normalize_rows(np.atleast_2d(x_d), "document"))
        return mu, lv

    # -- training loss -----------------------------------------------------

    def forward_backward(
        self,
        x: np.ndarray,  # (B, V) raw counts
        x_aug: np.ndarray,  # (B, V) augmented targets
        cluster_ids: np.ndarray,  # (B,)
        global_docs: np.ndarray,  # (G, V)
        noise_g: np.ndarray,  # (C, K), one row per distinct batch cluster
        noise_d: np.ndarray,  # (B, K)
        lambda_ecr: float = 0.0,
        psi: Optional[np.ndarray] = None,
        kl_mode: str = "divide",
        kl_scale: float = 1.0,
        rho_override: Optional[np.ndarray] = None,
        compute_grads: bool = True,
    ) -> tuple[float, dict, LatentBatch]:
        """One step's loss and (optionally) parameter gradients.

        Returns (loss, components, latents). Gradients accumulate into the
        Param buffers; callers zero them first. The transport plan psi is a
        constant here: its gradient enters only through the shared
        squared-distance matrix. ``kl_scale`` multiplies both KL terms
        (warmup annealing hook). ``rho_override`` replaces the sampled
        adaptive variable and silences the local encoder and its KL (test
        hook for the plain-VAE reduction).
        """
        if kl_mode not in ("divide", "literal"):
            raise TrainingError(f"unknown kl_mode: {kl_mode!r}")
        if kl_scale < 0:
            raise TrainingError(f"kl_scale must be >= 0, got {kl_scale}")
        B = x.shape[0]
        uniq, inv = np.unique(np.asarray(cluster_ids, dtype=np.int64), return_inverse=True)
        if uniq.min() < 0 or uniq.max() >= global_docs.shape[0]:
            raise TrainingError("cluster id outside the global-document table")
        C = uniq.shape[0]
        if noise_g.shape != (C, self.space.num_topics):
            raise TrainingError(
                f"noise_g shape {noise_g.shape} != ({C}, {self.space.num_topics})"
            )

        # global side: one latent sample per distinct cluster
        xg_n = normalize_rows(global_docs[uniq], "global doc")
        mu_g, lv_g, cache_g = self.phi.forward(xg_n)
        alpha_g = gaussian_reparameterize(mu_g, lv_g, noise_g)
        theta_g = softmax_forward(alpha_g)
        kl_g = kl_diag_gaussian(mu_g, lv_g, 0.0, 1.0)  # (C,)

        # local side: adaptive variable per document
        x_n = normalize_rows(x, "document")
        if rho_override is None:
            mu_d, lv_d, cache_d = self.gamma.forward(x_n)
            rho = gaussian_reparameterize(mu_d, lv_d, noise_d)
            kl_d = kl_diag_gaussian(mu_d, lv_d, 1.0, self.epsilon)  # (B,)
        else:
            rho = np.asarray(rho_override, dtype=np.float64)
            kl_d = np.zeros(B)

        s = theta_g[inv] * rho
        theta_gd = softmax_forward(s)

        beta = compute_beta(self.space)
        logits = theta_gd @ beta.T  # (B, V)
        logp = logits - logsumexp(logits, axis=1, keepdims=True)
        recon = -np.sum(x_aug * logp, axis=1)  # (B,)

        cluster_weight = np.ones(C) if kl_mode == "divide" else np.bincount(inv).astype(np.float64)
        recon_mean = float(recon.sum() / B)
        kl_g_term = float(kl_scale * (cluster_weight * kl_g).sum() / B)
        kl_d_term = float(kl_scale * kl_d.sum() / B)
        loss_tm = recon_mean + kl_g_term + kl_d_term

        ecr_term = 0.0
        sqd_grad_extra = None
        if psi is not None and lambda_ecr != 0.0:
            sqd = self.space.squared_dists()
            if psi.shape != sqd.shape:
                raise TrainingError(f"plan shape {psi.shape} != cost shape {sqd.shape}")
            ecr_term = float(lambda_ecr * np.sum(sqd * psi))
            sqd_grad_extra = lambda_ecr * psi
        loss = loss_tm + ecr_term

        components = {
            "loss": loss,
            "recon": recon_mean,
            "kl_global": kl_g_term,
            "kl_local": kl_d_term,
            "ecr": ecr_term,
        }
        latents = LatentBatch(theta_g, rho, theta_gd, kl_g, kl_d, inv)
        if not compute_grads:
            return loss, components, latents

        # ---- backward ----
        p = np.exp(logp)
        dlogits = (x_aug.sum(axis=1)[:, None] * p - x_aug) / B
        dtheta_gd = dlogits @ beta
        dbeta = dlogits.T @ theta_gd

        ds = softmax_backward(dtheta_gd, theta_gd)
        drho = ds * theta_g[inv]
        dtheta_g = np.zeros_like(theta_g)
        np.add.at(dtheta_g, inv, ds * rho)

        dalpha_g = softmax_backward(dtheta_g, theta_g)
        dmu_g, dlv_g = gaussian_reparameterize_backward(dalpha_g, lv_g, noise_g)
        dmu_kl, dlv_kl = kl_diag_gaussian_backward(
            kl_scale * cluster_weight / B, mu_g, lv_g, 0.0, 1.0
        )
        self.phi.backward(dmu_g + dmu_kl, dlv_g + dlv_kl, cache_g)

        if rho_override is None:
            dmu_d, dlv_d = gaussian_reparameterize_backward(drho, lv_d, noise_d)
            dmu_dkl, dlv_dkl = kl_diag_gaussian_backward(
                np.full(B, kl_scale / B), mu_d, lv_d, 1.0, self.epsilon
            )
            self.gamma.backward(dmu_d + dmu_dkl, dlv_d + dlv_dkl, cache_d)

        compute_beta_backward(self.space, beta, dbeta, extra_dsqd=sqd_grad_extra)
        return loss, components, latents

    def corpus_loss(
        self,
        x: np.ndarray,
        x_aug: np.ndarray,
        cluster_ids: np.ndarray,
        global_docs: np.ndarray,
        noise_g: np.ndarray,
        noise_d: np.ndarray,
        **kw,
    ) -> float:
        loss, _, _ = self.forward_backward(
            x, x_aug, cluster_ids, global_docs, noise_g, noise_d,
            compute_grads=False, **kw
        )
        return loss


@dataclass
class TopicModelOutput:
    beta: np.ndarray  # (V, K)
    theta_global: np.ndarray  # (G, K)
    theta_local: np.ndarray  # (D, K)
    top_words: list[list[str]]  # K lists of top-N vocabulary words


def infer(
    model: GlocomModel,
    x: np.ndarray,
    cluster_ids: np.ndarray,
    global_docs: np.ndarray,
    vocab_words: list[str],
    top_n: int = 15,
) -> TopicModelOutput:
    """Posterior-mean inference: no sampling noise anywhere.

    theta^g = softmax(mu_phi(x^g)); rho_d = mu_gamma(x_d);
    theta^g_d = softmax(theta^g(cluster of d) * rho_d).
    """
    if len(vocab_words) != model.space.num_words:
        raise TrainingError(
            f"{len(vocab_words)} vocabulary words for a "
            f"{model.space.num_words}-word model"
        )
    mu_g, _ = model.encode_global(global_docs)
    theta_global = softmax_forward(mu_g)
    mu_d, _ = model.encode_local(x)
    theta_local = combine(theta_global[np.asarray(cluster_ids, dtype=np.int64)], mu_d)
    beta = compute_beta(model.space)
    top_words = []
    for k in range(beta.shape[1]):
        order = np.argsort(-beta[:, k], kind="stable")[:top_n]
        top_words.append([vocab_words[i] for i in order])
    return TopicModelOutput(beta, theta_global, theta_local, top_words)


# ---------------------------------------------------------------------------
# checkpoints

_CKPT_MAGIC = b"GEMB"  # same header layout as embedding files; f64 payload


def save_checkpoint(model: GlocomModel, dirpath: str) -> None:
    """Manifest plus one binary file per tensor.

    The binary layout matches the embedding format (magic, u64 rows, u64
    cols, row-major payload) but stores float64 so that reload is bit-exact;
    the manifest carries the dtype per tensor.
    """
    import os
    import struct

    os.makedirs(dirpath, exist_ok=True)
    lines = ["glocom-checkpoint 1"]
    for key, val in (
        ("num_words", model.space.num_words),
        ("num_topics", model.space.num_topics),
        ("embed_dim", model.space.W.value.shape[1]),
        ("hidden", model.hidden),
        ("tau", repr(model.space.tau)),
        ("epsilon", repr(model.epsilon)),
    ):
        lines.append(f"meta {key} {val}")
    for p in model.params():
        M = np.atleast_2d(p.value)
        lines.append(f"tensor {p.name} {M.shape[0]} {M.shape[1]} float64")
        with open(os.path.join(dirpath, f"{p.name}.bin"), "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<QQ", M.shape[0], M.shape[1]))
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
    with open(os.path.join(dirpath, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(dirpath: str, seed: int = 0) -> GlocomModel:
    """Rebuild a model from a checkpoint directory, bit-exact."""
    import os
    import struct

    mpath = os.path.join(dirpath, "manifest.txt")
    if not os.path.exists(mpath):
        raise TrainingError(f"no manifest.txt in {dirpath}")
    meta: dict[str, str] = {}
    tensors: list[tuple[str, int, int, str]] = []
    with open(mpath, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:1] != ["glocom-checkpoint"]:
            raise TrainingError(f"{mpath}: not a checkpoint manifest")
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "meta":
                meta[parts[1]] = parts[2]
            elif parts[0] == "tensor":
                tensors.append((parts[1], int(parts[2]), int(parts[3]), parts[4]))
            else:
                raise TrainingError(f"{mpath}: unknown manifest entry {parts[0]!r}")
    model = GlocomModel(
        num_words=int(meta["num_words"]),
        num_topics=int(meta["num_topics"]),
        embed_dim=int(meta["embed_dim"]),
        hidden=int(meta["hidden"]),
        tau=float(meta["tau"]),
        epsilon=float(meta["epsilon"]),
        seed=seed,
    )
    by_name = {p.name: p for p in model.params()}
    for name, rows, cols, dtype in tensors:
        if name not in by_name:
            raise TrainingError(f"checkpoint tensor {name!r} has no model slot")
        if dtype != "float64":
            raise TrainingError(f"unsupported checkpoint dtype {dtype!r}")
        path = os.path.join(dirpath, f"{name}.bin")
        if not os.path.exists(path):
            raise TrainingError(f"checkpoint tensor file missing: {path}")
        with open(path, "rb") as fh:
            if fh.read(4) != _CKPT_MAGIC:
                raise TrainingError(f"{path}: bad magic")
            r, c = struct.unpack("<QQ", fh.read(16))
            if (r, c) != (rows, cols):
                raise TrainingError(
                    f"{path}: shape ({r},{c}) disagrees with manifest ({rows},{cols})"
                )
            payload = fh.read()
        M = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
        p = by_name.pop(name)
        if p.value.size != M.size:
            raise TrainingError(
                f"{name}: checkpoint has {M.size} values, model expects {p.value.size}"
            )
        p.value[...] = M.reshape(p.value.shape)
    if by_name:
        raise TrainingError(f"checkpoint is missing tensors: {sorted(by_name)}")
    return model


# ---------------------------------------------------------------------------
# output files


def write_topics(output: TopicModelOutput, path: str) -> None:
    """One topic per line: topic id then its top words, space-separated."""
    with open(path, "w", encoding="utf-8") as fh:
        for k, words in enumerate(output.top_words):
            fh.write(f"{k} " + " ".join(words) + "\n")


def write_matrix_csv(M: np.ndarray, path: str) -> None:
    np.savetxt(path, np.asarray(M, dtype=np.float64), fmt="%.17g", delimiter=",")
