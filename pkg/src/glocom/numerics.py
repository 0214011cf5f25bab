"""Differentiable building blocks and the optimizer.

The model's computation graph is fixed, so instead of general autodiff every
operation exposes an explicit forward and backward. All math is float64:
finite-difference verification headroom matters more than speed here.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TrainingError

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


def check_finite_2d(name: str, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise TrainingError(f"{name}: expected a 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise TrainingError(f"{name}: non-finite values")
    return M


class Param:
    """A named tensor with a gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)


# ---------------------------------------------------------------------------
# primitive ops


def affine_forward(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """X (N,in) @ W.T (in,out) + b -> (N,out)."""
    if X.shape[1] != W.shape[1]:
        raise TrainingError(f"affine: input dim {X.shape[1]} != weight dim {W.shape[1]}")
    return X @ W.T + b[None, :]


def affine_backward(g: np.ndarray, X: np.ndarray, W: np.ndarray):
    """Returns (dX, dW, db) for upstream gradient g of shape (N,out)."""
    return g @ W, g.T @ X, g.sum(axis=0)


def softplus_forward(x: np.ndarray) -> np.ndarray:
    # log(1+e^x) rewritten to avoid overflow for large |x|
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def softplus_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return g * _sigmoid(x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_forward(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    """y = softmax(x); returns dL/dx given dL/dy = g."""
    return y * (g - np.sum(g * y, axis=-1, keepdims=True))


def clamp_logvar(lv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp to [-10, 10]; the mask gates the backward pass (gradient passes
    through only where the clamp was inactive)."""
    clamped = np.clip(lv, LOGVAR_MIN, LOGVAR_MAX)
    mask = ((lv > LOGVAR_MIN) & (lv < LOGVAR_MAX)).astype(np.float64)
    return clamped, mask


def gaussian_reparameterize(
    mu: np.ndarray, log_var: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """mu + exp(0.5 log_var) * noise. log_var is assumed already clamped."""
    if mu.shape != log_var.shape or mu.shape != noise.shape:
        raise TrainingError("reparameterize: shape mismatch")
    return mu + np.exp(0.5 * log_var) * noise


def gaussian_reparameterize_backward(
    g: np.ndarray, log_var: np.ndarray, noise: np.ndarray
):
    """Returns (dmu, dlog_var)."""
    dmu = g
    dlv = g * noise * 0.5 * np.exp(0.5 * log_var)
    return dmu, dlv


def kl_diag_gaussian(
    mu_q: np.ndarray, log_var_q: np.ndarray, mu_p: float, var_p: float
) -> np.ndarray:
    """KL(N(mu_q, diag e^lv) || N(mu_p, var_p I)), summed over the last axis.

    0.5 * sum_k [ e^lv/var_p + (mu-mu_p)^2/var_p - 1 + ln var_p - lv ]
    """
    if var_p <= 0:
        raise TrainingError(f"prior variance must be positive, got {var_p}")
    t = (
        np.exp(log_var_q) / var_p
        + (mu_q - mu_p) ** 2 / var_p
        - 1.0
        + np.log(var_p)
        - log_var_q
    )
    return 0.5 * t.sum(axis=-1)


def kl_diag_gaussian_backward(
    g, mu_q: np.ndarray, log_var_q: np.ndarray, mu_p: float, var_p: float
):
    """Returns (dmu_q, dlog_var_q); g broadcasts over the summed axis."""
    g = np.asarray(g, dtype=np.float64)[..., None]
    dmu = g * (mu_q - mu_p) / var_p
    dlv = g * 0.5 * (np.exp(log_var_q) / var_p - 1.0)
    return dmu, dlv


# ---------------------------------------------------------------------------
# layers


class DenseLayer:
    """y = x W^T + b with gradient accumulators."""

    def __init__(self, name: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        # Glorot-uniform keeps softplus preactivations in a sane range
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        self.W = Param(f"{name}.W", rng.uniform(-limit, limit, size=(out_dim, in_dim)))
        self.b = Param(f"{name}.b", np.zeros(out_dim))

    def forward(self, X: np.ndarray) -> np.ndarray:
        return affine_forward(X, self.W.value, self.b.value)

    def backward(self, g: np.ndarray, X: np.ndarray) -> np.ndarray:
        dX, dW, db = affine_backward(g, X, self.W.value)
        self.W.grad += dW
        self.b.grad += db
        return dX

    def params(self) -> list[Param]:
        return [self.W, self.b]


@dataclass
class EncoderCache:
    X: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    lv_mask: np.ndarray


class Encoder:
    """Two softplus-activated dense layers, then separate mean / log-variance
    heads. The log-variance head is clamped to [-10, 10]."""

    def __init__(self, name: str, in_dim: int, hidden: int, out_dim: int, rng):
        self.l1 = DenseLayer(f"{name}.l1", in_dim, hidden, rng)
        self.l2 = DenseLayer(f"{name}.l2", hidden, hidden, rng)
        self.mu_head = DenseLayer(f"{name}.mu", hidden, out_dim, rng)
        self.lv_head = DenseLayer(f"{name}.lv", hidden, out_dim, rng)

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, EncoderCache]:
        a1 = self.l1.forward(X)
        h1 = softplus_forward(a1)
        a2 = self.l2.forward(h1)
        h2 = softplus_forward(a2)
        mu = self.mu_head.forward(h2)
        lv_raw = self.lv_head.forward(h2)
        lv, mask = clamp_logvar(lv_raw)
        return mu, lv, EncoderCache(X, a1, h1, a2, h2, mask)

    def backward(self, dmu: np.ndarray, dlv: np.ndarray, cache: EncoderCache) -> np.ndarray:
        dh2 = self.mu_head.backward(dmu, cache.h2)
        dh2 = dh2 + self.lv_head.backward(dlv * cache.lv_mask, cache.h2)
        da2 = softplus_backward(dh2, cache.a2)
        dh1 = self.l2.backward(da2, cache.h1)
        da1 = softplus_backward(dh1, cache.a1)
        return self.l1.backward(da1, cache.X)

    def params(self) -> list[Param]:
        return (
            self.l1.params() + self.l2.params() + self.mu_head.params() + self.lv_head.params()
        )


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params: list[Param], lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise TrainingError(f"duplicate parameter names: {names}")
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for p in params:
            self.state.m[p.name] = np.zeros_like(p.value)
            self.state.v[p.name] = np.zeros_like(p.value)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        s = self.state
        s.step_count += 1
        b1t = 1.0 - s.beta1**s.step_count
        b2t = 1.0 - s.beta2**s.step_count
        for p in self.params:
            m = s.m[p.name]
            v = s.v[p.name]
            m *= s.beta1
            m += (1.0 - s.beta1) * p.grad
            v *= s.beta2
            v += (1.0 - s.beta2) * p.grad**2
            p.value -= s.lr * (m / b1t) / (np.sqrt(v / b2t) + s.eps)
