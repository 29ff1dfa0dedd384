"""Minimal numpy neural-network substrate.

Primitive layers (dense, layer norm, dropout, activations, cross-entropy)
with explicit forward/backward passes, an AdamW optimizer with decoupled
weight decay, and a central-finite-difference gradient checker. Everything
operates on plain ``numpy.ndarray`` values; float32 is the training dtype,
float64 is used when checking gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

Array = np.ndarray

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class NonFiniteGradientError(RuntimeError):
    """Raised when an optimizer step sees a NaN/Inf gradient."""


@dataclass
class Parameter:
    """A named trainable tensor with an optional gradient buffer.

    The gradient is allocated lazily so that inference-only model instances
    do not pay for it.
    """

    name: str
    value: Array
    grad: Array | None = None

    def ensure_grad(self) -> Array:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad[...] = 0.0

    def add_grad(self, g: Array) -> None:
        self.ensure_grad()
        self.grad += g


class RngState:
    """Seeded random stream for dropout masks and weight init.

    The stream is consumed sequentially; the same seed always reproduces the
    same sequence of masks/initial values. Never share one instance across
    threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape, std: float = 1.0, dtype=np.float32) -> Array:
        return (self.generator.standard_normal(shape) * std).astype(dtype)

    def uniform(self, shape) -> Array:
        return self.generator.random(shape)

    def permutation(self, n: int) -> Array:
        return self.generator.permutation(n)

    def choice(self, options, size: int, replace: bool = False) -> Array:
        return self.generator.choice(options, size=size, replace=replace)


def normal_param(name: str, shape, rng: RngState, std: float = 0.02, dtype=np.float32) -> Parameter:
    return Parameter(name, rng.normal(shape, std=std, dtype=dtype))


def zeros_param(name: str, shape, dtype=np.float32) -> Parameter:
    return Parameter(name, np.zeros(shape, dtype=dtype))


def ones_param(name: str, shape, dtype=np.float32) -> Parameter:
    return Parameter(name, np.ones(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# activations


def relu(x: Array) -> Array:
    return np.maximum(x, 0)


def relu_backward(dy: Array, x: Array) -> Array:
    return dy * (x > 0)


def sigmoid(x: Array) -> Array:
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(x: Array, axis: int = -1) -> Array:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(dy: Array, probs: Array, axis: int = -1) -> Array:
    inner = np.sum(dy * probs, axis=axis, keepdims=True)
    return probs * (dy - inner)


def gelu(x: Array) -> Array:
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_backward(dy: Array, x: Array) -> Array:
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return dy * (cdf + x * pdf)


# ---------------------------------------------------------------------------
# dense


def dense_forward(x: Array, w: Array, b: Array):
    """x @ w + b over the last axis. Returns (y, cache)."""
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dense shape mismatch: x{x.shape} vs w{w.shape}")
    y = x @ w + b
    return y, (x, w)


def dense_backward(dy: Array, cache):
    x, w = cache
    dx = dy @ w.T
    xr = x.reshape(-1, x.shape[-1])
    dyr = dy.reshape(-1, dy.shape[-1])
    dw = xr.T @ dyr
    db = dyr.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------------------
# layer norm


def layer_norm_forward(x: Array, gamma: Array, beta: Array, eps: float = 1e-5):
    """Normalize over the last axis, then apply the affine. Returns (y, cache)."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    y = xhat * gamma + beta
    return y, (xhat, inv_std, gamma)


def layer_norm(x: Array, gamma: Array, beta: Array, eps: float = 1e-5) -> Array:
    return layer_norm_forward(x, gamma, beta, eps)[0]


def layer_norm_backward(dy: Array, cache):
    xhat, inv_std, gamma = cache
    dxhat = dy * gamma
    dgamma = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dbeta = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv_std
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# dropout


def dropout_forward(x: Array, p: float, mode: str, rng: RngState | None):
    """Inverted dropout. Returns (y, mask); mask is None when a no-op.

    In eval mode (or p == 0) the input passes through unchanged. In train
    mode each element survives with probability 1-p and survivors are scaled
    by 1/(1-p), so the expected value is preserved.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an RngState")
    keep = (rng.uniform(x.shape) >= p).astype(x.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    return x * keep * scale, keep


def dropout(x: Array, p: float, mode: str, rng: RngState | None = None) -> Array:
    return dropout_forward(x, p, mode, rng)[0]


def dropout_backward(dy: Array, mask: Array | None, p: float) -> Array:
    if mask is None:
        return dy
    return dy * mask * np.asarray(1.0 / (1.0 - p), dtype=dy.dtype)


# ---------------------------------------------------------------------------
# loss


def cross_entropy(logits: Array, labels):
    """Mean negative log softmax likelihood over a batch of class logits.

    Returns (loss, dlogits) where dlogits is the gradient of the mean loss,
    i.e. (softmax - onehot) / n.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-d [n, classes], got shape {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(logits - m), axis=1))
    picked = logits[np.arange(n), labels]
    loss = float(np.mean(lse - picked))
    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamWState:
    """AdamW with weight decay decoupled from the moment estimates."""

    lr: float = 2e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict, repr=False)
    v: dict = field(default_factory=dict, repr=False)


def adamw_step(params: list[Parameter], state: AdamWState) -> None:
    """One optimizer step over all params, in place.

    Aborts (raising, mutating nothing) if any gradient has a NaN/Inf entry.
    """
    bad = [p.name for p in params if p.grad is None or not np.all(np.isfinite(p.grad))]
    if bad:
        raise NonFiniteGradientError(f"non-finite or missing gradient for: {', '.join(bad)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p in params:
        g = p.grad
        m = state.m.setdefault(p.name, np.zeros_like(p.value))
        v = state.v.setdefault(p.name, np.zeros_like(p.value))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.value -= state.lr * (mhat / (np.sqrt(vhat) + state.epsilon)
                               + state.weight_decay * p.value)


# ---------------------------------------------------------------------------
# gradient check


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_err: float
    checked: int
    skipped: int


def grad_check(f, params: list[Parameter], eps: float = 1e-5,
               max_entries_per_param: int = 25, rng: RngState | None = None,
               kink_rtol: float = 0.25, kink_atol: float | None = None) -> GradCheckResult:
    """Compare analytic gradients with central finite differences.

    ``f()`` must recompute the scalar loss from the current parameter values
    and leave the analytic gradient in ``p.grad`` for every checked
    parameter; it must be deterministic (run dropout in eval mode). Up to
    ``max_entries_per_param`` coordinates are sampled per tensor. A
    coordinate whose two one-sided difference quotients disagree (an
    activation kink under the probe) is skipped and counted instead of
    checked.
    """
    rng = rng or RngState(0)
    for p in params:
        p.zero_grad()
    loss0 = float(f())
    analytic = {p.name: np.array(p.grad, copy=True) for p in params}

    max_rel = 0.0
    checked = 0
    skipped = 0
    atol = kink_atol if kink_atol is not None else 50.0 * eps
    for p in params:
        flat = p.value.reshape(-1)
        n = flat.size
        if n <= max_entries_per_param:
            indices = np.arange(n)
        else:
            indices = np.sort(rng.choice(n, size=max_entries_per_param, replace=False))
        a_flat = analytic[p.name].reshape(-1)
        for i in indices:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f())
            flat[i] = orig - eps
            f_minus = float(f())
            flat[i] = orig
            s_plus = (f_plus - loss0) / eps
            s_minus = (loss0 - f_minus) / eps
            disagreement = abs(s_plus - s_minus)
            if disagreement > kink_rtol * max(abs(s_plus), abs(s_minus), 1e-8) \
                    and disagreement > atol:
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
            checked += 1
    return GradCheckResult(max_rel_err=max_rel, checked=checked, skipped=skipped)
