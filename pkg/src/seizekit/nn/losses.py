"""Softmax cross-entropy and belief-matching losses for binary classifiers.

Both reduce a batch to ``mean_i(weight_i * loss_i)``.
"""

from __future__ import annotations

import numpy as np

from .functional import reshape
from .special import digamma, gammaln, trigamma
from .tensor import Tensor, as_tensor, record

LOGIT_CLAMP = 30.0


def _batch(logits, labels, weights):
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.data.ndim == 1:
        logits = reshape(logits, (1, -1))
    n, k = logits.shape
    if labels.shape[0] != n:
        raise ValueError("one label per row of logits required")
    if np.any((labels < 0) | (labels >= k)):
        raise ValueError("label out of range")
    w = np.ones(n) if weights is None else np.broadcast_to(np.asarray(weights, dtype=np.float64), (n,))
    return logits, labels, w


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_loss(logits, labels, weights=None) -> Tensor:
    """Weighted negative log-softmax probability of the true class."""
    logits, labels, w = _batch(logits, labels, weights)
    n = labels.shape[0]
    logp = log_softmax(logits.data)
    per = -logp[np.arange(n), labels]
    value = np.array((w * per).mean())

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (g * p * (w / n)[:, None],)

    return record("softmax_loss", value, (logits,), backward)


def dirichlet_kl(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """KL(Dir(alpha) || Dir(beta)) along the last axis."""
    a0 = alpha.sum(axis=-1)
    b0 = beta.sum(axis=-1)
    return (
        gammaln(a0)
        - gammaln(alpha).sum(axis=-1)
        - gammaln(b0)
        + gammaln(beta).sum(axis=-1)
        + ((alpha - beta) * (digamma(alpha) - digamma(a0)[..., None])).sum(axis=-1)
    )


def evidence_lower_bound(alpha: np.ndarray, labels: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Per-sample ELBO: E_q[log p(y|z)] - KL(q || prior) for q = Dir(alpha)."""
    n = alpha.shape[0]
    expected_ll = digamma(alpha[np.arange(n), labels]) - digamma(alpha.sum(axis=-1))
    return expected_ll - dirichlet_kl(alpha, beta)


def concentrations(logits: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))


def bm_loss(logits, labels, weights=None, prior_beta=1.0) -> Tensor:
    """Belief-matching loss: weighted negative ELBO with ``alpha = exp(logits)``.

    Logits are clamped to ``[-30, 30]`` before exponentiation; the clamp
    has zero gradient outside that range.
    """
    logits, labels, w = _batch(logits, labels, weights)
    n, k = logits.shape
    beta = np.broadcast_to(np.asarray(prior_beta, dtype=np.float64), (k,))
    if np.any(beta <= 0):
        raise ValueError("prior_beta must be positive")
    alpha = concentrations(logits.data)
    beta_b = np.broadcast_to(beta, alpha.shape)
    value = np.array((w * -evidence_lower_bound(alpha, labels, beta_b)).mean())

    def backward(g):
        a0 = alpha.sum(axis=-1, keepdims=True)
        tg0 = trigamma(a0)
        # d ELBO / d alpha_k
        d_alpha = -(alpha - beta_b) * trigamma(alpha) + (a0 - beta.sum()) * tg0 - tg0
        rows = np.arange(n)
        d_alpha[rows, labels] += trigamma(alpha[rows, labels])
        inside = np.abs(logits.data) <= LOGIT_CLAMP
        d_logits = -d_alpha * alpha * inside
        return (g * d_logits * (w / n)[:, None],)

    return record("bm_loss", value, (logits,), backward)
