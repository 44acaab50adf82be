"""Composite layers built from the primitives in :mod:`functional`.

Layers are plain functions over a parameter mapping; ``prefix`` selects the
layer's entries, e.g. ``trf.wq`` for ``prefix="trf"``.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import functional as F
from .tensor import Tensor


def init_dense(rng: np.random.Generator, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """He-uniform weights and zero bias."""
    bound = np.sqrt(6.0 / n_in)
    return rng.uniform(-bound, bound, size=(n_in, n_out)), np.zeros(n_out)


def init_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    bound = np.sqrt(6.0 / (c_in * k))
    return rng.uniform(-bound, bound, size=(c_out, c_in, k)), np.zeros(c_out)


def init_attention(rng, d_model: int) -> dict[str, np.ndarray]:
    """Glorot-uniform projections for a self-attention layer."""
    bound = np.sqrt(6.0 / (2 * d_model))
    out = {}
    for name in ("q", "k", "v", "o"):
        out[f"w{name}"] = rng.uniform(-bound, bound, size=(d_model, d_model))
        out[f"b{name}"] = np.zeros(d_model)
    return out


def init_transformer_block(rng, d_model: int, d_ff: int) -> dict[str, np.ndarray]:
    params = {f"attn.{k}": v for k, v in init_attention(rng, d_model).items()}
    params["ln1.gamma"], params["ln1.beta"] = np.ones(d_model), np.zeros(d_model)
    params["ffn.w1"], params["ffn.b1"] = init_dense(rng, d_model, d_ff)
    w2_bound = np.sqrt(6.0 / (d_ff + d_model))
    params["ffn.w2"] = rng.uniform(-w2_bound, w2_bound, size=(d_ff, d_model))
    params["ffn.b2"] = np.zeros(d_model)
    params["ln2.gamma"], params["ln2.beta"] = np.ones(d_model), np.zeros(d_model)
    return params


def _p(params: Mapping[str, Tensor], prefix: str, name: str) -> Tensor:
    return params[f"{prefix}.{name}" if prefix else name]


def multi_head_attention(
    x: Tensor, params: Mapping[str, Tensor], n_heads: int = 8, prefix: str = "", return_weights: bool = False
):
    """Scaled dot-product self-attention over ``x`` of shape ``(batch, tokens, d_model)``."""
    squeeze = x.data.ndim == 2
    if squeeze:
        x = F.reshape(x, (1,) + x.shape)
    b, t, d = x.shape
    if d % n_heads:
        raise ValueError(f"d_model={d} is not divisible by n_heads={n_heads}")
    dk = d // n_heads

    def heads(name):
        y = F.linear(x, _p(params, prefix, f"w{name}"), _p(params, prefix, f"b{name}"))
        return F.transpose(F.reshape(y, (b, t, n_heads, dk)), (0, 2, 1, 3))

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = F.scale(F.matmul(q, F.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dk))
    weights = F.softmax(scores, axis=-1)
    ctx = F.transpose(F.matmul(weights, v), (0, 2, 1, 3))
    out = F.linear(F.reshape(ctx, (b, t, d)), _p(params, prefix, "wo"), _p(params, prefix, "bo"))
    if squeeze:
        out = F.reshape(out, (t, d))
    return (out, weights.data) if return_weights else out


def feed_forward(x: Tensor, params, prefix: str = "") -> Tensor:
    h = F.relu(F.linear(x, _p(params, prefix, "w1"), _p(params, prefix, "b1")))
    return F.linear(h, _p(params, prefix, "w2"), _p(params, prefix, "b2"))


def transformer_block(x: Tensor, params, n_heads: int = 8, prefix: str = "") -> Tensor:
    """Post-norm encoder block: attention, add & norm, FFN, add & norm."""
    sub = f"{prefix}." if prefix else ""
    if x.data.ndim not in (2, 3):
        raise ValueError("transformer input must be (tokens, d) or (batch, tokens, d)")
    d = _p(params, prefix, "ln1.gamma").shape[0]
    if x.shape[-1] != d:
        raise ValueError(f"token width {x.shape[-1]} does not match d_model={d}")
    a = multi_head_attention(x, params, n_heads, prefix=f"{sub}attn")
    h = F.layer_norm(F.add(x, a), _p(params, prefix, "ln1.gamma"), _p(params, prefix, "ln1.beta"))
    f = feed_forward(h, params, prefix=f"{sub}ffn")
    return F.layer_norm(F.add(h, f), _p(params, prefix, "ln2.gamma"), _p(params, prefix, "ln2.beta"))


def sinusoidal_positions(n_tokens: int, d_model: int) -> np.ndarray:
    pos = np.arange(n_tokens)[:, None]
    i = np.arange(d_model // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / d_model)
    pe = np.zeros((n_tokens, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe
