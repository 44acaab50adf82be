"""Differentiable primitives.

Every op takes and returns :class:`Tensor` objects and registers a backward
closure on the active tape.  Layouts follow the channels-first convention:
sequences are ``(batch, channels, length)`` and token streams are
``(batch, tokens, features)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, record, unbroadcast


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return record(
        "add", a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb))
    )


def scale(a: Tensor, c: float) -> Tensor:
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def weighted_sum(a: Tensor, weights) -> Tensor:
    """``sum(a * weights)`` for a constant ``weights`` array; handy for gradient checks."""
    w = np.asarray(weights, dtype=a.data.dtype)
    return record("weighted_sum", np.array((a.data * w).sum()), (a,), lambda g: (g * w,))


def mean(a: Tensor, axis: int) -> Tensor:
    n = a.shape[axis]
    shape = a.shape

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return record("mean", a.data.mean(axis=axis), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return record("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def relu(a: Tensor) -> Tensor:
    return record("relu", np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, sa), unbroadcast(gb, sb)

    return record("matmul", np.matmul(a.data, b.data), (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis; ``w`` has shape ``(in, out)``."""
    n_in, n_out = w.shape
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, n_out)
        gx = g @ w.data.T
        gw = x.data.reshape(-1, n_in).T @ g2
        gb = g2.sum(axis=0) if b is not None else None
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return record("linear", out, inputs, backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the affine ``gamma``/``beta``."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    d = x.shape[-1]

    def backward(g):
        dxhat = g * gamma.data
        dx = inv / d * (
            d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, d)
        dgamma = (flat_g * xhat.reshape(-1, d)).sum(axis=0)
        return dx, dgamma, flat_g.sum(axis=0)

    return record("layer_norm", xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def conv1d_output_length(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv1d_nlc(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Channels-last cross-correlation: ``x (N, L, C)``, ``w (O, C, K)`` -> ``(N, L_out, O)``."""
    n, length, c = x.shape
    o, cw, k = w.shape
    if c != cw:
        raise ValueError(f"input has {c} channels, kernel expects {cw}")
    if k > length + 2 * padding:
        raise ValueError(f"kernel of length {k} is longer than the padded input ({length + 2 * padding})")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0))) if padding else x.data
    l_out = conv1d_output_length(length, k, stride, padding)
    stop = stride * (l_out - 1) + 1
    # (N, L_out, C, K) view -> (N*L_out, C*K) copy
    cols = sliding_window_view(xp, k, axis=1)[:, :stop:stride].reshape(n * l_out, c * k)
    w2 = w.data.reshape(o, c * k)
    out = (cols @ w2.T).reshape(n, l_out, o)
    if b is not None:
        out += b.data

    def backward(g):
        g2 = g.reshape(n * l_out, o)
        gw = (g2.T @ cols).reshape(o, c, k)
        gb = g2.sum(axis=0) if b is not None else None
        dcols = (g2 @ w2).reshape(n, l_out, c, k)
        dxp = np.zeros(xp.shape, dtype=g.dtype)
        for j in range(k):
            dxp[:, j : j + stop : stride] += dcols[..., j]
        gx = dxp[:, padding : padding + length] if padding else dxp
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return record("conv1d", out, inputs, backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x (N, C, L)`` with ``w (O, C, K)``, output ``(N, O, L_out)``."""
    if x.data.ndim != 3:
        raise ValueError("conv1d expects (batch, channels, length) input")
    y = conv1d_nlc(transpose(x, (0, 2, 1)), w, b, stride, padding)
    return transpose(y, (0, 2, 1))


def max_pool1d(x: Tensor, size: int = 2, axis: int = -1) -> Tensor:
    """Non-overlapping max pooling along ``axis``; a ragged tail is dropped."""
    axis = axis % x.data.ndim
    length = x.shape[axis]
    m = length // size
    trimmed = x.data[(slice(None),) * axis + (slice(0, m * size),)]
    xr = trimmed.reshape(x.shape[:axis] + (m, size) + x.shape[axis + 1 :])
    # elementwise maximum over the pool taps beats a reduction over a tiny axis
    out = xr.take(0, axis=axis + 1)
    for j in range(1, size):
        out = np.maximum(out, xr.take(j, axis=axis + 1))

    def backward(g):
        idx = np.expand_dims(xr.argmax(axis=axis + 1), axis + 1)
        gr = np.zeros_like(xr)
        np.put_along_axis(gr, idx, np.expand_dims(g, axis + 1), axis=axis + 1)
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[(slice(None),) * axis + (slice(0, m * size),)] = gr.reshape(trimmed.shape)
        return (gx,)

    return record("max_pool1d", out, (x,), backward)
