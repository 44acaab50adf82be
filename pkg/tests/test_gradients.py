import mpmath
import numpy as np
import pytest

from seizekit.nn import functional as F
from seizekit.nn.layers import init_attention, init_transformer_block, multi_head_attention, transformer_block
from seizekit.nn.losses import LOGIT_CLAMP, bm_loss, softmax_loss

from .oracles import gradient_check

SEEDS = range(100)
TOL = 1e-3


def _weights(rng, shape):
    return rng.standard_normal(shape)


def _worst(case, seeds=SEEDS):
    return max(case(np.random.default_rng(s)) for s in seeds)


def conv_case(rng):
    n, c, length, o, k = 2, 3, 11, 4, 3
    arrays = {"x": rng.standard_normal((n, c, length)), "w": rng.standard_normal((o, c, k)), "b": rng.standard_normal(o)}
    out_w = _weights(rng, (n, o, length))
    return gradient_check(lambda t: F.weighted_sum(F.conv1d(t["x"], t["w"], t["b"], padding=1), out_w), arrays, rng)


def conv_pool_case(rng):
    arrays = {"x": rng.standard_normal((2, 10, 3)), "w": rng.standard_normal((5, 3, 3))}
    out_w = _weights(rng, (2, 5, 5))

    def fn(t):
        h = F.max_pool1d(F.relu(F.conv1d_nlc(t["x"], t["w"], padding=1)), 2, axis=1)
        return F.weighted_sum(h, out_w)

    return gradient_check(fn, arrays, rng)


def attention_case(rng):
    d, heads = 8, 2
    arrays = {"x": rng.standard_normal((2, 4, d)), **init_attention(rng, d)}
    arrays.update({k: v + 0.1 * rng.standard_normal(v.shape) for k, v in arrays.items() if k.startswith("b")})
    out_w = _weights(rng, (2, 4, d))

    def fn(t):
        params = {k: v for k, v in t.items() if k != "x"}
        return F.weighted_sum(multi_head_attention(t["x"], params, n_heads=heads), out_w)

    return gradient_check(fn, arrays, rng)


def transformer_case(rng):
    d, heads = 8, 2
    params = init_transformer_block(rng, d, 16)
    params = {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in params.items()}
    arrays = {"x": rng.standard_normal((2, 3, d)), **params}
    out_w = _weights(rng, (2, 3, d))

    def fn(t):
        p = {k: v for k, v in t.items() if k != "x"}
        return F.weighted_sum(transformer_block(t["x"], p, n_heads=heads), out_w)

    return gradient_check(fn, arrays, rng)


def sm_case(rng):
    labels = rng.integers(0, 2, 6)
    weights = rng.uniform(0.5, 2.0, 6)
    return gradient_check(lambda t: softmax_loss(t["z"], labels, weights), {"z": 3 * rng.standard_normal((6, 2))}, rng)


def bm_case(rng):
    labels = rng.integers(0, 2, 6)
    weights = rng.uniform(0.5, 2.0, 6)
    beta = float(rng.uniform(0.5, 3.0))
    z = 2 * rng.standard_normal((6, 2))
    return gradient_check(lambda t: bm_loss(t["z"], labels, weights, beta), {"z": z}, rng)


@pytest.mark.parametrize(
    "case",
    [conv_case, conv_pool_case, attention_case, transformer_case, sm_case, bm_case],
    ids=["conv1d", "conv-relu-pool", "attention", "transformer", "softmax-loss", "bm-loss"],
)
def test_finite_differences(case):
    assert _worst(case) <= TOL


def test_bm_loss_uniform_prior_is_one():
    loss = bm_loss(np.zeros((1, 2)), [0])
    assert abs(float(loss.data) - 1.0) <= 1e-9


def _elbo_mpmath(alpha, y, beta):
    a = [mpmath.mpf(v) for v in alpha]
    a0 = sum(a)
    b0 = beta * len(a)
    kl = mpmath.loggamma(a0) - sum(mpmath.loggamma(v) for v in a) - mpmath.loggamma(b0) + len(a) * mpmath.loggamma(beta)
    kl += sum((v - beta) * (mpmath.digamma(v) - mpmath.digamma(a0)) for v in a)
    return mpmath.digamma(a[y]) - mpmath.digamma(a0) - kl


def test_bm_loss_matches_mpmath():
    rng = np.random.default_rng(1)
    for _ in range(50):
        z = rng.uniform(-5, 5, 2)
        y = int(rng.integers(0, 2))
        beta = float(rng.uniform(0.5, 3))
        want = -float(_elbo_mpmath(np.exp(z), y, beta))
        assert float(bm_loss(z, [y], prior_beta=beta).data) == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_bm_loss_saturates_without_overflow():
    z = np.array([[500.0, -500.0]])
    loss = bm_loss(z, [0])
    assert np.isfinite(loss.data)
    assert float(loss.data) == pytest.approx(float(bm_loss(np.array([[LOGIT_CLAMP, -LOGIT_CLAMP]]), [0]).data))
