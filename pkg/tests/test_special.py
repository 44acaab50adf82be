import mpmath
import numpy as np
import pytest

from seizekit.nn.special import digamma, gammaln, trigamma

POINTS = np.concatenate([np.geomspace(1e-6, 1e6, 200), [0.5, 1.0, 1.5, 2.0, 9.99, 10.0, 10.01]])


@pytest.mark.parametrize(
    "ours,ref",
    [
        (digamma, mpmath.digamma),
        (trigamma, lambda x: mpmath.polygamma(1, x)),
        (gammaln, mpmath.loggamma),
    ],
    ids=["digamma", "trigamma", "gammaln"],
)
def test_against_mpmath(ours, ref):
    got = ours(POINTS)
    want = np.array([float(ref(mpmath.mpf(float(x)))) for x in POINTS])
    scale = np.maximum(np.abs(want), 1.0)
    assert np.max(np.abs(got - want) / scale) < 1e-12


def test_known_values():
    assert digamma(np.array([2.0]))[0] - digamma(np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-15)
    assert trigamma(np.array([1.0]))[0] == pytest.approx(np.pi**2 / 6, rel=1e-14)
    assert gammaln(np.array([5.0]))[0] == pytest.approx(np.log(24.0), rel=1e-14)
