"""Digamma, trigamma and log-gamma for positive real arrays.

Arguments below ``SHIFT`` are moved up with the recurrences
``psi(x) = psi(x + 1) - 1/x`` and ``lgamma(x) = lgamma(x + 1) - log(x)``;
the asymptotic (Stirling) series is then accurate to double precision.
"""

from __future__ import annotations

import math

import numpy as np

SHIFT = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _shifted(x):
    x = np.array(x, dtype=np.float64, copy=True)
    if np.any(~(x > 0)):
        raise ValueError("argument must be positive")
    return x


def digamma(x):
    x = _shifted(x)
    acc = np.zeros_like(x)
    for _ in range(int(SHIFT)):
        m = x < SHIFT
        if not m.any():
            break
        acc[m] -= 1.0 / x[m]
        x[m] += 1.0
    r = 1.0 / (x * x)
    series = r * (
        -1.0 / 12
        + r * (1.0 / 120 + r * (-1.0 / 252 + r * (1.0 / 240 + r * (-1.0 / 132 + r * (691.0 / 32760 + r * (-1.0 / 12))))))
    )
    return acc + np.log(x) - 0.5 / x + series


def trigamma(x):
    x = _shifted(x)
    acc = np.zeros_like(x)
    for _ in range(int(SHIFT)):
        m = x < SHIFT
        if not m.any():
            break
        acc[m] += 1.0 / (x[m] * x[m])
        x[m] += 1.0
    inv = 1.0 / x
    r = inv * inv
    series = inv * r * (
        1.0 / 6 + r * (-1.0 / 30 + r * (1.0 / 42 + r * (-1.0 / 30 + r * (5.0 / 66 + r * (-691.0 / 2730 + r * (7.0 / 6))))))
    )
    return acc + inv + 0.5 * r + series


def gammaln(x):
    x = _shifted(x)
    acc = np.zeros_like(x)
    for _ in range(int(SHIFT)):
        m = x < SHIFT
        if not m.any():
            break
        acc[m] -= np.log(x[m])
        x[m] += 1.0
    inv = 1.0 / x
    r = inv * inv
    series = inv * (
        1.0 / 12
        + r * (-1.0 / 360 + r * (1.0 / 1260 + r * (-1.0 / 1680 + r * (1.0 / 1188 + r * (-691.0 / 360360 + r / 156)))))
    )
    return acc + (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + series
