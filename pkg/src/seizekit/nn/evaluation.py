"""Classification statistics used at channel and segment level."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


def class_weights(labels, n_classes: int = 2) -> np.ndarray:
    """Weights inversely proportional to class frequency: ``m / (n_classes * m_c)``."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=n_classes)[:n_classes]
    if np.any(counts == 0):
        raise ValueError(f"empty class: counts per class are {counts.tolist()}")
    return labels.size / (n_classes * counts.astype(np.float64))


def _class_probs(probabilities) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim == 1:
        p = np.stack([1.0 - p, p], axis=1)
    return p


def ece(probabilities, labels, n_bins: int = 15) -> float:
    """Expected calibration error over equal-width confidence bins ``(b/M, (b+1)/M]``.

    ``probabilities`` is either the positive-class probability per sample or
    an ``(n, classes)`` matrix.
    """
    p = _class_probs(probabilities)
    labels = np.asarray(labels, dtype=np.int64)
    if p.shape[0] != labels.shape[0]:
        raise ValueError("probabilities and labels differ in length")
    if labels.size == 0:
        return 0.0
    conf = p.max(axis=1)
    correct = (p.argmax(axis=1) == labels).astype(np.float64)
    idx = np.clip(np.ceil(conf * n_bins).astype(np.int64) - 1, 0, n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    return float(np.abs(acc_sum - conf_sum).sum() / labels.size)


@dataclass(frozen=True)
class BinaryReport:
    acc: float
    bac: float
    sen: float
    spe: float
    f1: float
    ece: float

    def as_dict(self) -> dict:
        return asdict(self)


def _safe(num, den):
    return float(num / den) if den else 0.0


def binary_report(probabilities, labels, threshold: float = 0.5) -> BinaryReport:
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    pred = (p >= threshold).astype(np.int64)
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    sen = _safe(tp, tp + fn)
    spe = _safe(tn, tn + fp)
    pre = _safe(tp, tp + fp)
    return BinaryReport(
        acc=_safe(tp + tn, y.size),
        bac=(sen + spe) / 2.0,
        sen=sen,
        spe=spe,
        f1=_safe(2 * pre * sen, pre + sen),
        ece=ece(p, y),
    )


def balanced_accuracy(probabilities, labels, threshold: float = 0.5) -> float:
    return binary_report(probabilities, labels, threshold).bac
