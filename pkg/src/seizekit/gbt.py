"""Gradient-boosted regression trees with logistic loss.

Trees are grown depth-first with exact greedy splits and Newton leaf values
``-G/H``; each tree is added with a fixed shrinkage.  Regularisation is
limited to depth, shrinkage and a minimum child hessian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .nn.evaluation import balanced_accuracy

GBT_FORMAT = "seizekit-gbt"


@dataclass(frozen=True)
class GbtConfig:
    max_depth: int = 3
    n_rounds: int = 100
    shrinkage: float = 0.1
    min_child_weight: float = 1e-6

    def __post_init__(self):
        if self.max_depth < 1 or self.n_rounds < 0:
            raise ValueError("max_depth must be >= 1 and n_rounds >= 0")
        if not 0 < self.shrinkage <= 1:
            raise ValueError("shrinkage must lie in (0, 1]")


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf.  Samples with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def depth(self) -> int:
        def d(i):
            return 0 if self.feature[i] < 0 else 1 + max(d(self.left[i]), d(self.right[i]))

        return d(0)

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            go_left = x[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


@dataclass
class GbtModel:
    trees: list[Tree] = field(default_factory=list)
    shrinkage: float = 0.1
    base_score: float = 0.0
    max_depth: int = 3
    train_loss: list[float] = field(default_factory=list)

    def raw_score(self, x: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.full(x.shape[0], self.base_score)
        for tree in self.trees[:n_trees]:
            out += self.shrinkage * tree.predict(x)
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": GBT_FORMAT,
                "version": 1,
                "base_score": self.base_score,
                "shrinkage": self.shrinkage,
                "max_depth": self.max_depth,
                "trees": [t.to_dict() for t in self.trees],
            },
            indent=1,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GbtModel":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        if d.get("format") != GBT_FORMAT or d.get("version") != 1:
            raise ValueError(f"{path} is not a version-1 boosted-tree model")
        return cls(
            [Tree.from_dict(t) for t in d["trees"]], float(d["shrinkage"]), float(d["base_score"]), int(d["max_depth"])
        )


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def logistic_loss(y: np.ndarray, raw: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def predict_proba(model: GbtModel, x) -> np.ndarray:
    return sigmoid(model.raw_score(x))


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, min_child_weight: float):
    n, n_feat = x.shape
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    gl = np.cumsum(g[order], axis=0)[:-1]
    hl = np.cumsum(h[order], axis=0)[:-1]
    G, H = g.sum(), h.sum()
    gr, hr = G - gl, H - hl
    valid = (xs[:-1] < xs[1:]) & (hl >= min_child_weight) & (hr >= min_child_weight)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(valid, gl * gl / hl + gr * gr / hr - G * G / H, -np.inf)
    flat = int(np.argmax(gain.T))  # feature-major, so ties go to the lowest feature index
    f, i = divmod(flat, n - 1)
    best = gain[i, f]
    if not np.isfinite(best):
        return None
    lo, hi = xs[i, f], xs[i + 1, f]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return f, thr, best


def build_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, config: GbtConfig) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        H = h[idx].sum()
        value.append(float(-g[idx].sum() / H) if H > 0 else 0.0)
        return len(feature) - 1

    def grow(idx, depth):
        if depth >= config.max_depth or idx.size < 2:
            return leaf(idx)
        split = _best_split(x[idx], g[idx], h[idx], config.min_child_weight)
        if split is None or split[2] <= 1e-12:
            return leaf(idx)
        f, thr, _ = split
        node = len(feature)
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        mask = x[idx, f] <= thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value),
    )


def train_gbt(x, y, config: GbtConfig = GbtConfig()) -> GbtModel:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rate = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    model = GbtModel(shrinkage=config.shrinkage, base_score=float(np.log(rate / (1 - rate))), max_depth=config.max_depth)
    raw = np.full(y.size, model.base_score)
    model.train_loss.append(logistic_loss(y, raw))
    for _ in range(config.n_rounds):
        p = sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        tree = build_tree(x, g, h, config)
        model.trees.append(tree)
        raw = raw + config.shrinkage * tree.predict(x)
        model.train_loss.append(logistic_loss(y, raw))
    return model


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fold = np.empty(y.size, dtype=np.int64)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = np.arange(idx.size) % k
    return fold


def grid_search(
    x, y, depths=(2, 3, 4), rounds=(50, 100, 200), n_folds: int = 4, base: GbtConfig = GbtConfig(), seed: int = 0
):
    """Pick depth and round count by mean k-fold CV balanced accuracy.

    One model of ``max(rounds)`` trees is fitted per depth and fold; shorter
    ensembles are its prefixes.  Ties go to the earlier grid entry.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    folds = stratified_folds(y, n_folds, seed)
    n_max = max(rounds)
    scores: dict[tuple[int, int], float] = {}
    for depth in depths:
        per_fold = {r: [] for r in rounds}
        for f in range(n_folds):
            tr, te = folds != f, folds == f
            model = train_gbt(x[tr], y[tr], replace(base, max_depth=depth, n_rounds=n_max))
            for r in rounds:
                per_fold[r].append(balanced_accuracy(sigmoid(model.raw_score(x[te], r)), y[te]))
        for r in rounds:
            scores[(depth, r)] = float(np.mean(per_fold[r]))
    best = max(product(depths, rounds), key=lambda k: (scores[k], -depths.index(k[0]), -rounds.index(k[1])))
    return replace(base, max_depth=best[0], n_rounds=best[1]), scores
