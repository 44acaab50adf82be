"""Parameter store and the Adam optimiser."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 1000
    epochs: int = 100
    patience: int = 10
    class_weights: tuple[float, ...] | None = None
    seed: int = 0
    loss: str = "BM"
    prior_beta: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")
        if self.loss not in ("SM", "BM"):
            raise ValueError(f"unknown loss {self.loss!r}")


class ModelParams:
    """Ordered named tensors plus per-parameter Adam moments.

    Iteration order is insertion order; checkpoints serialise in that order.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self.tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        for name, arr in (arrays or {}).items():
            self.add(name, arr)

    def add(self, name: str, arr) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.array(arr, dtype=np.float64), requires_grad=True)
        self.tensors[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def n_values(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self.tensors.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def restore(self, arrays: Mapping[str, np.ndarray]) -> None:
        for k, arr in arrays.items():
            self.tensors[k].data = np.array(arr, dtype=np.float64)

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors.values()]) if self.tensors else np.zeros(0)


def adam_step(params: ModelParams, grads: Mapping[str, np.ndarray], config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place."""
    params.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**params.step
    c2 = 1.0 - b2**params.step
    for name, t in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != t.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {t.data.shape}")
        m = params.m[name]
        v = params.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data = t.data - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
