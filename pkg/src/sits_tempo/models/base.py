"""The :class:`Model` wrapper shared by every architecture."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..numerics import Module, Tensor
from ..numerics.layers import GRU


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index (numpy's own rule, made explicit)."""
    scores = np.asarray(scores)
    return np.argmax(scores, axis=-1)


def _leaves(module):
    for child in module.children():
        if isinstance(child, GRU) or not any(True for _ in child.children()):
            yield child
        else:
            yield from _leaves(child)


class Model(Module):
    """A classifier over ``[batch, T, C]`` inputs emitting ``[batch, N]`` scores.

    Subclasses set ``head`` (``"softmax"`` or ``"sigmoid"``) and implement
    :meth:`forward`. The matching loss is ``cross_entropy`` for softmax heads
    and ``mse`` for the sigmoid head.
    """

    head = "softmax"

    def __init__(self, config, t: int, c: int, n: int, seed: int = 0):
        self.config = config
        self.input_signature = (int(t), int(c))
        self.n_classes = int(n)
        self.seed = int(seed)

    @property
    def loss_name(self) -> str:
        return "cross_entropy" if self.head == "softmax" else "mse"

    @property
    def layers(self) -> list:
        """Leaf layers in construction order; a GRU counts as one layer."""
        return list(_leaves(self))

    def reseed(self, seed: int):
        """Fresh dropout stream; weights are untouched."""
        self.set_rng(np.random.default_rng([int(seed), 1]))

    def check_input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        t, c = self.input_signature
        if x.ndim != 3 or x.shape[1:] != (t, c):
            raise DimensionError(f"{type(self).__name__} expects input [batch, {t}, {c}], got {list(x.shape)}")
        return x

    def predict_proba(self, x, batch_size: int = 1024) -> np.ndarray:
        """Eval-mode scores for a whole array, without recording anything."""
        previous = self.mode
        self.eval()
        try:
            x = np.asarray(x, dtype=np.float64)
            outs = [self(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)]
        finally:
            if previous == "train":
                self.train()
        if not outs:
            return np.zeros((0, self.n_classes))
        return np.concatenate(outs, axis=0)

    def predict(self, x, batch_size: int = 1024) -> np.ndarray:
        return argmax_lowest(self.predict_proba(x, batch_size))

    def __repr__(self):
        t, c = self.input_signature
        return f"{type(self).__name__}(T={t}, C={c}, N={self.n_classes}, {self.config.label()})"
