"""Adaptive-rate gradient descent with dense, row-sparse, and index-sparse steps.

Each parameter keeps an accumulator of squared gradients; the effective step
for a coordinate is eta / sqrt(accumulator + eps). Sparse variants touch only
the rows or flat indexes present in the update, which is what keeps training
tractable when the parameter is a large embedding table or a motif weight
vector with few active features per sample.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-8


class AdaGrad:
    """Per-array adaptive step-size state. One instance per trainable array."""

    def __init__(self, shape: tuple[int, ...], eta: float):
        if eta <= 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.eta = eta
        self.acc = np.zeros(shape, dtype=np.float64)

    def step(self, param: np.ndarray, grad: np.ndarray) -> None:
        """Dense update of the whole array in place."""
        self.acc += grad * grad
        param -= self.eta * grad / np.sqrt(self.acc + _EPS)

    def step_rows(self, param: np.ndarray, rows: np.ndarray, grads: np.ndarray) -> None:
        """Update selected leading-axis slices of a parameter.

        rows may repeat; repeated rows are accumulated first so each slice is
        stepped once with the summed gradient. grads has shape
        (len(rows), *param.shape[1:]).
        """
        rows = np.asarray(rows)
        uniq, inverse = np.unique(rows, return_inverse=True)
        summed = np.zeros((len(uniq),) + param.shape[1:], dtype=np.float64)
        np.add.at(summed, inverse, grads)
        self.acc[uniq] += summed * summed
        param[uniq] -= self.eta * summed / np.sqrt(self.acc[uniq] + _EPS)

    def step_indexes(self, param: np.ndarray, idx: np.ndarray, grads: np.ndarray) -> None:
        """Update selected flat coordinates of a 1-d parameter."""
        idx = np.asarray(idx)
        uniq, inverse = np.unique(idx, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=np.float64)
        np.add.at(summed, inverse, grads)
        self.acc[uniq] += summed * summed
        param[uniq] -= self.eta * summed / np.sqrt(self.acc[uniq] + _EPS)
