"""Downstream demonstration: a multinomial linear classifier on noisy labels.

The representations produced by the synthetic generator are already
clusterable, so a linear softmax model suffices to show that feeding an
estimated transition matrix into forward loss correction improves learning
from noisy labels.  Forward correction pushes the model's softmax output
through the transposed matrix before taking the log loss; with the identity
matrix the corrected loop is exactly (bitwise) plain cross-entropy training,
because both run the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import LabeledDataset, TransitionMatrix
from .seeding import derive_rng

BATCH_SIZE = 128


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Softmax-linear classifier: logits = x @ weights + bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ValueError(f"inconsistent shapes: weights {w.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.logits(features).argmax(axis=1)


def accuracy(model: LinearModel, features: np.ndarray, labels: np.ndarray) -> float:
    return float((model.predict(features) == labels).mean())


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def corrected_loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    t: np.ndarray,
):
    """Mean forward-corrected log loss on a batch and its parameter gradient.

    The loss is ``-log((T' s)[y])`` with ``s`` the softmax output.  The logit
    gradient works out to ``s_k * (1 - T[k, y] / q_y)`` with
    ``q = s @ T``, which collapses to the usual ``s - onehot`` when T = I.
    """
    s = _softmax(x @ weights + bias)
    q = s @ t
    qy = q[np.arange(y.shape[0]), y]
    loss = float(-np.log(qy).mean())
    g_logits = s * (1.0 - t[:, y].T / qy[:, None])
    g_logits /= y.shape[0]
    return loss, x.T @ g_logits, g_logits.sum(axis=0)


def _train(
    dataset: LabeledDataset,
    t: np.ndarray,
    epochs: int,
    lr: float,
    seed: int,
    eval_set: Optional[Tuple[np.ndarray, np.ndarray]],
    metrics: Optional[List],
) -> LinearModel:
    rng = derive_rng(seed, "train")
    x = dataset.features
    y = dataset.noisy_labels
    n, d = x.shape
    weights = np.zeros((d, dataset.k))
    bias = np.zeros(dataset.k)
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, BATCH_SIZE):
            idx = order[start : start + BATCH_SIZE]
            loss, g_w, g_b = corrected_loss_and_grad(weights, bias, x[idx], y[idx], t)
            weights = weights - lr * g_w
            bias = bias - lr * g_b
            losses.append(loss)
        if metrics is not None:
            model = LinearModel(weights, bias)
            test_acc = (
                accuracy(model, eval_set[0], eval_set[1]) if eval_set is not None else np.nan
            )
            metrics.append((epoch, float(np.mean(losses)), test_acc))
    return LinearModel(weights, bias)


def train_ce(
    dataset: LabeledDataset,
    epochs: int,
    lr: float,
    seed: int,
    *,
    eval_set: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    metrics: Optional[List] = None,
) -> LinearModel:
    """Plain cross-entropy training on the noisy labels."""
    return _train(dataset, np.eye(dataset.k), epochs, lr, seed, eval_set, metrics)


def train_forward(
    dataset: LabeledDataset,
    t: TransitionMatrix,
    epochs: int,
    lr: float,
    seed: int,
    *,
    eval_set: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    metrics: Optional[List] = None,
) -> LinearModel:
    """Cross-entropy with forward correction through the given matrix.

    No inverse is taken, so a (near-)singular matrix is accepted.
    """
    if t.k != dataset.k:
        raise ValueError(f"matrix has k={t.k}, dataset has k={dataset.k}")
    return _train(dataset, t.entries, epochs, lr, seed, eval_set, metrics)
