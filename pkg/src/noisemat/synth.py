"""Synthetic laboratory: clusterable features and ground-truth noise injection.

Features are unit vectors drawn around well-separated cluster centers on the
sphere, which makes neighbor-label agreement hold by construction and gives
every generated dataset an exactly known transition matrix (global, or per
instance for the feature-dependent generator).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import (
    GenerationError,
    LabeledDataset,
    PriorVector,
    TransitionMatrix,
)
from .seeding import derive_rng

_CENTER_TRIES_PER_CLUSTER = 1000


@dataclass(frozen=True)
class ClusterSpec:
    """Geometry of a synthetic clusterable dataset.

    ``separation`` is the minimum cosine margin between cluster centers
    (pairwise cosine similarity stays below ``1 - separation``); ``spread``
    is the within-cluster perturbation scale.  Clusters of one class need
    not be adjacent: with ``clusters_per_class > 1`` a class occupies
    several disjoint regions.
    """

    k: int
    dim: int
    points: int
    clusters_per_class: int = 1
    separation: float = 0.3
    spread: float = 0.02
    prior: Optional[PriorVector] = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need at least two classes")
        if self.dim < 2:
            raise ValueError("need dim >= 2")
        if self.points < 1:
            raise ValueError("points must be positive")
        if self.clusters_per_class < 1:
            raise ValueError("clusters_per_class must be >= 1")
        if not 0.0 < self.separation < 2.0:
            raise ValueError("separation must lie in (0, 2)")
        if self.spread <= 0.0:
            raise ValueError("spread must be positive")
        if self.separation <= 3.0 * self.spread:
            raise ValueError(
                "separation must exceed 3 * spread to keep neighbor labels clusterable"
            )
        if self.prior is not None and self.prior.k != self.k:
            raise ValueError("prior length must equal k")


def _sample_centers(rng: np.random.Generator, spec: ClusterSpec) -> np.ndarray:
    """Unit cluster centers with pairwise cosine <= 1 - separation (rejection)."""
    total = spec.k * spec.clusters_per_class
    centers = np.empty((total, spec.dim))
    have = 0
    budget = _CENTER_TRIES_PER_CLUSTER * total
    while have < total and budget > 0:
        budget -= 1
        v = rng.standard_normal(spec.dim)
        v /= np.linalg.norm(v)
        if have == 0 or np.max(centers[:have] @ v) <= 1.0 - spec.separation:
            centers[have] = v
            have += 1
    if have < total:
        raise GenerationError(
            f"could not place {total} cluster centers at separation "
            f"{spec.separation}; lower the separation or raise dim"
        )
    return centers


def generate_features(spec: ClusterSpec, seed: int) -> LabeledDataset:
    """Clusterable dataset with clean labels; noisy labels start equal to clean."""
    rng = derive_rng(seed, "features")
    centers = _sample_centers(rng, spec)
    prior = spec.prior.entries if spec.prior is not None else np.full(spec.k, 1.0 / spec.k)
    classes = rng.choice(spec.k, size=spec.points, p=prior)
    which = rng.integers(spec.clusters_per_class, size=spec.points)
    base = centers[classes * spec.clusters_per_class + which]
    feats = base + spec.spread * rng.standard_normal((spec.points, spec.dim))
    norms = np.linalg.norm(feats, axis=1)
    feats /= norms[:, None]
    return LabeledDataset(feats, classes.copy(), spec.k, clean_labels=classes)


@dataclass(frozen=True)
class NoiseSpec:
    """Which noise to inject and at what overall rate."""

    kind: str = "symmetric"
    eta: float = 0.2
    matrix: Optional[TransitionMatrix] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("symmetric", "instance_dependent", "explicit_matrix"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if self.kind == "explicit_matrix" and self.matrix is None:
            raise ValueError("explicit_matrix noise needs a matrix")


def apply_noise(dataset: LabeledDataset, spec: NoiseSpec):
    """Dispatch on the noise kind; returns (noisy dataset, ground truth)."""
    if spec.kind == "symmetric":
        return apply_symmetric_noise(dataset, spec.eta, spec.seed)
    if spec.kind == "instance_dependent":
        return apply_instance_noise(dataset, spec.eta, spec.seed)
    return apply_matrix_noise(dataset, spec.matrix, spec.seed), spec.matrix


def apply_symmetric_noise(
    dataset: LabeledDataset, eta: float, seed: int
) -> Tuple[LabeledDataset, TransitionMatrix]:
    """Flip each clean label w.p. ``eta`` to a uniformly chosen other class."""
    if dataset.clean_labels is None:
        raise ValueError("symmetric noise needs clean labels")
    truth = TransitionMatrix.symmetric(dataset.k, eta)
    return apply_matrix_noise(dataset, truth, seed), truth


def apply_matrix_noise(
    dataset: LabeledDataset, t: TransitionMatrix, seed: int
) -> LabeledDataset:
    """Redraw each noisy label from the row of ``t`` for its clean class."""
    if dataset.clean_labels is None:
        raise ValueError("matrix noise needs clean labels")
    if t.k != dataset.k:
        raise ValueError(f"matrix has k={t.k}, dataset has k={dataset.k}")
    rng = derive_rng(seed, "matrix-noise")
    rows = t.entries[dataset.clean_labels]
    noisy = _sample_rows(rng, rows)
    return dataset.with_noisy_labels(noisy)


def apply_instance_noise(
    dataset: LabeledDataset, eta: float, seed: int
) -> Tuple[LabeledDataset, np.ndarray]:
    """Feature-dependent label noise.

    Per-instance flip rates ``q_n`` are drawn from a normal distribution with
    mean ``eta`` and standard deviation 0.1 truncated to [0, 1]; one Gaussian
    projection matrix ``W`` (dim x k) determines, through a softmax of
    ``x_n @ W`` with the clean class masked out, how the flip mass ``q_n``
    spreads over wrong classes.  Identical feature vectors therefore receive
    identical flip distributions.  For ``eta > 0.5`` each off-diagonal entry
    is capped at 0.9 times the diagonal, redistributing the excess over the
    other off-diagonal entries, so that rows stay informative.

    Returns the noisy dataset together with the exact length-k distribution
    each label was drawn from (an (n, k) array), which is the per-instance
    ground truth row for its clean class.
    """
    if dataset.clean_labels is None:
        raise ValueError("instance-dependent noise needs clean labels")
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    n, k = dataset.n, dataset.k
    clean = dataset.clean_labels
    rows = np.zeros((n, k))
    if eta == 0.0:
        # Noise rate zero means no flips at all; the truncated draw would
        # otherwise put a small positive mass on every instance.
        rows[np.arange(n), clean] = 1.0
        return dataset.with_noisy_labels(clean.copy()), rows

    rng = derive_rng(seed, "instance-noise")
    q = _truncated_normal(rng, eta, 0.1, 0.0, 1.0, n)
    w = rng.standard_normal((dataset.d, k))
    scores = dataset.features @ w
    scores[np.arange(n), clean] = -np.inf
    scores -= scores.max(axis=1, keepdims=True)
    expd = np.exp(scores)
    soft = expd / expd.sum(axis=1, keepdims=True)
    rows = q[:, None] * soft
    rows[np.arange(n), clean] = 1.0 - q
    if eta > 0.5:
        rows = _cap_off_diagonal(rows, clean)
    noisy = _sample_rows(rng, rows)
    return dataset.with_noisy_labels(noisy), rows


def apply_soft_clusterability(
    dataset: LabeledDataset, e: float, seed: int
) -> LabeledDataset:
    """Redraw each point's effective clean class before noise injection.

    Each label independently stays w.p. ``1 - (k - 1) e`` and moves to each
    other class w.p. ``e``, which breaks exact neighbor-label agreement by a
    controlled amount.  Apply this between feature generation and noise
    injection; both clean and noisy labels are replaced by the redrawn class.
    """
    if dataset.clean_labels is None:
        raise ValueError("soft clusterability needs clean labels")
    k = dataset.k
    if not 0.0 <= e < 1.0 / k:
        raise ValueError(f"perturbation must lie in [0, 1/k), got {e}")
    if e == 0.0:
        return dataset
    rng = derive_rng(seed, "soft-clusterability")
    t_soft = np.full((k, k), e)
    np.fill_diagonal(t_soft, 1.0 - (k - 1) * e)
    redrawn = _sample_rows(rng, t_soft[dataset.clean_labels])
    return LabeledDataset(dataset.features, redrawn.copy(), k, clean_labels=redrawn)


def _sample_rows(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray:
    """Draw one class index per row of a row-stochastic array."""
    cum = np.cumsum(rows, axis=1)
    cum[:, -1] = 1.0  # guard against round-off at the top end
    u = rng.random(rows.shape[0])
    return (u[:, None] < cum).argmax(axis=1).astype(np.int64)


def _truncated_normal(
    rng: np.random.Generator, mean: float, sd: float, low: float, high: float, size: int
) -> np.ndarray:
    """Rejection sampling from a normal restricted to [low, high]."""
    out = np.empty(size)
    have = 0
    while have < size:
        draw = rng.normal(mean, sd, size=max(size - have, 64) * 2)
        keep = draw[(draw >= low) & (draw <= high)]
        take = min(keep.size, size - have)
        out[have : have + take] = keep[:take]
        have += take
    return out


def _cap_off_diagonal(rows: np.ndarray, clean: np.ndarray) -> np.ndarray:
    """Bound each off-diagonal entry by 0.9 x the diagonal entry.

    Trimmed mass is redistributed proportionally over the off-diagonal
    entries still under the cap (entries already at the cap receive nothing,
    so the capped set only grows and the loop terminates).  When every
    off-diagonal entry sits at the cap and mass is still left over, the whole
    row is rescaled, which keeps the off-to-diagonal ratios at 0.9.
    """
    n, k = rows.shape
    out = rows.copy()
    idx = np.arange(n)
    cap = 0.9 * out[idx, clean]
    masked = out.copy()
    masked[idx, clean] = -1.0
    needs_work = np.flatnonzero(masked.max(axis=1) > cap + 1e-15)
    for row in needs_work:
        r = out[row]
        c = cap[row]
        off = np.ones(k, dtype=bool)
        off[clean[row]] = False
        for _ in range(k):
            over = off & (r > c + 1e-15)
            if not over.any():
                break
            excess = float((r[over] - c).sum())
            r[over] = c
            room = off & (r < c - 1e-15)
            total = float(r[room].sum())
            if total <= 0.0:
                break
            r[room] += excess * r[room] / total
        if abs(r.sum() - 1.0) > 1e-12:
            r /= r.sum()
    return out


def empirical_confusion(dataset: LabeledDataset) -> np.ndarray:
    """Row-normalized clean-vs-noisy count matrix (the observed flip rates)."""
    if dataset.clean_labels is None:
        raise ValueError("empirical confusion needs clean labels")
    k = dataset.k
    counts = np.bincount(
        dataset.clean_labels * k + dataset.noisy_labels, minlength=k * k
    ).reshape(k, k).astype(float)
    sums = counts.sum(axis=1, keepdims=True)
    sums[sums == 0.0] = 1.0
    return counts / sums


def effective_global_truth(truth_rows: np.ndarray, clean: np.ndarray, k: int) -> np.ndarray:
    """Average per-instance rows per clean class: the scorable global matrix.

    Row ``i`` is the mean flip distribution over instances of clean class
    ``i``; a class absent from the data keeps a uniform placeholder row.
    """
    out = np.full((k, k), 1.0 / k)
    for i in range(k):
        mask = clean == i
        if mask.any():
            out[i] = truth_rows[mask].mean(axis=0)
    return out
