"""Consensus statistics: empirical counting and the exact forward model.

The forward model maps a transition matrix and clean prior to the exact
consensus probabilities and serves as the oracle against which the solver
and the empirical counters are tested:

    c1       = T' p
    c2[r]    = (T o T_r)' p          T_r = columns of T shifted left by r
    c3[r, s] = (T o T_r o T_s)' p

with ``o`` the entrywise product and ``'`` the transpose.  Internally the
same quantities are handled as joint distributions over label pairs and
triples; ``(r, i)`` indexing and joint ``(i, j)`` indexing are bijective via
``j = (i + r) % k``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import (
    ConsensusStats,
    LabeledDataset,
    PriorVector,
    TransitionMatrix,
    TupleSet,
    as_matrix,
    as_prior,
)

_shift_cache: dict = {}


def _shift_indices(k: int):
    """Index arrays mapping joint (i, j[, l]) layouts to shift (r[, s], i) layouts."""
    if k not in _shift_cache:
        i = np.arange(k)
        r = np.arange(k)
        # pair[r, i] = (i, (i + r) % k)
        pair_i = np.broadcast_to(i, (k, k))
        pair_j = (i[None, :] + r[:, None]) % k
        # triple[r, s, i] = (i, (i + r) % k, (i + s) % k)
        trip_i = np.broadcast_to(i, (k, k, k))
        trip_j = np.broadcast_to(((i[None, :] + r[:, None]) % k)[:, None, :], (k, k, k))
        trip_l = np.broadcast_to(((i[None, :] + r[:, None]) % k)[None, :, :], (k, k, k))
        _shift_cache[k] = (pair_i, pair_j, trip_i, trip_j, trip_l)
    return _shift_cache[k]


def joint_to_shift(joint2: np.ndarray, joint3: np.ndarray):
    """Reindex joint pair/triple distributions into shift-indexed c2/c3 arrays."""
    k = joint2.shape[0]
    pair_i, pair_j, trip_i, trip_j, trip_l = _shift_indices(k)
    c2 = joint2[pair_i, pair_j]
    c3 = joint3[trip_i, trip_j, trip_l]
    return c2, c3


def shift_to_joint(stats: ConsensusStats):
    """Inverse of :func:`joint_to_shift` applied to a ConsensusStats value."""
    k = stats.k
    pair_i, pair_j, trip_i, trip_j, trip_l = _shift_indices(k)
    joint2 = np.empty((k, k))
    joint2[pair_i, pair_j] = stats.c2
    joint3 = np.empty((k, k, k))
    joint3[trip_i, trip_j, trip_l] = stats.c3
    return np.array(stats.c1), joint2, joint3


def count_consensus(dataset: LabeledDataset, tuples: TupleSet) -> ConsensusStats:
    """Empirical consensus frequencies over a tuple sample.

    Counts are accumulated as integers and divided once at the end, so large
    tuple sets incur no floating-point drift and sharded counting merged by
    addition is bit-identical to the sequential result.
    """
    m = len(tuples)
    if m == 0:
        raise ValueError("tuple set is empty")
    k = dataset.k
    y = dataset.noisy_labels
    t = tuples.tuples
    y0, y1, y2 = y[t[:, 0]], y[t[:, 1]], y[t[:, 2]]
    flat = (y0 * k + y1) * k + y2
    joint3_counts = np.bincount(flat, minlength=k * k * k).reshape(k, k, k)
    joint2_counts = joint3_counts.sum(axis=2)
    c1 = joint3_counts.sum(axis=(1, 2)) / m
    c2, c3 = joint_to_shift(joint2_counts / m, joint3_counts / m)
    return ConsensusStats(k=k, c1=c1, c2=c2, c3=c3, count=m)


def average_rounds(stats_list: Sequence[ConsensusStats], *, weighted: bool = False) -> ConsensusStats:
    """Entrywise mean of per-round statistics.

    Rounds are weighted equally by default even when they carry different
    tuple counts; ``weighted=True`` switches to a count-weighted mean.
    """
    if not stats_list:
        raise ValueError("stats_list is empty")
    k = stats_list[0].k
    if any(s.k != k for s in stats_list):
        raise ValueError("all statistics must share one class count")
    if weighted:
        if any(s.count is None for s in stats_list):
            raise ValueError("weighted averaging needs per-round tuple counts")
        w = np.array([s.count for s in stats_list], dtype=float)
        w /= w.sum()
    else:
        w = np.full(len(stats_list), 1.0 / len(stats_list))
    c1 = sum(wi * s.c1 for wi, s in zip(w, stats_list))
    c2 = sum(wi * s.c2 for wi, s in zip(w, stats_list))
    c3 = sum(wi * s.c3 for wi, s in zip(w, stats_list))
    total = sum(s.count for s in stats_list if s.count is not None) or None
    return ConsensusStats(k=k, c1=c1, c2=c2, c3=c3, count=total)


def _joint_moments(t: np.ndarray, p: np.ndarray):
    weighted = t * p[:, None]
    c1 = t.T @ p
    joint2 = weighted.T @ t
    joint3 = np.einsum("ai,aj,al->ijl", weighted, t, t, optimize=True)
    return c1, joint2, joint3


def forward_model(t: TransitionMatrix, p: PriorVector) -> ConsensusStats:
    """Exact consensus probabilities implied by a transition matrix and prior."""
    tm = as_matrix(t)
    pv = as_prior(p)
    if tm.shape[0] != pv.shape[0]:
        raise ValueError(f"dimension mismatch: T is {tm.shape}, p has length {pv.shape[0]}")
    c1, joint2, joint3 = _joint_moments(tm, pv)
    c2, c3 = joint_to_shift(joint2, joint3)
    return ConsensusStats(k=tm.shape[0], c1=c1, c2=c2, c3=c3)


def forward_model_soft(
    t: TransitionMatrix, p: PriorVector, t_soft: TransitionMatrix
) -> ConsensusStats:
    """Forward model under relaxed neighbor agreement.

    ``t_soft[i, j]`` is the probability that a neighbor's true class is ``j``
    when the center's true class is ``i``; the neighbor label columns then see
    ``t_soft @ T`` instead of ``T``.  With ``t_soft`` the identity this
    reduces exactly to :func:`forward_model`.
    """
    tm = as_matrix(t)
    pv = as_prior(p)
    ts = as_matrix(t_soft)
    if tm.shape != ts.shape or tm.shape[0] != pv.shape[0]:
        raise ValueError("t, p and t_soft must share one class count")
    b = ts @ tm
    weighted = tm * pv[:, None]
    c1 = tm.T @ pv
    joint2 = weighted.T @ b
    joint3 = np.einsum("ai,aj,al->ijl", weighted, b, b, optimize=True)
    c2, c3 = joint_to_shift(joint2, joint3)
    return ConsensusStats(k=tm.shape[0], c1=c1, c2=c2, c3=c3)
