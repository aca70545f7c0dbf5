"""Nearest-neighbor search over feature representations and tuple sampling.

Distances are negative cosine similarity.  Ties are broken toward the
smaller index so that results are deterministic and golden tests stay
stable.  The search is exact everywhere: a blocked O(N^2 d) scan is the
reference implementation, and for large datasets in low dimension an exact
KD-tree path (cosine order equals Euclidean order on unit vectors) produces
the same neighbors at a fraction of the cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .core import DataError, EstimatorConfig, LabeledDataset, TupleSet
from .seeding import derive_rng

_BLOCK = 512
# KD path cutoffs: below this size the dense scan is already fast, and in
# high dimension the tree degenerates toward a linear scan anyway.
_TREE_MIN_POINTS = 4096
_TREE_MAX_DIM = 32


@dataclass(frozen=True)
class DistanceMetric:
    """Only negative cosine similarity is supported."""

    kind: str = "negative_cosine"

    def __post_init__(self):
        if self.kind != "negative_cosine":
            raise ValueError(f"unsupported metric {self.kind!r}")


def _unit_rows(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DataError(f"feature row {int(bad[0])} has zero norm")
    return features / norms[:, None]


def _two_nn_block(unit: np.ndarray, centers: np.ndarray):
    """First and second neighbors of each center against all rows of ``unit``."""
    n = unit.shape[0]
    nn1 = np.empty(centers.shape[0], dtype=np.int64)
    nn2 = np.empty(centers.shape[0], dtype=np.int64)
    for start in range(0, centers.shape[0], _BLOCK):
        idx = centers[start : start + _BLOCK]
        sims = unit[idx] @ unit.T
        rows = np.arange(idx.shape[0])
        sims[rows, idx] = -2.0  # below any cosine, excludes the center itself
        first = sims.argmax(axis=1)  # argmax takes the first occurrence: smaller index wins ties
        sims[rows, first] = -2.0
        second = sims.argmax(axis=1)
        nn1[start : start + _BLOCK] = first
        nn2[start : start + _BLOCK] = second
    return nn1, nn2


def _two_nn_tree(unit: np.ndarray):
    """Exact 2-NN of every row via a KD-tree on the unit sphere.

    Queries four candidates and re-ranks them by exact cosine with the index
    tie-break, so results match the dense scan on data in general position.
    """
    n = unit.shape[0]
    tree = cKDTree(unit)
    _, candidates = tree.query(unit, k=min(4, n))
    sims = np.einsum("nd,nkd->nk", unit, unit[candidates])
    sims[candidates == np.arange(n)[:, None]] = -2.0
    order = np.lexsort((candidates, -sims), axis=1)
    picked = np.take_along_axis(candidates, order, axis=1)
    return picked[:, 0].astype(np.int64), picked[:, 1].astype(np.int64)


class NeighborIndex:
    """Cached 2-NN of every dataset row against the full dataset."""

    def __init__(self, nn1: np.ndarray, nn2: np.ndarray):
        self.nn1 = nn1
        self.nn2 = nn2

    @classmethod
    def build(cls, dataset: LabeledDataset) -> "NeighborIndex":
        if dataset.n < 3:
            raise DataError("need at least 3 points to form 2-NN tuples")
        unit = _unit_rows(dataset.features)
        if dataset.n >= _TREE_MIN_POINTS and dataset.d <= _TREE_MAX_DIM:
            nn1, nn2 = _two_nn_tree(unit)
        else:
            nn1, nn2 = _two_nn_block(unit, np.arange(dataset.n))
        return cls(nn1, nn2)

    def tuples_for(self, centers: np.ndarray) -> np.ndarray:
        return np.column_stack((centers, self.nn1[centers], self.nn2[centers]))


def find_2nn(
    dataset: LabeledDataset,
    centers,
    metric: DistanceMetric = DistanceMetric(),
) -> TupleSet:
    """2-NN tuple of each center, searched against the whole dataset.

    For each center ``n`` returns ``(n, n1, n2)`` with ``n1`` the most
    similar other row and ``n2`` the most similar row outside ``{n, n1}``;
    equal similarities resolve to the smaller index.
    """
    del metric  # single supported metric; argument kept for the call signature
    centers = np.asarray(centers, dtype=np.int64)
    if centers.size and (centers.min() < 0 or centers.max() >= dataset.n):
        raise ValueError("center index out of range")
    if dataset.n < 3:
        raise DataError("need at least 3 points to form 2-NN tuples")
    unit = _unit_rows(dataset.features)
    nn1, nn2 = _two_nn_block(unit, centers)
    return TupleSet(np.column_stack((centers, nn1, nn2)))


def sample_tuples(
    dataset: LabeledDataset,
    config: EstimatorConfig,
    round_seed: Union[int, np.random.Generator],
    *,
    neighbors: Optional[NeighborIndex] = None,
) -> TupleSet:
    """One sampling round of 2-NN tuples.

    Overlapping mode draws ``config.sample_size`` centers uniformly without
    replacement and keeps their tuples with no disjointness guarantee.
    Disjoint mode walks a seeded random permutation of all points and greedily
    accepts a tuple only when none of its three indices has been used, so it
    may return fewer than ``sample_size`` tuples.
    """
    if config.sample_size > dataset.n:
        raise ValueError(
            f"sample_size {config.sample_size} exceeds dataset size {dataset.n}"
        )
    if isinstance(round_seed, np.random.Generator):
        rng = round_seed
    else:
        rng = derive_rng(int(round_seed), "sample-tuples")
    if neighbors is None:
        neighbors = NeighborIndex.build(dataset)

    if config.tuple_mode == "overlapping":
        centers = rng.choice(dataset.n, size=config.sample_size, replace=False)
        return TupleSet(neighbors.tuples_for(centers))

    order = rng.permutation(dataset.n)
    used = np.zeros(dataset.n, dtype=bool)
    picked = []
    for center in order:
        a, b = neighbors.nn1[center], neighbors.nn2[center]
        if used[center] or used[a] or used[b]:
            continue
        used[center] = used[a] = used[b] = True
        picked.append((center, a, b))
        if len(picked) == config.sample_size:
            break
    return TupleSet(np.array(picked, dtype=np.int64).reshape(-1, 3), disjoint=True)


def feasible_tuple_ratio(dataset: LabeledDataset, tuples: TupleSet) -> float:
    """Fraction of tuples whose three members share one clean class."""
    if dataset.clean_labels is None:
        raise DataError("feasible_tuple_ratio needs clean labels")
    if len(tuples) == 0:
        raise ValueError("tuple set is empty")
    c = dataset.clean_labels
    t = tuples.tuples
    same = (c[t[:, 0]] == c[t[:, 1]]) & (c[t[:, 0]] == c[t[:, 2]])
    return float(same.mean())
