"""Instance-dependent estimation on local sub-datasets.

A local dataset is a waypoint plus its nearest neighbors; when all members
share one transition matrix, the global estimator applied inside the local
dataset recovers that matrix.  Rows whose class barely occurs locally are
under-determined and are completed from the global estimate by an affine
blend steered by the locally estimated prior.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from .core import EstimatorConfig, LabeledDataset, TransitionMatrix
from .knn import _unit_rows
from .seeding import derive_rng
from .solver import SolverResult, estimate_transition_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LocalDataset:
    """A center index and the member indices of its neighborhood (center included)."""

    center: int
    member_indices: np.ndarray

    def __post_init__(self):
        members = np.array(self.member_indices, dtype=np.int64)
        if np.unique(members).size != members.size:
            raise ValueError("local dataset members must be distinct")
        if self.center not in members:
            raise ValueError("local dataset must include its center")
        members.setflags(write=False)
        object.__setattr__(self, "member_indices", members)

    def __len__(self) -> int:
        return self.member_indices.size


@dataclass(frozen=True, eq=False)
class CoveragePlan:
    """Local datasets plus the set of indices they jointly cover."""

    locals: Tuple[LocalDataset, ...]
    covered: frozenset

    @classmethod
    def from_locals(cls, locals_: Sequence[LocalDataset]) -> "CoveragePlan":
        covered = frozenset(
            int(i) for loc in locals_ for i in loc.member_indices.tolist()
        )
        return cls(locals=tuple(locals_), covered=covered)


def build_local_datasets(
    dataset: LabeledDataset, local_size: int, max_rounds: int, seed: int
) -> CoveragePlan:
    """Greedy cover by nearest-neighbor balls.

    Each round picks a center uniformly among the not-yet-covered points
    (uniformly among all points once everything is covered), takes the
    ``local_size`` features closest to it (the center counts as distance
    zero), and marks them covered.  Stops after ``max_rounds`` rounds.
    """
    if not 1 <= local_size <= dataset.n:
        raise ValueError(f"local_size must lie in [1, {dataset.n}], got {local_size}")
    if max_rounds < 1:
        raise ValueError("max_rounds must be positive")
    rng = derive_rng(seed, "local-datasets")
    unit = _unit_rows(dataset.features)
    unselected = np.ones(dataset.n, dtype=bool)
    locals_: List[LocalDataset] = []
    for _ in range(max_rounds):
        remaining = np.flatnonzero(unselected)
        if remaining.size:
            center = int(rng.choice(remaining))
        else:
            center = int(rng.integers(dataset.n))
        sims = unit @ unit[center]
        # L most similar rows; ties toward the smaller index via stable sort
        order = np.lexsort((np.arange(dataset.n), -sims))
        members = np.sort(order[:local_size])
        unselected[members] = False
        locals_.append(LocalDataset(center=center, member_indices=members))
    return CoveragePlan.from_locals(locals_)


def complete_rows(
    local_t: np.ndarray, local_p: np.ndarray, global_t: np.ndarray, zeta: float
) -> np.ndarray:
    """Blend locally estimated rows with the global estimate.

    Row ``i`` becomes ``(1 - zeta + p_i) * local + (zeta - p_i) * global``
    with the weights clamped to [0, 1]; rows are renormalized to sum to one.
    A vanishing local prior hands the row to the global estimate (it carried
    no local information), a dominant one keeps the local row.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must lie in [0, 1], got {zeta}")
    w_local = np.clip(1.0 - zeta + local_p, 0.0, 1.0)
    w_global = np.clip(zeta - local_p, 0.0, 1.0)
    blended = w_local[:, None] * local_t + w_global[:, None] * global_t
    sums = blended.sum(axis=1, keepdims=True)
    if np.any(sums <= 0.0):
        raise ValueError("blend produced an empty row; check zeta and the priors")
    return blended / sums


def default_zeta(k: int) -> float:
    """1.0 up to ten classes, 0.5 beyond (larger label spaces trust locals less)."""
    return 1.0 if k <= 10 else 0.5


def estimate_local(
    dataset: LabeledDataset,
    plan: CoveragePlan,
    global_result: SolverResult,
    config: EstimatorConfig,
    zeta: float,
) -> List[Tuple[int, TransitionMatrix]]:
    """Per-center transition matrices: local estimates completed from the global one.

    Each local dataset gets its own estimator run (tuples drawn within it,
    sample size clamped to the local size, seed derived from the center), and
    each row is completed by the zeta blend above.  Local datasets with fewer
    than 3 points cannot form tuples and are skipped with a warning.  The
    sparse-prior regularizer must be enabled: local class priors are sparse
    by construction.
    """
    if config.sparse_reg_weight <= 0.0:
        raise ValueError("estimate_local requires sparse_reg_weight > 0")
    global_t = global_result.t_hat.entries
    out: List[Tuple[int, TransitionMatrix]] = []
    for loc in plan.locals:
        if len(loc) < 3:
            log.warning("skipping local dataset at center %d: only %d points", loc.center, len(loc))
            continue
        sub = dataset.subset(loc.member_indices)
        cfg = replace(
            config,
            sample_size=min(config.sample_size, sub.n),
            seed=int(derive_rng(config.seed, "local", loc.center).integers(2**63)),
        )
        result = estimate_transition_matrix(sub, cfg)
        completed = complete_rows(
            result.t_hat.entries, result.p_hat.entries, global_t, zeta
        )
        out.append((loc.center, TransitionMatrix(completed)))
    return out
