"""Core domain types and matrix operations shared by every other module.

Conventions used throughout the package:

* class indices are 0-based and live in ``range(k)``,
* a transition matrix ``T`` is row-stochastic with ``T[i, j]`` the
  probability that a clean label ``i`` is observed as noisy label ``j``,
* cyclic shifts use ``(i + r) % k`` arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

ROW_SUM_TOL = 1e-9
SUM_TOL = 1e-6

MatrixLike = Union["TransitionMatrix", np.ndarray, Sequence[Sequence[float]]]


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class DataError(ValueError):
    """Input data violates a documented precondition."""


class GenerationError(RuntimeError):
    """Synthetic generation could not satisfy the requested geometry."""


class NumericalError(RuntimeError):
    """An optimization step produced non-finite values."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_matrix(t: MatrixLike) -> np.ndarray:
    """Return the underlying 2-D float array of a matrix-like argument."""
    if isinstance(t, TransitionMatrix):
        return t.entries
    m = np.asarray(t, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic K x K matrix; entry (i, j) = P(noisy = j | clean = i)."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"transition matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("transition matrix entries must be finite")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise ValueError("transition matrix entries must lie in [0, 1]")
        row_err = np.abs(m.sum(axis=1) - 1.0)
        if np.any(row_err > ROW_SUM_TOL):
            bad = int(np.argmax(row_err))
            raise ValueError(
                f"row {bad} sums to {m[bad].sum():.12g}, expected 1 within {ROW_SUM_TOL}"
            )
        object.__setattr__(self, "entries", _freeze(m))

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, k: int) -> "TransitionMatrix":
        return cls(np.eye(k))

    @classmethod
    def symmetric(cls, k: int, eta: float) -> "TransitionMatrix":
        """Uniform off-diagonal matrix: diagonal 1 - eta, off-diagonals eta / (k - 1)."""
        if not 0.0 <= eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {eta}")
        if k < 2:
            raise ValueError("symmetric noise needs k >= 2")
        m = np.full((k, k), eta / (k - 1))
        np.fill_diagonal(m, 1.0 - eta)
        return cls(m)


@dataclass(frozen=True, eq=False)
class PriorVector:
    """Length-K probability vector of clean class priors."""

    entries: np.ndarray

    def __post_init__(self):
        v = np.array(self.entries, dtype=float)
        if v.ndim != 1:
            raise ValueError(f"prior must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("prior entries must be finite")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("prior entries must lie in [0, 1]")
        if abs(v.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"prior sums to {v.sum():.12g}, expected 1 within {ROW_SUM_TOL}")
        object.__setattr__(self, "entries", _freeze(v))

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def uniform(cls, k: int) -> "PriorVector":
        return cls(np.full(k, 1.0 / k))


def as_prior(p: Union[PriorVector, np.ndarray, Sequence[float]]) -> np.ndarray:
    if isinstance(p, PriorVector):
        return p.entries
    return PriorVector(np.asarray(p, dtype=float)).entries


@dataclass(frozen=True, eq=False)
class ConsensusStats:
    """Label-agreement statistics of a point and its two nearest neighbors.

    ``c1[i]``        P(center label = i)
    ``c2[r, i]``     P(center = i, first neighbor = (i + r) % k)
    ``c3[r, s, i]``  P(center = i, first neighbor = (i + r) % k,
                       second neighbor = (i + s) % k)

    Each order is a complete distribution over its outcomes, so the entries
    of ``c1``, ``c2`` and ``c3`` each sum to 1.
    """

    k: int
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    count: Optional[int] = None  # tuples behind an empirical estimate

    def __post_init__(self):
        k = self.k
        c1 = np.array(self.c1, dtype=float)
        c2 = np.array(self.c2, dtype=float)
        c3 = np.array(self.c3, dtype=float)
        if c1.shape != (k,) or c2.shape != (k, k) or c3.shape != (k, k, k):
            raise ValueError(
                f"inconsistent shapes for k={k}: {c1.shape}, {c2.shape}, {c3.shape}"
            )
        for name, arr in (("c1", c1), ("c2", c2), ("c3", c3)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must be finite")
            if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            if abs(arr.sum() - 1.0) > SUM_TOL:
                raise ValueError(f"{name} sums to {arr.sum():.12g}, expected 1")
        object.__setattr__(self, "c1", _freeze(c1))
        object.__setattr__(self, "c2", _freeze(c2))
        object.__setattr__(self, "c3", _freeze(c3))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix with noisy labels and, for synthetic data, hidden clean labels."""

    features: np.ndarray
    noisy_labels: np.ndarray
    k: int
    clean_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        y = np.array(self.noisy_labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if y.shape != (x.shape[0],):
            raise ValueError("noisy_labels length must match the feature row count")
        if y.size and (y.min() < 0 or y.max() >= self.k):
            raise ValueError(f"noisy labels must lie in [0, {self.k})")
        object.__setattr__(self, "features", _freeze(x))
        object.__setattr__(self, "noisy_labels", _freeze(y))
        if self.clean_labels is not None:
            c = np.array(self.clean_labels, dtype=np.int64)
            if c.shape != y.shape:
                raise ValueError("clean_labels must have the same length as noisy_labels")
            if c.size and (c.min() < 0 or c.max() >= self.k):
                raise ValueError(f"clean labels must lie in [0, {self.k})")
            object.__setattr__(self, "clean_labels", _freeze(c))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_noisy_labels(self, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features, labels, self.k, self.clean_labels)

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return LabeledDataset(self.features[idx], self.noisy_labels[idx], self.k, clean)


@dataclass(frozen=True, eq=False)
class TupleSet:
    """Index triples (center, nn1, nn2); optionally pairwise disjoint."""

    tuples: np.ndarray
    disjoint: bool = False

    def __post_init__(self):
        t = np.array(self.tuples, dtype=np.int64)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"tuples must have shape (m, 3), got {t.shape}")
        if t.size:
            same = (t[:, 0] == t[:, 1]) | (t[:, 0] == t[:, 2]) | (t[:, 1] == t[:, 2])
            if np.any(same):
                raise ValueError(f"tuple {int(np.argmax(same))} has repeated indices")
            if self.disjoint:
                flat = t.ravel()
                if np.unique(flat).size != flat.size:
                    raise ValueError("disjoint tuple set reuses an index")
        object.__setattr__(self, "tuples", _freeze(t))

    def __len__(self) -> int:
        return self.tuples.shape[0]


@dataclass(frozen=True)
class EstimatorConfig:
    """Hyper-parameters of the consensus estimator and its solver.

    ``rounds`` and ``sample_size`` control the sampling stage (number of
    counting rounds and centers per round); the remaining fields control the
    optimizer.  ``sparse_reg_weight`` > 0 adds the sparse-prior regularizer
    used for small local datasets; 0 disables it.
    """

    rounds: int = 50
    sample_size: int = 15000
    max_iters: int = 1500
    learning_rate: float = 0.1
    seed: int = 0
    tuple_mode: str = "overlapping"
    sparse_reg_weight: float = 0.0
    sparse_reg_epsilon: float = 1e-8

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError(f"rounds must be positive, got {self.rounds}")
        if self.sample_size < 1:
            raise ConfigError(f"sample_size must be positive, got {self.sample_size}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be positive, got {self.max_iters}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.tuple_mode not in ("overlapping", "disjoint"):
            raise ConfigError(f"unknown tuple_mode {self.tuple_mode!r}")
        if self.sparse_reg_weight < 0:
            raise ConfigError("sparse_reg_weight must be nonnegative")
        if not self.sparse_reg_epsilon > 0:
            raise ConfigError("sparse_reg_epsilon must be positive")


def cyclic_shift_matrix(t: MatrixLike, r: int) -> np.ndarray:
    """Shift every column of ``t`` cyclically to the left by ``r`` positions.

    The result satisfies ``out[i, j] = t[i, (j + r) % k]`` and equals the
    matrix product of ``t`` with the cyclic permutation matrix of shift ``r``.
    """
    m = as_matrix(t)
    k = m.shape[1]
    if not 0 <= r < k:
        raise ValueError(f"shift must lie in [0, {k}), got {r}")
    return np.roll(m, -r, axis=1)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the structural checks on a candidate transition matrix."""

    row_stochastic: bool
    max_row_sum_error: float
    non_informative_rows: tuple
    smallest_singular_value: float
    singular: bool

    @property
    def informative(self) -> bool:
        return not self.non_informative_rows

    @property
    def ok(self) -> bool:
        return self.row_stochastic and self.informative and not self.singular


def validate(t: MatrixLike, *, singular_tol: float = 1e-6) -> ValidationReport:
    """Report (rather than reject) structural problems of a transition matrix.

    Flags rows that do not sum to one, rows whose diagonal entry is not
    strictly dominant, and near-singularity of the whole matrix (smallest
    singular value below ``singular_tol``).
    """
    m = as_matrix(t)
    k = m.shape[0]
    row_sum_err = float(np.max(np.abs(m.sum(axis=1) - 1.0))) if k else 0.0
    non_informative = []
    for i in range(k):
        off = np.delete(m[i], i)
        if off.size and m[i, i] <= off.max():
            non_informative.append(i)
    smin = float(np.linalg.svd(m, compute_uv=False)[-1]) if k else 0.0
    return ValidationReport(
        row_stochastic=row_sum_err <= ROW_SUM_TOL,
        max_row_sum_error=row_sum_err,
        non_informative_rows=tuple(non_informative),
        smallest_singular_value=smin,
        singular=smin < singular_tol,
    )


def l11_error(estimate: MatrixLike, truth: MatrixLike) -> float:
    """Entrywise L1 distance between two K x K matrices, divided by K."""
    a = as_matrix(estimate)
    b = as_matrix(truth)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum() / a.shape[0])
