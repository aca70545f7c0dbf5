"""Solve for (T, p) from consensus statistics.

The row-stochastic constraints are removed by optimizing unconstrained
matrices ``t_bar`` / ``p_bar`` whose row-wise (resp. vector) softmax gives
``T`` / ``p``.  The fitted objective is the sum over the three consensus
orders of the L2 norm of the residual between target and model statistics,
optionally plus a sparse-prior regularizer ``w * sum_i log(p_i + eps)``.

Gradients are exact: the forward model is polynomial in the softmax outputs,
so the chain rule through the Hadamard products and the softmax is written
out in closed form (and checked against finite differences in the tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .consensus import average_rounds, count_consensus, joint_to_shift, shift_to_joint
from .core import (
    ConsensusStats,
    EstimatorConfig,
    LabeledDataset,
    NumericalError,
    PriorVector,
    TransitionMatrix,
)
from .knn import NeighborIndex, sample_tuples
from .seeding import derive_rng

# Residual norms below this are treated as exactly zero when normalizing the
# gradient direction (the subgradient set of the L2 norm contains 0 there).
ZERO_RESIDUAL_TOL = 1e-12
GRAD_NORM_TOL = 1e-7


@dataclass
class SolverState:
    """Unconstrained iterate; softmax of ``t_bar`` rows / ``p_bar`` is always feasible."""

    t_bar: np.ndarray
    p_bar: np.ndarray
    iteration: int = 0
    objective: float = np.nan
    gradient_norm: float = np.nan

    @property
    def k(self) -> int:
        return self.p_bar.shape[0]


@dataclass(frozen=True)
class SolverResult:
    t_hat: TransitionMatrix
    p_hat: PriorVector
    final_objective: float
    iterations_used: int
    converged: bool


def initial_state(k: int) -> SolverState:
    """Diagonally dominant start: t_bar = k*I - 1, p_bar = 1/k."""
    t_bar = k * np.eye(k) - np.ones((k, k))
    p_bar = np.full(k, 1.0 / k)
    return SolverState(t_bar=t_bar, p_bar=p_bar)


def softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _targets(target: ConsensusStats):
    c1, joint2, joint3 = shift_to_joint(target)
    return c1, joint2, joint3


def _value_and_grad(
    t_bar: np.ndarray,
    p_bar: np.ndarray,
    targets,
    reg_weight: float,
    reg_eps: float,
    want_grad: bool = True,
):
    c1_t, j2_t, j3_t = targets
    t = softmax_rows(t_bar)
    p = softmax_rows(p_bar)

    weighted = t * p[:, None]
    m1 = t.T @ p
    m2 = weighted.T @ t
    m3 = np.einsum("ai,aj,al->ijl", weighted, t, t, optimize=True)

    d1 = m1 - c1_t
    d2 = m2 - j2_t
    d3 = m3 - j3_t
    n1 = float(np.linalg.norm(d1))
    n2 = float(np.linalg.norm(d2))
    n3 = float(np.linalg.norm(d3.ravel()))
    value = n1 + n2 + n3
    if reg_weight > 0.0:
        value += reg_weight * float(np.log(p + reg_eps).sum())
    if not want_grad:
        return value, None, None

    w1 = d1 / n1 if n1 > ZERO_RESIDUAL_TOL else np.zeros_like(d1)
    w2 = d2 / n2 if n2 > ZERO_RESIDUAL_TOL else np.zeros_like(d2)
    w3 = d3 / n3 if n3 > ZERO_RESIDUAL_TOL else np.zeros_like(d3)

    # Gradient with respect to T: product rule over the one/two/three label
    # slots of each joint moment.
    g_t = np.outer(p, w1)
    g_t += p[:, None] * (t @ (w2 + w2.T))
    sym3 = w3 + np.transpose(w3, (1, 0, 2)) + np.transpose(w3, (1, 2, 0))
    g_t += p[:, None] * np.einsum("bjl,aj,al->ab", sym3, t, t, optimize=True)

    # Gradient with respect to p.
    g_p = t @ w1
    g_p += np.einsum("ai,ij,aj->a", t, w2, t, optimize=True)
    g_p += np.einsum("ai,aj,al,ijl->a", t, t, t, w3, optimize=True)
    if reg_weight > 0.0:
        g_p = g_p + reg_weight / (p + reg_eps)

    # Chain through the softmax: J = diag(s) - s s'.
    g_t_bar = t * (g_t - (t * g_t).sum(axis=1, keepdims=True))
    g_p_bar = p * (g_p - float(p @ g_p))
    return value, g_t_bar, g_p_bar


def objective(state: SolverState, target: ConsensusStats, config: EstimatorConfig) -> float:
    """Sum over consensus orders of the residual L2 norm (plus regularizer)."""
    if state.k != target.k:
        raise ValueError(f"state has k={state.k}, target has k={target.k}")
    value, _, _ = _value_and_grad(
        state.t_bar,
        state.p_bar,
        _targets(target),
        config.sparse_reg_weight,
        config.sparse_reg_epsilon,
        want_grad=False,
    )
    return value


def gradient(
    state: SolverState, target: ConsensusStats, config: EstimatorConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact gradient of :func:`objective` with respect to (t_bar, p_bar)."""
    if state.k != target.k:
        raise ValueError(f"state has k={state.k}, target has k={target.k}")
    _, g_t, g_p = _value_and_grad(
        state.t_bar,
        state.p_bar,
        _targets(target),
        config.sparse_reg_weight,
        config.sparse_reg_epsilon,
    )
    return g_t, g_p


def _learning_rate(base: float, iteration: int, max_iters: int) -> float:
    # Constant for the first 40% of the budget, then exponential decay down
    # to base * 1e-3; the decaying tail lets the iterate settle at the kink
    # of the norm objective instead of orbiting it.
    warm = int(0.4 * max_iters)
    if iteration < warm or max_iters <= warm:
        return base
    frac = (iteration - warm) / (max_iters - warm)
    return base * 10.0 ** (-3.0 * frac)


def _informative_order(t: np.ndarray, p: np.ndarray):
    """Reorder (T, p) rows into the diagonally dominant representative.

    The consensus equations determine (T, p) only up to a simultaneous row
    permutation; among the equivalent orderings the valid representative is
    the one whose diagonal dominates, found by maximizing the prior-weighted
    diagonal sum.  The prior weighting matters for degenerate priors: a row
    with vanishing prior carries no information and must not outcompete a
    data-supported row for its diagonal position.  Reordering never changes
    the fit.
    """
    score = (p[:, None] + 1e-6) * t
    rows, cols = linear_sum_assignment(-score)
    perm = np.empty(t.shape[0], dtype=np.int64)
    perm[cols] = rows
    return t[perm], p[perm]


def solve(target: ConsensusStats, config: EstimatorConfig) -> SolverResult:
    """Minimize the consensus residual with Adam; returns softmax-mapped estimates.

    The returned estimate is the best iterate seen (lowest objective), which
    for adaptive steps is not always the last one.  Its rows are reordered
    into the diagonally dominant representative of the permutation family.
    """
    k = target.k
    state = initial_state(k)
    targets = _targets(target)
    reg_w = config.sparse_reg_weight
    reg_e = config.sparse_reg_epsilon

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_t = np.zeros_like(state.t_bar)
    v_t = np.zeros_like(state.t_bar)
    m_p = np.zeros_like(state.p_bar)
    v_p = np.zeros_like(state.p_bar)

    best_value = np.inf
    best_t_bar = state.t_bar.copy()
    best_p_bar = state.p_bar.copy()
    converged = False
    iterations = 0

    for it in range(config.max_iters):
        value, g_t, g_p = _value_and_grad(state.t_bar, state.p_bar, targets, reg_w, reg_e)
        if not np.isfinite(value):
            raise NumericalError(f"objective became non-finite at iteration {it}")
        iterations = it + 1
        if value < best_value:
            best_value = value
            best_t_bar = state.t_bar.copy()
            best_p_bar = state.p_bar.copy()
        gnorm = float(np.sqrt((g_t * g_t).sum() + (g_p * g_p).sum()))
        state.iteration = it
        state.objective = value
        state.gradient_norm = gnorm
        if gnorm < GRAD_NORM_TOL:
            converged = True
            break

        lr = _learning_rate(config.learning_rate, it, config.max_iters)
        step = it + 1
        m_t = beta1 * m_t + (1.0 - beta1) * g_t
        v_t = beta2 * v_t + (1.0 - beta2) * g_t * g_t
        m_p = beta1 * m_p + (1.0 - beta1) * g_p
        v_p = beta2 * v_p + (1.0 - beta2) * g_p * g_p
        bc1 = 1.0 - beta1**step
        bc2 = 1.0 - beta2**step
        state.t_bar = state.t_bar - lr * (m_t / bc1) / (np.sqrt(v_t / bc2) + eps)
        state.p_bar = state.p_bar - lr * (m_p / bc1) / (np.sqrt(v_p / bc2) + eps)

    final_value, _, _ = _value_and_grad(
        state.t_bar, state.p_bar, targets, reg_w, reg_e, want_grad=False
    )
    if final_value < best_value:
        best_value = final_value
        best_t_bar = state.t_bar
        best_p_bar = state.p_bar
    t_hat, p_hat = _informative_order(softmax_rows(best_t_bar), softmax_rows(best_p_bar))
    return SolverResult(
        t_hat=TransitionMatrix(t_hat),
        p_hat=PriorVector(p_hat),
        final_objective=float(best_value),
        iterations_used=iterations,
        converged=converged,
    )


def estimate_transition_matrix(
    dataset: LabeledDataset,
    config: EstimatorConfig,
    *,
    neighbors: Optional[NeighborIndex] = None,
) -> SolverResult:
    """End-to-end estimator: sample tuples, count consensuses, average, solve.

    Runs ``config.rounds`` independent sampling rounds, averages the per-round
    statistics entrywise, then fits (T, p).  Fully deterministic given
    ``config.seed``.  A prebuilt :class:`NeighborIndex` may be passed to avoid
    recomputing nearest neighbors across repeated runs on one dataset.
    """
    if config.sample_size > dataset.n:
        raise ValueError(
            f"sample_size {config.sample_size} exceeds dataset size {dataset.n}"
        )
    if neighbors is None:
        neighbors = NeighborIndex.build(dataset)
    per_round = []
    for g in range(config.rounds):
        round_rng = derive_rng(config.seed, "tuples", g)
        tuples = sample_tuples(dataset, config, round_rng, neighbors=neighbors)
        per_round.append(count_consensus(dataset, tuples))
    return solve(average_rounds(per_round), config)
