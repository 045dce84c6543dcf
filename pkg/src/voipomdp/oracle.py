"""
Exact finite-horizon value functions for small models, used as ground truth.

Vectors are generated by incremental pruning: per action, the projected
sets of each joint observation are cross-summed one at a time and pruned
after every step, first by pointwise dominance and then by a linear program
that looks for a belief where the vector is strictly best.
"""

from typing import List, Tuple

import numpy as np
from scipy.optimize import linprog

from .errors import OracleTooLarge
from .model import Belief, PomdpModel, as_probs, dense
from .utils import logger

MAX_VECTORS = 1_000_000
LP_TOLERANCE = 1e-9


def _witness_margin(vector: np.ndarray, others: np.ndarray) -> float:
    """Largest margin by which `vector` beats every row of `others` at some belief."""
    n = vector.size
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([others - vector, np.ones((others.shape[0], 1))])
    b_ub = np.zeros(others.shape[0])
    a_eq = np.append(np.ones(n), 0.0)[None, :]
    bounds = [(0.0, 1.0)] * n + [(None, None)]
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if result.status != 0:
        return np.inf
    return -float(result.fun)


def _distinct_rows(vectors: np.ndarray, tolerance: float) -> np.ndarray:
    """First index of every group of rows within `tolerance` of each other."""
    kept: List[int] = []
    for index, row in enumerate(vectors):
        if not kept or np.abs(vectors[kept] - row).max(axis=1).min() > tolerance:
            kept.append(index)
    return np.asarray(kept, dtype=int)


def prune_vectors(vectors: np.ndarray, tolerance: float = LP_TOLERANCE) -> np.ndarray:
    """
    Indices of a minimal subset with the same upper envelope.

    Args:
        vectors: (n, |S|) candidate alpha-vectors.
        tolerance: Witness margin below which a vector counts as useless.

    Returns:
        Sorted indices into `vectors`.
    """
    if vectors.shape[0] <= 1:
        return np.arange(vectors.shape[0])
    candidates = _distinct_rows(vectors, max(tolerance, 1e-12))
    block = vectors[candidates]
    dominates = np.all(block[:, None, :] >= block[None, :, :], axis=2)
    np.fill_diagonal(dominates, False)
    candidates = candidates[~dominates.any(axis=0)]
    keep = list(candidates)
    for index in candidates:
        others = [j for j in keep if j != index]
        if not others:
            break
        if _witness_margin(vectors[index], vectors[others]) <= tolerance:
            keep.remove(index)
    return np.asarray(keep, dtype=int)


def _cross_sum(left: np.ndarray, right: np.ndarray, limit: int) -> np.ndarray:
    if left.shape[0] * right.shape[0] > limit:
        raise OracleTooLarge(f"cross-sum of {left.shape[0]} x {right.shape[0]} vectors exceeds {limit}")
    return (left[:, None, :] + right[None, :, :]).reshape(-1, left.shape[1])


def exact_alpha_vectors(
    model: PomdpModel,
    horizon: int,
    terminal: np.ndarray | None = None,
    max_vectors: int = MAX_VECTORS,
) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """
    Exact alpha-vector set of the H-step problem.

    Args:
        model: A small decision problem.
        horizon: Number of decision steps H >= 0.
        terminal: Optional (k, |S|) terminal vectors; zero by default.
        max_vectors: Size guard on any intermediate cross-sum.

    Returns:
        (vectors, greedy action of each vector). With H = 0 the terminal
        set is returned with action (0, 0).

    Raises:
        OracleTooLarge: When an intermediate set exceeds `max_vectors`.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    vectors = np.zeros((1, model.n_states)) if terminal is None else np.atleast_2d(np.asarray(terminal, dtype=float))
    actions: List[Tuple[int, int]] = [(0, 0)] * vectors.shape[0]
    transitions = [dense(p) for p in model.transition]
    for step in range(horizon):
        candidates, labels = [], []
        for a_m, a_o in model.action_pairs:
            likelihood = model.joint_likelihood(a_o)
            n_obs = likelihood.shape[1]
            share = model.reward_vector(a_m, a_o) / n_obs
            accumulated = None
            for o in range(n_obs):
                projected = share + model.discount * (transitions[a_m] @ (likelihood[:, o][:, None] * vectors.T)).T
                projected = projected[prune_vectors(projected)]
                if accumulated is None:
                    accumulated = projected
                else:
                    accumulated = _cross_sum(accumulated, projected, max_vectors)
                    accumulated = accumulated[prune_vectors(accumulated)]
            candidates.append(accumulated)
            labels.extend([(a_m, a_o)] * accumulated.shape[0])
        stacked = np.vstack(candidates)
        if stacked.shape[0] > max_vectors:
            raise OracleTooLarge(f"{stacked.shape[0]} vectors at step {step + 1} exceed {max_vectors}")
        kept = prune_vectors(stacked)
        vectors = stacked[kept]
        actions = [labels[i] for i in kept]
        logger.debug(f"oracle step {step + 1}: {vectors.shape[0]} vectors")
    return vectors, actions


def exact_finite_horizon_oracle(
    model: PomdpModel,
    horizon: int,
    root: Belief | np.ndarray,
    terminal: np.ndarray | None = None,
    max_vectors: int = MAX_VECTORS,
) -> float:
    """Exact H-step discounted value at the root belief."""
    vectors, _ = exact_alpha_vectors(model, horizon, terminal, max_vectors)
    return float((vectors @ as_probs(root)).max())
