"""
Lower and upper bounds on the optimal value function.

The lower bound is a set of alpha-vectors, the upper bound a sawtooth
interpolation over corner values and interior belief points.
"""

from typing import List, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .belief import alpha_matrix, predict, successors
from .errors import EmptyAlphaSet
from .model import AlphaVector, Belief, PomdpModel, as_probs
from .utils import logger

UPPER_CAPACITY = 10_000
SAWTOOTH_CHUNK = 4_000_000
VALUE_ITERATION_TOL = 1e-9


class _RowBuffer:
    """Growable row-major float storage."""

    def __init__(self, width: int, rows: np.ndarray | None = None):
        rows = np.empty((0, width)) if rows is None else np.atleast_2d(np.asarray(rows, dtype=float))
        self._data = np.empty((max(8, rows.shape[0]), width))
        self._data[: rows.shape[0]] = rows
        self._size = rows.shape[0]

    def __len__(self) -> int:
        return self._size

    @property
    def view(self) -> np.ndarray:
        return self._data[: self._size]

    def append(self, row: np.ndarray):
        if self._size == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self._data.shape[1]))
            grown[: self._size] = self.view
            self._data = grown
        self._data[self._size] = row
        self._size += 1

    def keep(self, mask: np.ndarray):
        kept = self.view[mask]
        self._data[: kept.shape[0]] = kept
        self._size = kept.shape[0]


def _sawtooth(corners: np.ndarray, points: np.ndarray, values: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
    base = beliefs @ corners
    if points.shape[0] == 0:
        return base
    diffs = values - points @ corners
    support = points > 0.0
    inverse = np.divide(1.0, points, out=np.zeros_like(points), where=support)
    n_states = points.shape[1]
    block = max(1, SAWTOOTH_CHUNK // n_states)
    best = np.zeros(beliefs.shape[0])
    for start in range(0, points.shape[0], block):
        stop = start + block
        inv, sup, diff = inverse[start:stop], support[start:stop], diffs[start:stop]
        step = max(1, SAWTOOTH_CHUNK // (inv.shape[0] * n_states))
        for row in range(0, beliefs.shape[0], step):
            chunk = beliefs[row : row + step]
            ratios = np.where(sup[None], chunk[:, None, :] * inv[None], np.inf).min(axis=2)
            improvement = (diff[None] * ratios).min(axis=1)
            best[row : row + step] = np.minimum(best[row : row + step], improvement)
    return base + best


class ValueBounds:
    """
    Lower-bound alpha-vector set plus sawtooth upper bound.

    A ValueBounds instance belongs to one solve at a time; nothing here is
    synchronized.
    """

    def __init__(
        self,
        alphas: np.ndarray,
        actions: Sequence[Tuple[int, int]],
        upper_corners: np.ndarray,
        point_beliefs: np.ndarray | None = None,
        point_values: np.ndarray | None = None,
        capacity: int = UPPER_CAPACITY,
    ):
        alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
        if alphas.shape[0] == 0:
            raise EmptyAlphaSet("value bounds need at least one alpha-vector")
        if len(actions) != alphas.shape[0]:
            raise ValueError(f"{len(actions)} greedy actions for {alphas.shape[0]} alpha-vectors")
        self.n_states = alphas.shape[1]
        self._alphas = _RowBuffer(self.n_states, alphas)
        self.actions: List[Tuple[int, int]] = [tuple(int(x) for x in a) for a in actions]
        self.upper_corners = np.asarray(upper_corners, dtype=float).copy()
        self._points = _RowBuffer(self.n_states, point_beliefs)
        self._values: List[float] = [] if point_values is None else [float(v) for v in point_values]
        self.capacity = capacity

    @property
    def alphas(self) -> np.ndarray:
        return self._alphas.view

    @property
    def lower(self) -> List[AlphaVector]:
        return [AlphaVector(values, action) for values, action in zip(self.alphas, self.actions)]

    @property
    def point_beliefs(self) -> np.ndarray:
        return self._points.view

    @property
    def point_values(self) -> np.ndarray:
        return np.asarray(self._values, dtype=float)

    @property
    def upper_points(self) -> List[Tuple[Belief, float]]:
        return [(Belief(b), v) for b, v in zip(self.point_beliefs, self._values)]

    def copy(self) -> "ValueBounds":
        return ValueBounds(
            self.alphas.copy(),
            list(self.actions),
            self.upper_corners,
            self.point_beliefs.copy(),
            self.point_values,
            self.capacity,
        )

    def lower_value(self, b: Belief | np.ndarray) -> Tuple[float, int]:
        scores = self.alphas @ as_probs(b)
        index = int(np.argmax(scores))
        return float(scores[index]), index

    def lower_values(self, beliefs: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(beliefs) @ self.alphas.T).max(axis=1)

    def upper_value(self, b: Belief | np.ndarray) -> float:
        return float(self.upper_values(as_probs(b)[None, :])[0])

    def upper_values(self, beliefs: np.ndarray) -> np.ndarray:
        return _sawtooth(self.upper_corners, self.point_beliefs, self.point_values, np.atleast_2d(beliefs))

    def gap(self, b: Belief | np.ndarray) -> float:
        return self.upper_value(b) - self.lower_value(b)[0]

    def add_alpha(self, alpha: AlphaVector, tolerance: float = 0.0) -> bool:
        """
        Adds a vector unless an existing one dominates it pointwise; vectors
        the new one dominates are dropped.

        Returns:
            True if the vector was added.
        """
        values = alpha.values
        current = self.alphas
        if np.any(np.all(current >= values - tolerance, axis=1)):
            return False
        dominated = np.all(current <= values, axis=1)
        if dominated.any():
            self._alphas.keep(~dominated)
            self.actions = [a for a, d in zip(self.actions, dominated) if not d]
        self._alphas.append(values)
        self.actions.append(tuple(alpha.greedy_action))
        return True

    def replace_lower(self, alphas: np.ndarray, actions: Sequence[Tuple[int, int]]):
        if len(actions) == 0:
            raise EmptyAlphaSet("cannot replace the lower bound with an empty set")
        self._alphas = _RowBuffer(self.n_states, alphas)
        self.actions = [tuple(a) for a in actions]

    def prune_lower(self, beliefs: np.ndarray, tolerance: float = 0.0) -> int:
        """
        Drops vectors that support none of `beliefs`.

        A vector supports a belief when it is within `tolerance` of the best
        value there; the lowest-index maximizer always survives.

        Returns:
            Number of vectors removed.
        """
        beliefs = np.atleast_2d(beliefs)
        scores = beliefs @ self.alphas.T
        keep = np.zeros(len(self.actions), dtype=bool)
        keep[np.argmax(scores, axis=1)] = True
        if tolerance > 0.0:
            keep |= np.any(scores >= scores.max(axis=1, keepdims=True) - tolerance, axis=0)
        removed = int((~keep).sum())
        if removed:
            self._alphas.keep(keep)
            self.actions = [a for a, k in zip(self.actions, keep) if k]
        return removed

    def update_upper(self, b: Belief | np.ndarray, value: float) -> bool:
        """
        Records an upper-bound value at a belief if it tightens the bound.

        Corner beliefs update the corner values. Interior points evict the
        stored points they dominate, and the oldest point goes once the
        capacity is reached.

        Returns:
            True if the bound changed.
        """
        probs = as_probs(b)
        if value >= self.upper_value(probs) - 1e-12:
            return False
        support = np.flatnonzero(probs > 0.0)
        if support.size == 1:
            self.upper_corners[support[0]] = value
            return True
        if len(self._points):
            implied = _sawtooth(self.upper_corners, probs[None, :], np.array([value]), self.point_beliefs)
            keep = implied > self.point_values + 1e-12
            if not keep.all():
                self._points.keep(keep)
                self._values = [v for v, k in zip(self._values, keep) if k]
        if len(self._points) >= self.capacity:
            self._points.keep(np.arange(len(self._points)) > 0)
            self._values.pop(0)
        self._points.append(probs)
        self._values.append(float(value))
        return True


class Policy:
    """Greedy belief-to-action map over the lower-bound alpha-vectors."""

    def __init__(self, bounds: ValueBounds):
        self.bounds = bounds

    def action(self, b: Belief | np.ndarray) -> Tuple[int, int]:
        _, index = self.bounds.lower_value(b)
        return self.bounds.actions[index]

    def __call__(self, b: Belief | np.ndarray) -> Tuple[int, int]:
        return self.action(b)


def _backup_vectors(model: PomdpModel, alphas: np.ndarray, probs: np.ndarray):
    best_value, best_alpha, best_action = -np.inf, None, None
    for a_m, a_o in model.action_pairs:
        likelihood = model.joint_likelihood(a_o)
        weighted = likelihood * predict(model, probs, a_m)[:, None]
        chosen = np.argmax(alphas @ weighted, axis=0)
        future = (likelihood * alphas[chosen].T).sum(axis=1)
        alpha = model.reward_vector(a_m, a_o) + model.discount * (model.transition[a_m] @ future)
        value = float(probs @ alpha)
        if value > best_value:
            best_value, best_alpha, best_action = value, alpha, (a_m, a_o)
    return best_alpha, best_action


def backup(model: PomdpModel, bounds: ValueBounds | Sequence[AlphaVector] | np.ndarray, b: Belief | np.ndarray) -> AlphaVector:
    """
    Point-based Bellman backup of the lower bound at one belief.

    For every allowed action pair the future term uses, per joint
    observation, the vector maximizing the posterior value; the action with
    the best value at `b` wins, lowest index first on ties.

    Args:
        model: The decision problem.
        bounds: Current bounds, or the alpha-vector set itself.
        b: The belief to back up.

    Returns:
        The new alpha-vector tagged with its greedy action.

    Raises:
        EmptyAlphaSet: If the lower bound has no vectors.
    """
    alphas = bounds.alphas if isinstance(bounds, ValueBounds) else alpha_matrix(bounds)
    if alphas.size == 0:
        raise EmptyAlphaSet("cannot back up against an empty alpha-vector set")
    values, action = _backup_vectors(model, alphas, as_probs(b))
    return AlphaVector(values, action)


def _evaluate(model: PomdpModel, transition, rewards: np.ndarray) -> np.ndarray:
    """Solves (I - gamma P) v = r exactly."""
    n = model.n_states
    if sparse.issparse(transition):
        system = sparse.identity(n, format="csc") - model.discount * transition.tocsc()
        return np.asarray(sparse_linalg.spsolve(system, rewards)).ravel()
    return np.linalg.solve(np.eye(n) - model.discount * transition, rewards)


def blind_lower_bound(model: PomdpModel) -> List[AlphaVector]:
    """
    One alpha-vector per maintenance action: the value of repeating that
    action forever, paired with observation action 0.

    Each vector is the exact fixed point of its policy-evaluation equation,
    obtained by a direct linear solve.
    """
    vectors = []
    for a_m in range(model.n_maintenance):
        values = _evaluate(model, model.transition[a_m], model.reward_vector(a_m, 0))
        vectors.append(AlphaVector(values, (a_m, 0)))
    return vectors


def mdp_value_iteration(model: PomdpModel, tolerance: float = VALUE_ITERATION_TOL, max_iterations: int = 100_000) -> np.ndarray:
    """
    Optimal values of the fully observable problem without observation costs.

    Iterates V(s) = max_a [r_M(s, a) + r_D(s) + gamma sum_s' p(s'|s, a) V(s')]
    until successive iterates differ by at most `tolerance`.

    Returns:
        The length-|S| value vector.
    """
    rewards = model.reward_maintenance + model.reward_damage[:, None]
    values = np.zeros(model.n_states)
    for iteration in range(1, max_iterations + 1):
        q = np.column_stack(
            [rewards[:, a_m] + model.discount * (model.transition[a_m] @ values) for a_m in range(model.n_maintenance)]
        )
        updated = q.max(axis=1)
        delta = np.abs(updated - values).max()
        values = updated
        if delta <= tolerance:
            logger.debug(f"MDP value iteration converged after {iteration} sweeps")
            break
    else:
        logger.warning(f"MDP value iteration stopped at {max_iterations} sweeps (delta {delta:.3g})")
    return values


def sawtooth_value(bounds: ValueBounds, b: Belief | np.ndarray) -> float:
    """
    Sawtooth upper bound at `b`: the corner interpolation b.c improved by the
    best single interior point, min_i (v_i - b_i.c) * min_s b(s) / b_i(s).
    """
    return bounds.upper_value(b)


def initial_bounds(model: PomdpModel, capacity: int = UPPER_CAPACITY) -> ValueBounds:
    """Blind-policy lower bound and fully observable upper bound."""
    blind = blind_lower_bound(model)
    return ValueBounds(
        np.vstack([alpha.values for alpha in blind]),
        [alpha.greedy_action for alpha in blind],
        mdp_value_iteration(model),
        capacity=capacity,
    )


def upper_q_values(model: PomdpModel, bounds: ValueBounds, probs: np.ndarray):
    """
    Upper-bound action values at a belief.

    Returns:
        (Q over model.action_pairs, per-pair successors as returned by
        `belief.successors`).
    """
    q = np.empty(len(model.action_pairs))
    branches = []
    for index, (a_m, a_o) in enumerate(model.action_pairs):
        branch = successors(model, probs, a_m, a_o)
        _, likelihoods, posteriors = branch
        future = likelihoods @ bounds.upper_values(posteriors) if likelihoods.size else 0.0
        q[index] = probs @ model.reward_vector(a_m, a_o) + model.discount * future
        branches.append(branch)
    return q, branches


def update_bounds_at(model: PomdpModel, bounds: ValueBounds, probs: np.ndarray, tolerance: float = 0.0) -> Tuple[bool, bool]:
    """
    Backs up the lower bound and applies the Bellman upper update at a belief.

    Returns:
        (lower changed, upper changed).
    """
    alpha = backup(model, bounds, probs)
    lower_changed = False
    if probs @ alpha.values > bounds.lower_value(probs)[0] + tolerance:
        lower_changed = bounds.add_alpha(alpha)
    q, _ = upper_q_values(model, bounds, probs)
    upper_changed = bounds.update_upper(probs, float(q.max()))
    return lower_changed, upper_changed
