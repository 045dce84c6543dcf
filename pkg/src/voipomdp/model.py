from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import ModelValidationError
from .utils import SPARSE_DENSITY, STOCHASTIC_TOL

Matrix = np.ndarray | sparse.csr_matrix


def as_matrix(data, density_threshold: float = SPARSE_DENSITY) -> Matrix:
    """
    Stores a matrix dense, or as CSR when fewer than 5% of entries are nonzero.

    Args:
        data: Anything `numpy.asarray` or `scipy.sparse` understands.
        density_threshold: Density below which CSR storage is chosen.

    Returns:
        A float64 ndarray or csr_matrix.
    """
    if sparse.issparse(data):
        matrix = sparse.csr_matrix(data, dtype=float)
        dense_size = matrix.shape[0] * matrix.shape[1]
        if dense_size and matrix.nnz / dense_size >= density_threshold:
            return matrix.toarray()
        return matrix
    array = np.asarray(data, dtype=float)
    if array.ndim == 2 and array.size and np.count_nonzero(array) / array.size < density_threshold:
        return sparse.csr_matrix(array)
    return array


def dense(matrix: Matrix) -> np.ndarray:
    """Returns a dense copy-free view when possible."""
    if sparse.issparse(matrix):
        return matrix.toarray()
    return matrix


def matrix_row(matrix: Matrix, row: int) -> np.ndarray:
    """Extracts one row as a dense 1-D array."""
    if sparse.issparse(matrix):
        return matrix.getrow(row).toarray().ravel()
    return matrix[row]


def check_stochastic(name: str, matrix: Matrix, rows: int, cols: int):
    if matrix.shape != (rows, cols):
        raise ModelValidationError(f"{name} has shape {matrix.shape}, expected {(rows, cols)}")
    values = matrix.data if sparse.issparse(matrix) else matrix
    if values.size and (not np.all(np.isfinite(values)) or values.min() < 0.0):
        raise ModelValidationError(f"{name} has negative or non-finite entries")
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        raise ModelValidationError(f"{name} row {int(bad[0])} sums to {sums[bad[0]]!r}")


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """
    The detailed decision-problem tuple: states, factored maintenance and
    observation actions, transition and observation models, decomposed
    rewards and discount.

    Observation action 0 is the trivial (costless, unit observation set)
    action, except in permanent-channel settings where the only observation
    action is a costless nontrivial one.
    """

    states: Tuple[str, ...]
    maintenance_actions: Tuple[str, ...]
    observation_actions: Tuple[str, ...]
    default_observations: Tuple[str, ...]
    action_observations: Tuple[Tuple[str, ...], ...]
    transition: Tuple[Matrix, ...]
    default_obs_model: np.ndarray
    obs_model: Tuple[Matrix, ...]
    reward_maintenance: np.ndarray
    reward_observation: np.ndarray
    reward_damage: np.ndarray
    discount: float
    allowed: np.ndarray | None = None
    initial_state: int = 0
    name: str = ""
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = self.allowed
        if allowed is None:
            allowed = np.ones((len(self.maintenance_actions), len(self.observation_actions)), dtype=bool)
        normalized = {
            "states": tuple(str(s) for s in self.states),
            "maintenance_actions": tuple(self.maintenance_actions),
            "observation_actions": tuple(self.observation_actions),
            "default_observations": tuple(self.default_observations),
            "action_observations": tuple(tuple(o) for o in self.action_observations),
            "transition": tuple(as_matrix(p) for p in self.transition),
            "default_obs_model": dense(as_matrix(self.default_obs_model)),
            "obs_model": tuple(as_matrix(o) for o in self.obs_model),
            "reward_maintenance": np.asarray(self.reward_maintenance, dtype=float),
            "reward_observation": np.asarray(self.reward_observation, dtype=float),
            "reward_damage": np.asarray(self.reward_damage, dtype=float).ravel(),
            "discount": float(self.discount),
            "allowed": np.asarray(allowed, dtype=bool),
        }
        for key, value in normalized.items():
            object.__setattr__(self, key, value)
        self.validate()

    def validate(self):
        """
        Checks every invariant of the tuple.

        Raises:
            ModelValidationError: On the first violated invariant.
        """
        n = len(self.states)
        n_m = len(self.maintenance_actions)
        n_o = len(self.observation_actions)
        if n == 0 or n_m == 0 or n_o == 0:
            raise ModelValidationError("states, maintenance and observation actions must be non-empty")
        if not 0.0 <= self.discount < 1.0:
            raise ModelValidationError(f"discount {self.discount} outside [0, 1)")
        if len(self.transition) != n_m:
            raise ModelValidationError(f"{len(self.transition)} transition matrices for {n_m} maintenance actions")
        for name, matrix in zip(self.maintenance_actions, self.transition):
            check_stochastic(f"transition[{name}]", matrix, n, n)
        check_stochastic("default_obs_model", self.default_obs_model, n, len(self.default_observations))
        if len(self.obs_model) != n_o or len(self.action_observations) != n_o:
            raise ModelValidationError("one observation set and model per observation action is required")
        for name, outcomes, matrix in zip(self.observation_actions, self.action_observations, self.obs_model):
            if not outcomes:
                raise ModelValidationError(f"observation action {name} has an empty observation set")
            check_stochastic(f"obs_model[{name}]", matrix, n, len(outcomes))
        if self.reward_maintenance.shape != (n, n_m):
            raise ModelValidationError(f"reward_maintenance shape {self.reward_maintenance.shape} != {(n, n_m)}")
        if self.reward_observation.shape != (n, n_o):
            raise ModelValidationError(f"reward_observation shape {self.reward_observation.shape} != {(n, n_o)}")
        if self.reward_damage.shape != (n,):
            raise ModelValidationError(f"reward_damage length {self.reward_damage.shape[0]} != {n}")
        for label, values in (
            ("reward_maintenance", self.reward_maintenance),
            ("reward_observation", self.reward_observation),
            ("reward_damage", self.reward_damage),
        ):
            if not np.all(np.isfinite(values)) or values.max(initial=0.0) > 0.0:
                raise ModelValidationError(f"{label} must be finite and non-positive")
        if len(self.action_observations[0]) == 1 and np.any(self.reward_observation[:, 0] != 0.0):
            raise ModelValidationError("the trivial observation action must be costless")
        if self.allowed.shape != (n_m, n_o):
            raise ModelValidationError(f"allowed mask shape {self.allowed.shape} != {(n_m, n_o)}")
        if not self.allowed[:, 0].all():
            raise ModelValidationError("observation action 0 must be allowed with every maintenance action")
        if not 0 <= self.initial_state < n:
            raise ModelValidationError(f"initial state {self.initial_state} out of range")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_maintenance(self) -> int:
        return len(self.maintenance_actions)

    @property
    def n_observation_actions(self) -> int:
        return len(self.observation_actions)

    def is_trivial(self, a_o: int) -> bool:
        """True when `a_o` is costless and has a unit observation set."""
        return len(self.action_observations[a_o]) == 1 and not np.any(self.reward_observation[:, a_o])

    @property
    def has_trivial_observation(self) -> bool:
        return self.is_trivial(0)

    @cached_property
    def action_pairs(self) -> List[Tuple[int, int]]:
        """Allowed (a_M, a_O) pairs, maintenance-major order."""
        return [(int(m), int(o)) for m, o in zip(*np.nonzero(self.allowed))]

    def joint_observation_count(self, a_o: int) -> int:
        return len(self.default_observations) * len(self.action_observations[a_o])

    @cached_property
    def _joint_likelihoods(self) -> Tuple[np.ndarray, ...]:
        tables = []
        for matrix in self.obs_model:
            action = dense(matrix)
            joint = self.default_obs_model[:, :, None] * action[:, None, :]
            tables.append(joint.reshape(self.n_states, -1))
        return tuple(tables)

    def joint_likelihood(self, a_o: int) -> np.ndarray:
        """
        Likelihoods p(o_e|s') p(o_O|s', a_O) over the joint observation set.

        Returns:
            An |S| x (|Omega_e| * |Omega_aO|) array; column
            `e * |Omega_aO| + k` belongs to JointObservation(e, k).
        """
        return self._joint_likelihoods[a_o]

    @cached_property
    def _reward_vectors(self) -> np.ndarray:
        rewards = (
            self.reward_maintenance[:, :, None]
            + self.discount * self.reward_observation[:, None, :]
            + self.reward_damage[:, None, None]
        )
        return np.transpose(rewards, (1, 2, 0))

    def reward_vector(self, a_m: int, a_o: int) -> np.ndarray:
        """Per-state immediate reward r_M + gamma r_O + r_D of one action pair."""
        return self._reward_vectors[a_m, a_o]

    @cached_property
    def reward_span(self) -> float:
        """Largest immediate reward magnitude over allowed actions."""
        spans = [np.abs(self.reward_vector(m, o)).max() for m, o in self.action_pairs]
        return float(max(spans))

    def root_belief(self) -> "Belief":
        return Belief.corner(self.n_states, self.initial_state)

    def action_label(self, a_m: int, a_o: int) -> str:
        """
        Human-readable action name.

        Factored models (labels["components"] set, one flag character per
        component in the action names) read N, O, R or OR per component.
        """
        maintenance, observation = self.maintenance_actions[a_m], self.observation_actions[a_o]
        components = self.labels.get("components")
        if components and len(maintenance) == len(observation) == len(components):
            parts = []
            for repair, observe in zip(maintenance, observation):
                part = ("O" if observe == "O" else "") + ("R" if repair == "R" else "")
                parts.append(part or "N")
            return " ".join(parts)
        return f"{maintenance}/{observation}"

    def shares_dynamics_with(self, other: "PomdpModel") -> List[str]:
        """
        Lists the tuple elements two settings fail to share.

        Settings being compared by a life-cycle gain must agree on states,
        discount, maintenance actions, transitions, maintenance and damage
        rewards, and the default observation channel.
        """
        problems = []
        if self.states != other.states:
            problems.append("states")
        if self.discount != other.discount:
            problems.append("discount")
        if self.maintenance_actions != other.maintenance_actions:
            problems.append("maintenance_actions")
        else:
            for mine, theirs in zip(self.transition, other.transition):
                if not np.allclose(dense(mine), dense(theirs), atol=1e-12):
                    problems.append("transition")
                    break
            if not np.allclose(self.reward_maintenance, other.reward_maintenance, atol=1e-12):
                problems.append("reward_maintenance")
        if not np.allclose(self.reward_damage, other.reward_damage, atol=1e-12):
            problems.append("reward_damage")
        if self.default_observations != other.default_observations or not np.allclose(
            self.default_obs_model, other.default_obs_model, atol=1e-12
        ):
            problems.append("default_observations")
        return problems

    def derive(self, **changes) -> "PomdpModel":
        """Returns a validated copy with some tuple elements replaced."""
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Belief:
    """A probability distribution over the states of a model."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).ravel()
        if probs.size == 0 or not np.all(np.isfinite(probs)) or probs.min() < 0.0:
            raise ModelValidationError("belief entries must be finite and non-negative")
        if abs(probs.sum() - 1.0) > STOCHASTIC_TOL:
            raise ModelValidationError(f"belief sums to {probs.sum()!r}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def corner(cls, n: int, state: int) -> "Belief":
        probs = np.zeros(n)
        probs[state] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return self.probs.size

    def __iter__(self) -> Iterator[float]:
        return iter(self.probs)


def as_probs(b: "Belief | Sequence[float] | np.ndarray") -> np.ndarray:
    """Accepts a Belief or a raw vector and returns the probability array."""
    if isinstance(b, Belief):
        return b.probs
    return np.asarray(b, dtype=float).ravel()


@dataclass(frozen=True)
class JointObservation:
    """An outcome of the default channel paired with one of the action's own outcomes."""

    default_index: int
    action_index: int

    def flat(self, model: PomdpModel, a_o: int) -> int:
        n_action = len(model.action_observations[a_o])
        if not 0 <= self.default_index < len(model.default_observations):
            raise ModelValidationError(f"default observation index {self.default_index} out of range")
        if not 0 <= self.action_index < n_action:
            raise ModelValidationError(f"observation index {self.action_index} out of range for action {a_o}")
        return self.default_index * n_action + self.action_index

    @classmethod
    def from_flat(cls, model: PomdpModel, a_o: int, index: int) -> "JointObservation":
        default_index, action_index = divmod(int(index), len(model.action_observations[a_o]))
        return cls(default_index, action_index)


@dataclass(frozen=True, eq=False)
class AlphaVector:
    """One hyperplane of a piece-wise linear value function and its greedy action."""

    values: np.ndarray
    greedy_action: Tuple[int, int]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise ModelValidationError("alpha-vector values must be finite")
        object.__setattr__(self, "values", values)
