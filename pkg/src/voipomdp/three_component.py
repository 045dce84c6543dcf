"""
Three-component deteriorating system.

Three components with three condition levels each deteriorate independently;
they are coupled only through system penalties on condition combinations.
Every component can be inspected and repaired, giving 64 joint actions in
the optional-inspection setting and 8 when the inspection channel is always
on.
"""

import itertools
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ModelValidationError
from .metrics import make_perm
from .model import PomdpModel, check_stochastic, dense
from .utils import logger

CONDITIONS = 3
DISCOUNT = 0.95

REPAIR_TRANSITION = np.array(
    [
        [0.90, 0.10, 0.00],
        [0.80, 0.20, 0.00],
        [0.70, 0.30, 0.00],
    ]
)


@dataclass(frozen=True)
class ComponentSpec:
    """Deterioration and per-condition costs of one component."""

    do_nothing: np.ndarray
    repair: np.ndarray = field(default_factory=lambda: REPAIR_TRANSITION.copy())
    repair_cost: Tuple[float, ...] = (-12.0, -18.0, -30.0)
    observation_cost: float = -1.0
    damage_cost: Tuple[float, ...] = (0.0, -5.0, -12.0)

    def __post_init__(self):
        object.__setattr__(self, "do_nothing", np.asarray(self.do_nothing, dtype=float))
        object.__setattr__(self, "repair", np.asarray(self.repair, dtype=float))
        n = self.condition_count
        check_stochastic("do_nothing", self.do_nothing, n, n)
        check_stochastic("repair", self.repair, n, n)
        if len(self.repair_cost) != n or len(self.damage_cost) != n:
            raise ModelValidationError(f"component costs need {n} entries")
        if max(*self.repair_cost, *self.damage_cost, self.observation_cost) > 0.0:
            raise ModelValidationError("component costs must be non-positive")

    @property
    def condition_count(self) -> int:
        return self.do_nothing.shape[0]


COMPONENTS = (
    ComponentSpec(np.array([[0.82, 0.13, 0.05], [0.0, 0.87, 0.13], [0.0, 0.0, 1.0]])),
    ComponentSpec(np.array([[0.72, 0.19, 0.09], [0.0, 0.78, 0.22], [0.0, 0.0, 1.0]])),
    ComponentSpec(np.array([[0.79, 0.17, 0.04], [0.0, 0.85, 0.15], [0.0, 0.0, 1.0]])),
)


@dataclass(frozen=True)
class SystemPenaltyTable:
    """
    Penalties on combinations of component conditions (1-based levels),
    keyed by the sorted condition triple; missing combinations cost nothing.
    """

    penalties: Dict[Tuple[int, ...], float] = field(
        default_factory=lambda: {
            (1, 2, 2): -5.0,
            (2, 2, 2): -10.0,
            (1, 2, 3): -10.0,
            (2, 2, 3): -10.0,
            (1, 3, 3): -14.0,
            (2, 3, 3): -14.0,
            (3, 3, 3): -18.0,
        }
    )

    def lookup(self, conditions: Sequence[int]) -> float:
        return self.penalties.get(tuple(sorted(conditions)), 0.0)


def observation_matrix(p: float, conditions: int = CONDITIONS) -> np.ndarray:
    """Accuracy-p condition inspection: p on the diagonal, the rest split evenly."""
    if not 0.0 <= p <= 1.0:
        raise ModelValidationError(f"observation accuracy {p} outside [0, 1]")
    off = (1.0 - p) / (conditions - 1)
    matrix = np.full((conditions, conditions), off)
    np.fill_diagonal(matrix, p)
    return matrix


def _kron(matrices: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, matrices)


def _condition_tuples(components: int, conditions: int) -> List[Tuple[int, ...]]:
    return list(itertools.product(range(1, conditions + 1), repeat=components))


def _default_channel(kind: str, p: float, components: Sequence[ComponentSpec]):
    if kind == "uninformative":
        return ("none",), np.ones((reduce(lambda n, c: n * c.condition_count, components, 1), 1))
    if kind == "failure":
        # The worst condition announces itself; others look alike.
        per_component = []
        for spec in components:
            matrix = np.zeros((spec.condition_count, 2))
            matrix[:-1, 0] = 1.0
            matrix[-1, 1] = 1.0
            per_component.append(matrix)
        outcomes = ["".join(flags) for flags in itertools.product("-F", repeat=len(components))]
        return tuple(outcomes), _kron(per_component)
    if kind == "condition":
        per_component = [observation_matrix(p, spec.condition_count) for spec in components]
        outcomes = ["".join(str(c) for c in levels) for levels in _condition_tuples(len(components), CONDITIONS)]
        return tuple(outcomes), _kron(per_component)
    raise ModelValidationError(f"unknown default channel '{kind}'")


def build_three_component(
    p: float,
    setting: int = 1,
    default_channel: str = "uninformative",
    components: Sequence[ComponentSpec] = COMPONENTS,
    penalties: SystemPenaltyTable | None = None,
    discount: float = DISCOUNT,
) -> PomdpModel:
    """
    Builds the joint 27-state system.

    Args:
        p: Inspection accuracy in [0, 1].
        setting: 1 for optional inspections per component (64 actions), 2 for
            an always-on costless inspection of every component (8 actions).
        default_channel: "uninformative" (blind), "failure" (worst
            condition self-announces) or "condition" (accuracy-p inspection
            of every component for free).
        components: Per-component deterioration and costs.
        penalties: System penalty table; the standard one by default.
        discount: Discount factor.

    Returns:
        The joint model; states are ordered with component 1 most
        significant and start all in condition 1.
    """
    if setting not in (1, 2):
        raise ModelValidationError(f"setting must be 1 or 2, got {setting}")
    penalties = penalties or SystemPenaltyTable()
    inspection = observation_matrix(p)
    n_components = len(components)
    levels = _condition_tuples(n_components, CONDITIONS)
    n_states = len(levels)

    repair_sets = list(itertools.product((False, True), repeat=n_components))
    transition = []
    reward_maintenance = np.zeros((n_states, len(repair_sets)))
    for a_m, repairs in enumerate(repair_sets):
        transition.append(_kron([spec.repair if r else spec.do_nothing for spec, r in zip(components, repairs)]))
        for s, state in enumerate(levels):
            reward_maintenance[s, a_m] = sum(
                spec.repair_cost[c - 1] for spec, r, c in zip(components, repairs, state) if r
            )

    observe_sets = repair_sets
    obs_model, action_observations = [], []
    reward_observation = np.zeros((n_states, len(observe_sets)))
    for a_o, observed in enumerate(observe_sets):
        obs_model.append(_kron([inspection if o else np.ones((CONDITIONS, 1)) for o in observed]))
        outcome_levels = itertools.product(*[range(1, CONDITIONS + 1) if o else ("-",) for o in observed])
        action_observations.append(tuple("".join(str(x) for x in outcome) for outcome in outcome_levels))
        reward_observation[:, a_o] = sum(spec.observation_cost for spec, o in zip(components, observed) if o)

    reward_damage = np.array(
        [sum(spec.damage_cost[c - 1] for spec, c in zip(components, state)) + penalties.lookup(state) for state in levels]
    )
    default_outcomes, default_model = _default_channel(default_channel, p, components)
    model = PomdpModel(
        states=tuple("".join(str(c) for c in state) for state in levels),
        maintenance_actions=tuple("".join("R" if r else "N" for r in repairs) for repairs in repair_sets),
        observation_actions=tuple("".join("O" if o else "-" for o in observed) for observed in observe_sets),
        default_observations=default_outcomes,
        action_observations=tuple(action_observations),
        transition=tuple(transition),
        default_obs_model=default_model,
        obs_model=tuple(obs_model),
        reward_maintenance=reward_maintenance,
        reward_observation=reward_observation,
        reward_damage=reward_damage,
        discount=discount,
        name=f"three-component-p{p:g}",
        labels={"components": tuple(str(i + 1) for i in range(n_components))},
    )
    if setting == 2:
        model = make_perm(model, len(observe_sets) - 1).model
        model = model.derive(name=f"three-component-p{p:g}-setting2")
    logger.debug(f"built {model.name}: {model.n_states} states, {len(model.action_pairs)} actions")
    return model


@dataclass(frozen=True)
class ConditionBasedPolicy:
    """Repair decision per observed condition level, shared by all components."""

    repair_on: Tuple[bool, ...]

    @property
    def name(self) -> str:
        levels = [str(level + 1) for level, repair in enumerate(self.repair_on) if repair]
        return f"repair on {','.join(levels)}" if levels else "never repair"

    def repairs(self, conditions: Sequence[int]) -> Tuple[bool, ...]:
        return tuple(self.repair_on[c - 1] for c in conditions)


def enumerate_condition_policies(conditions: int = CONDITIONS) -> List[ConditionBasedPolicy]:
    """All 2^conditions repair maps."""
    return [ConditionBasedPolicy(tuple(flags)) for flags in itertools.product((False, True), repeat=conditions)]


def condition_policy_actions(model: PomdpModel, policy: ConditionBasedPolicy) -> np.ndarray:
    """Maintenance action taken for each default observation outcome."""
    index = {name: a_m for a_m, name in enumerate(model.maintenance_actions)}
    actions = []
    for outcome in model.default_observations:
        conditions = [int(c) for c in outcome]
        actions.append(index["".join("R" if r else "N" for r in policy.repairs(conditions))])
    return np.asarray(actions, dtype=int)


def evaluate_observation_policy(model: PomdpModel, actions: np.ndarray) -> np.ndarray:
    """
    Exact state values of acting on the latest default observation.

    Solves V(s) = sum_o p(o|s) [r(s, a(o)) + gamma sum_s' p(s'|s, a(o)) V(s')]
    with r = R_M + R_D, no observation action being taken.
    """
    likelihood = model.default_obs_model
    n = model.n_states
    effective = np.zeros((n, n))
    rewards = np.zeros(n)
    for o, a_m in enumerate(actions):
        weight = likelihood[:, o]
        effective += weight[:, None] * dense(model.transition[a_m])
        rewards += weight * (model.reward_maintenance[:, a_m] + model.reward_damage)
    return np.linalg.solve(np.eye(n) - model.discount * effective, rewards)


def evaluate_condition_policy(p: float, policy: ConditionBasedPolicy, model: PomdpModel | None = None) -> float:
    """
    Value at the all-new initial state of a condition-based policy acting on
    free accuracy-p inspections of every component.
    """
    model = model if model is not None else build_three_component(p, setting=1, default_channel="condition")
    values = evaluate_observation_policy(model, condition_policy_actions(model, policy))
    return float(values[model.initial_state])


def best_condition_policy(p: float) -> Tuple[ConditionBasedPolicy, float]:
    """Enumerates every condition-based policy and returns the best with its value."""
    model = build_three_component(p, setting=1, default_channel="condition")
    scored = [(evaluate_condition_policy(p, policy, model), policy) for policy in enumerate_condition_policies()]
    value, policy = max(scored, key=lambda item: item[0])
    logger.info(f"best condition-based policy at p={p:g}: {policy.name} ({value:.6g})")
    return policy, value
