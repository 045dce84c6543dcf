"""
Information metrics.

Derived control settings (default, permanent monitoring, fully observable),
step-wise value of information measured on a lower-bound value function, and
life-cycle gains between pairs of solved settings.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
from scipy import sparse

from .belief import alpha_matrix, predict
from .bounds import ValueBounds, mdp_value_iteration
from .errors import IncompatibleSettings, ModelValidationError, TrivialActionSelected
from .model import AlphaVector, Belief, PomdpModel, as_probs
from .solvers import SolveResult, SolverConfig, solve
from .utils import logger

ValueFunction = ValueBounds | Sequence[AlphaVector] | np.ndarray


class Provenance(str, Enum):
    ORIGINAL = "original"
    DEFAULT_DERIVED = "default_derived"
    PERM_DERIVED = "perm_derived"
    MDP_DERIVED = "mdp_derived"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class ControlSetting:
    """A model tagged with how it was obtained."""

    label: str
    model: PomdpModel
    provenance: Provenance = Provenance.EXPLICIT


@dataclass(frozen=True)
class ValueReport:
    setting: str
    root: Tuple[float, ...]
    value: float
    gap: float
    config_digest: str

    @classmethod
    def from_result(cls, setting: str, result: SolveResult) -> "ValueReport":
        return cls(setting, tuple(result.root.probs.tolist()), result.lower, result.gap, result.config_digest)


@dataclass(frozen=True)
class MetricResult:
    """A life-cycle metric with its error budget (sum of the solver gaps)."""

    name: str
    value: float
    uncertainty: float
    reports: Tuple[ValueReport, ...] = ()


def _model_of(setting: PomdpModel | ControlSetting) -> PomdpModel:
    return setting.model if isinstance(setting, ControlSetting) else setting


def _single_channel(model: PomdpModel, name: str, outcomes, matrix) -> PomdpModel:
    return model.derive(
        observation_actions=(name,),
        action_observations=(tuple(outcomes),),
        obs_model=(matrix,),
        reward_observation=np.zeros((model.n_states, 1)),
        allowed=np.ones((model.n_maintenance, 1), dtype=bool),
    )


def make_default(setting: PomdpModel | ControlSetting) -> ControlSetting:
    """
    Default control setting: only the trivial observation action remains, so
    the default channel is the sole source of information.
    """
    model = _model_of(setting)
    if model.n_observation_actions == 1 and model.has_trivial_observation:
        return ControlSetting(f"{model.name}:default", model, Provenance.DEFAULT_DERIVED)
    derived = _single_channel(model, "none", ("none",), np.ones((model.n_states, 1)))
    return ControlSetting(f"{model.name}:default", derived, Provenance.DEFAULT_DERIVED)


def make_perm(setting: PomdpModel | ControlSetting, a_o: int) -> ControlSetting:
    """
    Permanent-monitoring setting: the observation channel of `a_o` becomes a
    costless, always-on source next to the default channel.

    Raises:
        TrivialActionSelected: If `a_o` is the trivial action.
    """
    model = _model_of(setting)
    if not 0 <= a_o < model.n_observation_actions:
        raise ModelValidationError(f"observation action {a_o} out of range")
    if model.is_trivial(a_o):
        raise TrivialActionSelected(f"'{model.observation_actions[a_o]}' carries no information to make permanent")
    derived = _single_channel(
        model, model.observation_actions[a_o], model.action_observations[a_o], model.obs_model[a_o]
    )
    return ControlSetting(f"{model.name}:perm", derived, Provenance.PERM_DERIVED)


def make_mdp(setting: PomdpModel | ControlSetting) -> ControlSetting:
    """Fully observable setting: a costless identity channel at every step."""
    model = _model_of(setting)
    derived = _single_channel(model, "perfect", model.states, sparse.identity(model.n_states, format="csr"))
    return ControlSetting(f"{model.name}:mdp", derived, Provenance.MDP_DERIVED)


def _alphas(bounds: ValueFunction) -> np.ndarray:
    return bounds.alphas if isinstance(bounds, ValueBounds) else alpha_matrix(bounds)


def _expected_posterior_value(alphas: np.ndarray, predicted: np.ndarray, likelihood: np.ndarray) -> float:
    """sum_o p(o) V(b^o), written as sum_o max_alpha alpha.(p(o|.) * b^a)."""
    return float((alphas @ (likelihood * predicted[:, None])).max(axis=0).sum())


def _default_term(model: PomdpModel, alphas: np.ndarray, predicted: np.ndarray) -> float:
    return _expected_posterior_value(alphas, predicted, model.default_obs_model)


def step_voi(model: PomdpModel, bounds: ValueFunction, b: Belief | np.ndarray, a_m: int, a_o: int) -> float:
    """
    Expected gain of taking `a_o` next to `a_m` at one decision step:
    E_{o_e, o_O}[V(b^{a,o})] - E_{o_e}[V(b^{a_M, o_e})].
    """
    alphas = _alphas(bounds)
    predicted = predict(model, as_probs(b), a_m)
    joint = _expected_posterior_value(alphas, predicted, model.joint_likelihood(a_o))
    return joint - _default_term(model, alphas, predicted)


def step_vopi(model: PomdpModel, bounds: ValueFunction, b: Belief | np.ndarray, a_m: int) -> float:
    """Gain of revealing the next state: E_{s'~b^a}[V(e_s')] - E_{o_e}[V(b^{a_M, o_e})]."""
    alphas = _alphas(bounds)
    predicted = predict(model, as_probs(b), a_m)
    return float(predicted @ alphas.max(axis=0)) - _default_term(model, alphas, predicted)


def _observation_cost(model: PomdpModel, b: Belief | np.ndarray, a_o: int) -> float:
    return abs(float(as_probs(b) @ model.reward_observation[:, a_o]))


def net_step_voi(model: PomdpModel, bounds: ValueFunction, b: Belief | np.ndarray, a_m: int, a_o: int) -> float:
    return step_voi(model, bounds, b, a_m, a_o) - _observation_cost(model, b, a_o)


def net_step_vopi(model: PomdpModel, bounds: ValueFunction, b: Belief | np.ndarray, a_m: int, a_o: int) -> float:
    return step_vopi(model, bounds, b, a_m) - _observation_cost(model, b, a_o)


def bellman_rhs(model: PomdpModel, bounds: ValueFunction, b: Belief | np.ndarray) -> float:
    """Direct Bellman right-hand side: max_a [r_b(a) + gamma E_o V(b^{a,o})]."""
    alphas = _alphas(bounds)
    probs = as_probs(b)
    best = -np.inf
    for a_m, a_o in model.action_pairs:
        future = _expected_posterior_value(alphas, predict(model, probs, a_m), model.joint_likelihood(a_o))
        best = max(best, float(probs @ model.reward_vector(a_m, a_o)) + model.discount * future)
    return best


def bellman_via_netvoi(model: PomdpModel, bounds: ValueFunction, b: Belief | np.ndarray) -> float:
    """
    Bellman right-hand side written around information:
    max_{a_M} [b.(R_M + R_D) + gamma E_{o_e} V(b^{a_M, o_e}) + gamma max_{a_O} netVoI(a_O)].
    """
    alphas = _alphas(bounds)
    probs = as_probs(b)
    best = -np.inf
    for a_m in range(model.n_maintenance):
        predicted = predict(model, probs, a_m)
        base = float(probs @ (model.reward_maintenance[:, a_m] + model.reward_damage))
        default = _default_term(model, alphas, predicted)
        net = max(
            _expected_posterior_value(alphas, predicted, model.joint_likelihood(a_o))
            - default
            - _observation_cost(model, probs, a_o)
            for a_o in np.flatnonzero(model.allowed[a_m])
        )
        best = max(best, base + model.discount * (default + net))
    return best


def mdp_belief_value(model: PomdpModel, b: Belief | np.ndarray, values: np.ndarray | None = None) -> float:
    """
    Fully observable value from a belief: the first maintenance action is
    chosen under uncertainty, the state is known from the next step on.
    """
    values = mdp_value_iteration(model) if values is None else values
    probs = as_probs(b)
    return max(
        float(probs @ (model.reward_maintenance[:, a_m] + model.reward_damage))
        + model.discount * float(predict(model, probs, a_m) @ values)
        for a_m in range(model.n_maintenance)
    )


def check_compatible(first: PomdpModel, second: PomdpModel):
    """
    Raises:
        IncompatibleSettings: If the two settings do not share their
            maintenance-related elements.
    """
    problems = first.shares_dynamics_with(second)
    if problems:
        raise IncompatibleSettings(f"settings differ in {', '.join(problems)}")


def gain_from_results(name: str, first: Tuple[str, SolveResult], second: Tuple[str, SolveResult]) -> MetricResult:
    """V_2(b) - V_1(b) from two solves at the same root, with the summed gaps as error budget."""
    (label1, result1), (label2, result2) = first, second
    value = result2.lower - result1.lower
    uncertainty = result1.gap + result2.gap
    logger.info(f"{name}: {value:.6g} +/- {uncertainty:.3g} ({label2} vs {label1})")
    return MetricResult(
        name, value, uncertainty, (ValueReport.from_result(label1, result1), ValueReport.from_result(label2, result2))
    )


def life_cycle_gain(
    setting1: PomdpModel | ControlSetting,
    setting2: PomdpModel | ControlSetting,
    b: Belief | np.ndarray,
    config: SolverConfig,
    solver: str = "gap",
    name: str = "gain",
) -> MetricResult:
    """
    Expected life-cycle gain of setting 2 over setting 1 at belief `b`.

    Both settings are solved with the same solver and configuration.

    Raises:
        IncompatibleSettings: When the settings do not share states,
            discount and deterioration dynamics.
    """
    first, second = _model_of(setting1), _model_of(setting2)
    check_compatible(first, second)
    root = b if isinstance(b, Belief) else Belief(as_probs(b))
    result1 = solve(first, config, solver, root=root)
    result2 = solve(second, config, solver, root=root)
    return gain_from_results(name, (_label(setting1), result1), (_label(setting2), result2))


def _label(setting: PomdpModel | ControlSetting) -> str:
    return setting.label if isinstance(setting, ControlSetting) else (setting.name or "model")


def voi(model: PomdpModel, b: Belief | np.ndarray, config: SolverConfig, solver: str = "gap") -> MetricResult:
    """Life-cycle value of the observation scheme: V*(b) - V_def*(b)."""
    return life_cycle_gain(make_default(model), ControlSetting(model.name, model, Provenance.ORIGINAL), b, config, solver, "voi")


def vopi_from_result(model: PomdpModel, default_result: SolveResult) -> MetricResult:
    value_mdp = mdp_belief_value(model, default_result.root)
    value = value_mdp - default_result.lower
    report = ValueReport(f"{model.name}:mdp", tuple(default_result.root.probs.tolist()), value_mdp, 0.0, "exact")
    logger.info(f"vopi: {value:.6g} +/- {default_result.gap:.3g}")
    return MetricResult(
        "vopi", value, default_result.gap, (ValueReport.from_result(f"{model.name}:default", default_result), report)
    )


def vopi(model: PomdpModel, b: Belief | np.ndarray, config: SolverConfig, solver: str = "gap") -> MetricResult:
    """Value of perfect information: V_MDP*(b) - V_def*(b)."""
    root = b if isinstance(b, Belief) else Belief(as_probs(b))
    default_result = solve(make_default(model).model, config, solver, root=root)
    return vopi_from_result(model, default_result)


def voshm(
    optional: PomdpModel | ControlSetting,
    permanent: PomdpModel | ControlSetting,
    b: Belief | np.ndarray,
    config: SolverConfig,
    solver: str = "gap",
) -> MetricResult:
    """Value of permanent monitoring over optional inspections; may be negative."""
    return life_cycle_gain(optional, permanent, b, config, solver, "voshm")


def rvoci(model: PomdpModel, a_o: int, b: Belief | np.ndarray, config: SolverConfig, solver: str = "gap") -> MetricResult:
    """VoSHM where the permanent channel is the optional action's own channel."""
    optional = ControlSetting(model.name, model, Provenance.ORIGINAL)
    return life_cycle_gain(optional, make_perm(model, a_o), b, config, solver, "rvoci")
