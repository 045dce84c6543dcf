from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from voipomdp.belief import belief_update
from voipomdp.bounds import ValueBounds
from voipomdp.errors import ModelValidationError
from voipomdp.model import Belief
from voipomdp.simulation import (
    ConditionPolicy,
    GreedyPolicy,
    ScriptedPolicy,
    baseline_policy,
    estimate_metric_by_simulation,
    remaining_voshm,
    rollout,
    trace_realization,
)
from voipomdp.solvers import SolverConfig, solve
from voipomdp.three_component import (
    ConditionBasedPolicy,
    build_three_component,
    condition_policy_actions,
    evaluate_condition_policy,
    evaluate_observation_policy,
)


def test_zero_reward_model_returns_zero(machine_model):
    """
    A model without costs has a zero return with zero spread.
    """
    model = machine_model.derive(
        reward_maintenance=np.zeros((2, 2)), reward_observation=np.zeros((2, 2)), reward_damage=np.zeros(2)
    )
    result = rollout(model, ScriptedPolicy([(0, 1)]), episodes=50, horizon=20)
    assert result.mean == 0.0
    assert result.std_error == 0.0


def test_single_state_return(single_state_model):
    """
    Paying -1 forever at discount 0.95 returns -20 up to the truncation
    resolution.
    """
    result = rollout(single_state_model, baseline_policy(single_state_model, "do-nothing"), episodes=10)
    assert result.mean == pytest.approx(-20.0, abs=0.01)
    assert result.horizon > 100


def test_rollout_is_deterministic(machine_model):
    """
    The master seed fixes the result.
    """
    policy = ScriptedPolicy([(0, 1), (1, 0)])
    first = rollout(machine_model, policy, episodes=300, horizon=30, seed=4)
    second = rollout(machine_model, policy, episodes=300, horizon=30, seed=4)
    other = rollout(machine_model, policy, episodes=300, horizon=30, seed=5)
    assert first.mean == second.mean
    assert first.std_error == second.std_error
    assert first.mean != other.mean


def test_executor_does_not_change_results(machine_model):
    """
    Chunks run on a thread pool give the same returns as a serial run.
    """
    policy = baseline_policy(machine_model, "do-nothing")
    serial = rollout(machine_model, policy, episodes=200, horizon=25, seed=9, chunk_size=50, keep_returns=True)
    with ThreadPoolExecutor(max_workers=3) as executor:
        pooled = rollout(
            machine_model, policy, episodes=200, horizon=25, seed=9, chunk_size=50, keep_returns=True, executor=executor
        )
    assert np.array_equal(serial.returns, pooled.returns)


def test_confidence_interval_widens(machine_model):
    """
    A 99% interval contains the 95% one.
    """
    result = rollout(machine_model, ScriptedPolicy([(0, 0)]), episodes=200, horizon=30)
    low95, high95 = result.ci(0.95)
    low99, high99 = result.ci(0.99)
    assert low99 < low95 <= result.mean <= high95 < high99
    assert result.half_width == pytest.approx(high95 - result.mean)
    with pytest.raises(ValueError):
        result.ci(1.0)


def test_invalid_rollout_arguments(machine_model):
    """
    Fewer than two episodes or an invalid level are rejected.
    """
    policy = ScriptedPolicy([(0, 0)])
    with pytest.raises(ValueError):
        rollout(machine_model, policy, episodes=1)
    with pytest.raises(ValueError):
        rollout(machine_model, policy, episodes=10, confidence=0.0)


def test_disallowed_action_rejected(machine_model):
    """
    A policy choosing a masked pair stops the rollout.
    """
    model = machine_model.derive(allowed=np.array([[True, True], [True, False]]))
    with pytest.raises(ModelValidationError, match="disallowed"):
        rollout(model, ScriptedPolicy([(1, 1)]), episodes=2, horizon=3)


def test_trace_follows_belief_updates(machine_model):
    """
    Each traced belief is the Bayesian update of the previous step, and
    rewards are discounted by the step index.
    """
    trace = trace_realization(machine_model, ScriptedPolicy([(0, 1)]), b0=Belief([0.5, 0.5]), seed=2, horizon=12)
    assert len(trace) == 12
    assert np.allclose(trace.records[0].belief.probs, [0.5, 0.5])
    for previous, record in zip(trace.records, trace.records[1:]):
        expected = belief_update(
            machine_model,
            previous.belief,
            previous.maintenance_action,
            previous.observation_action,
            previous.observation,
        )
        assert np.allclose(record.belief.probs, expected.probs)
    for record in trace.records:
        reward = machine_model.reward_vector(record.maintenance_action, record.observation_action)[record.state]
        assert record.reward == pytest.approx(machine_model.discount**record.t * reward)
    assert trace.total_return == pytest.approx(sum(r.reward for r in trace.records))


def test_condition_policy_matches_exact_value(machine_model):
    """
    Acting on a perfect default channel, the simulated return agrees with
    exact policy evaluation.
    """
    model = machine_model.derive(default_observations=("good", "worn"), default_obs_model=np.eye(2))
    actions = np.array([0, 1])
    exact = evaluate_observation_policy(model, actions)[0]
    result = rollout(model, ConditionPolicy(actions), episodes=4000, horizon=200, seed=1)
    assert abs(result.mean - exact) <= 5.0 * result.std_error + 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.96, 1.0])
def test_repair_on_three_rollout_matches_exact_cost(p):
    """
    10^5 simulated life cycles of the repair-on-3 rule agree with its exact
    cost on the three-component system.
    """
    model = build_three_component(p, default_channel="condition")
    rule = ConditionBasedPolicy((False, False, True))
    exact = evaluate_condition_policy(p, rule, model)
    result = rollout(model, ConditionPolicy(condition_policy_actions(model, rule)), episodes=100_000, seed=9)
    assert abs(result.mean - exact) <= 4.0 * result.std_error + 0.01


def test_condition_policy_needs_observation():
    """
    Without a default observation a condition policy cannot act.
    """
    with pytest.raises(ModelValidationError):
        ConditionPolicy([0, 1]).act(Belief([1.0, 0.0]), None, 0)


def test_greedy_policy_respects_upper_bound(machine_model):
    """
    The return of the greedy policy cannot beat the optimal value.
    """
    config = SolverConfig(epsilon=0.01, max_iterations=300, trajectory_length=40)
    result = solve(machine_model, config, solver="gap")
    simulated = rollout(machine_model, GreedyPolicy(result.bounds), episodes=2000, seed=3)
    assert simulated.mean <= result.upper + 5.0 * simulated.std_error + 0.01


def test_greedy_policy_reaches_lower_bound(machine_model):
    """
    Acting greedily on a solved lower bound earns at least that bound, up to
    three standard errors and the truncated tail.
    """
    config = SolverConfig(epsilon=0.01, max_iterations=300, trajectory_length=40)
    result = solve(machine_model, config, solver="gap")
    simulated = rollout(machine_model, GreedyPolicy(result.bounds), episodes=4000, seed=8)
    assert simulated.mean >= result.lower - 3.0 * simulated.std_error - 0.01


def test_baselines(machine_model):
    """
    Baselines never observe; always-repair uses the last maintenance action.
    """
    assert baseline_policy(machine_model, "do-nothing").act(Belief([1.0, 0.0]), None, 0) == (0, 0)
    assert baseline_policy(machine_model, "always-repair").act(Belief([1.0, 0.0]), None, 7) == (1, 0)
    with pytest.raises(ModelValidationError):
        baseline_policy(machine_model, "panic")


def test_scripted_policy_repeats_last_action():
    """
    Scripts are replayed and their last action held.
    """
    policy = ScriptedPolicy([(0, 1), (1, 0)])
    assert [policy.act(None, None, t) for t in range(4)] == [(0, 1), (1, 0), (1, 0), (1, 0)]
    assert ScriptedPolicy(lambda t: (t % 2, 0)).act(None, None, 3) == (1, 0)
    with pytest.raises(ModelValidationError):
        ScriptedPolicy([])


def test_simulated_gain_of_identical_settings(machine_model):
    """
    With a shared seed, identical settings differ by exactly zero.
    """
    policy = ScriptedPolicy([(0, 1)])
    gain = estimate_metric_by_simulation(
        (machine_model, policy), (machine_model, policy), episodes=100, horizon=20, seed=8
    )
    assert gain.difference == 0.0
    assert gain.std_error == pytest.approx(np.sqrt(2.0) * gain.first.std_error)
    low, high = gain.ci()
    assert low <= 0.0 <= high


def test_remaining_voshm(machine_model):
    """
    Remaining gains are measured per traced step on the lower bounds.
    """
    trace = trace_realization(machine_model, ScriptedPolicy([(0, 1)]), seed=0, horizon=5)
    first = ValueBounds(np.array([[-10.0, -20.0]]), [(0, 0)], np.zeros(2))
    second = ValueBounds(np.array([[-9.0, -19.0]]), [(0, 0)], np.zeros(2))
    gains = remaining_voshm(trace, first, second)
    assert [t for t, _ in gains] == [0, 1, 2, 3, 4]
    assert all(gain == pytest.approx(1.0) for _, gain in gains)
