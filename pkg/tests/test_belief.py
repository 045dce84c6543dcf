import numpy as np
import pytest

from voipomdp.belief import (
    belief_predict,
    belief_transition_probability,
    belief_update,
    expected_reward,
    observation_likelihood,
    successors,
    value_of_belief,
)
from voipomdp.errors import EmptyAlphaSet, ModelValidationError, ZeroLikelihoodObservation
from voipomdp.model import AlphaVector, Belief, JointObservation, dense


def test_predict_follows_transition(machine_model):
    """
    Running a good machine moves 20% of the mass to worn.
    """
    predicted = belief_predict(machine_model, Belief([1.0, 0.0]), 0)
    assert np.allclose(predicted.probs, [0.8, 0.2])


def test_update_with_inspection(machine_model):
    """
    An alarm after running raises the belief in worn by Bayes' rule.
    """
    posterior = belief_update(machine_model, Belief([1.0, 0.0]), 0, 1, JointObservation(0, 1))
    expected_worn = 0.2 * 0.9 / (0.8 * 0.1 + 0.2 * 0.9)
    assert posterior.probs[1] == pytest.approx(expected_worn)
    assert posterior.probs.sum() == pytest.approx(1.0)


def test_uninformative_update_equals_prediction(machine_model):
    """
    The trivial observation leaves the predicted belief untouched.
    """
    b = Belief([0.3, 0.7])
    posterior = belief_update(machine_model, b, 0, 0, JointObservation(0, 0))
    assert np.allclose(posterior.probs, belief_predict(machine_model, b, 0).probs)


def test_likelihoods_sum_to_one(random_model):
    """
    Over every joint observation the likelihoods sum to one.
    """
    model = random_model(3, default_outcomes=2)
    b = Belief([0.2, 0.5, 0.3])
    total = sum(
        observation_likelihood(model, b, 1, 1, JointObservation.from_flat(model, 1, k))
        for k in range(model.joint_observation_count(1))
    )
    assert total == pytest.approx(1.0)


def test_zero_likelihood_observation_raises(machine_model):
    """
    A perfect inspection of a freshly repaired machine cannot raise an alarm.
    """
    perfect = machine_model.derive(obs_model=(np.ones((2, 1)), np.eye(2)))
    with pytest.raises(ZeroLikelihoodObservation):
        belief_update(perfect, Belief([1.0, 0.0]), 1, 1, JointObservation(0, 1))


def test_successors_drop_impossible_outcomes(machine_model):
    """
    Posteriors are enumerated only for outcomes with positive likelihood.
    """
    perfect = machine_model.derive(obs_model=(np.ones((2, 1)), np.eye(2)))
    keep, likelihoods, posteriors = successors(perfect, np.array([1.0, 0.0]), 1, 1)
    assert keep.tolist() == [0]
    assert likelihoods.tolist() == pytest.approx([1.0])
    assert np.allclose(posteriors, [[1.0, 0.0]])


def test_belief_size_checked(machine_model):
    """
    A belief over the wrong number of states is rejected.
    """
    with pytest.raises(ModelValidationError):
        belief_predict(machine_model, Belief([1.0]), 0)


def test_action_range_checked(machine_model):
    """
    Out-of-range action indices are rejected.
    """
    with pytest.raises(ModelValidationError):
        expected_reward(machine_model, Belief([1.0, 0.0]), 2, 0)


def test_expected_reward(machine_model):
    """
    Expected reward weights the per-state reward vector by the belief.
    """
    value = expected_reward(machine_model, Belief([0.5, 0.5]), 0, 1)
    assert value == pytest.approx(0.5 * -0.45 + 0.5 * -4.45)


def test_value_of_belief_picks_maximum():
    """
    The value is the best dot product; ties go to the lowest index.
    """
    vectors = [
        AlphaVector(np.array([0.0, -10.0]), (0, 0)),
        AlphaVector(np.array([-5.0, -5.0]), (1, 0)),
        AlphaVector(np.array([-5.0, -5.0]), (1, 1)),
    ]
    value, index = value_of_belief(vectors, Belief([0.0, 1.0]))
    assert value == pytest.approx(-5.0)
    assert index == 1
    value, index = value_of_belief(vectors, Belief([1.0, 0.0]))
    assert (value, index) == (0.0, 0)


def test_value_of_empty_set_raises():
    """
    An empty vector set has no value.
    """
    with pytest.raises(EmptyAlphaSet):
        value_of_belief([], Belief([1.0]))


def test_belief_transition_probability(machine_model):
    """
    The transition probability to a reachable posterior is its observation
    likelihood; an unreachable belief has probability zero.
    """
    b = Belief([1.0, 0.0])
    o = JointObservation(0, 1)
    posterior = belief_update(machine_model, b, 0, 1, o)
    likelihood = observation_likelihood(machine_model, b, 0, 1, o)
    assert belief_transition_probability(machine_model, b, (0, 1), posterior) == pytest.approx(likelihood)
    assert belief_transition_probability(machine_model, b, (0, 1), Belief([0.0, 1.0])) == 0.0


def test_transition_probabilities_sum_to_one(random_model):
    """
    Summed over the distinct successors, transition probabilities total one.
    """
    model = random_model(11)
    b = np.array([0.6, 0.3, 0.1])
    _, _, posteriors = successors(model, b, 0, 1)
    total = sum(belief_transition_probability(model, b, (0, 1), p) for p in posteriors)
    assert total == pytest.approx(1.0)


def test_marginalization_identity_on_random_invocations(random_model):
    """
    Over 10^5 random belief-action draws, posteriors weighted by their
    likelihoods add back up to the predicted belief, and every posterior is
    a distribution.
    """
    draws = 0
    for seed in range(10):
        model = random_model(seed, n_states=2 + seed % 4, default_outcomes=1 + seed % 3, n_outcomes=2 + seed % 2)
        rng = np.random.default_rng(seed)
        beliefs = rng.dirichlet(np.full(model.n_states, 0.5), size=10_000)
        pairs = model.action_pairs
        for b, pick in zip(beliefs, rng.integers(len(pairs), size=len(beliefs))):
            a_m, a_o = pairs[pick]
            _, likelihoods, posteriors = successors(model, b, a_m, a_o)
            assert likelihoods.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(posteriors >= 0.0)
            assert np.allclose(posteriors.sum(axis=1), 1.0, atol=1e-9)
            assert np.allclose(likelihoods @ posteriors, b @ dense(model.transition[a_m]), atol=1e-9)
            draws += 1
    assert draws == 100_000
