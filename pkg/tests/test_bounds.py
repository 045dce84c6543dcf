import numpy as np
import pytest

from voipomdp.bounds import (
    Policy,
    ValueBounds,
    backup,
    blind_lower_bound,
    initial_bounds,
    mdp_value_iteration,
    sawtooth_value,
    update_bounds_at,
)
from voipomdp.errors import EmptyAlphaSet
from voipomdp.model import AlphaVector, Belief


def _bounds(corners=(0.0, 0.0)) -> ValueBounds:
    return ValueBounds(np.array([[-10.0, -10.0]]), [(0, 0)], np.array(corners))


def test_single_state_bounds(single_state_model):
    """
    A single state paying -1 forever with discount 0.95 is worth -20 under
    both initial bounds.
    """
    bounds = initial_bounds(single_state_model)
    assert bounds.lower_value(Belief([1.0]))[0] == pytest.approx(-20.0)
    assert bounds.upper_value(Belief([1.0])) == pytest.approx(-20.0, abs=1e-6)


def test_blind_vectors_are_policy_fixed_points(machine_model):
    """
    Running forever from good is worth -7.2 / 0.28; from worn, -40.
    """
    vectors = blind_lower_bound(machine_model)
    assert [alpha.greedy_action for alpha in vectors] == [(0, 0), (1, 0)]
    assert vectors[0].values == pytest.approx([-7.2 / 0.28, -40.0])


def test_mdp_dominates_blind(random_model):
    """
    The fully observable values bound every blind vector from above.
    """
    model = random_model(5)
    upper = mdp_value_iteration(model)
    for alpha in blind_lower_bound(model):
        assert np.all(alpha.values <= upper + 1e-9)


def test_sawtooth_interpolation():
    """
    An interior point lowers the corner interpolation in proportion to the
    smallest belief ratio.
    """
    bounds = _bounds()
    assert bounds.update_upper(Belief([0.5, 0.5]), -1.0)
    assert sawtooth_value(bounds, Belief([0.5, 0.5])) == pytest.approx(-1.0)
    assert sawtooth_value(bounds, Belief([0.75, 0.25])) == pytest.approx(-0.5)
    assert sawtooth_value(bounds, Belief([1.0, 0.0])) == pytest.approx(0.0)


def test_update_upper_only_tightens():
    """
    Corner updates replace the corner value; looser values are ignored.
    """
    bounds = _bounds()
    assert bounds.update_upper(Belief([1.0, 0.0]), -2.0)
    assert bounds.upper_corners.tolist() == [-2.0, 0.0]
    assert not bounds.update_upper(Belief([1.0, 0.0]), -1.0)
    assert not bounds.update_upper(Belief([0.5, 0.5]), 5.0)


def test_upper_capacity_evicts_oldest():
    """
    Once full, the oldest interior point makes room for the new one.
    """
    bounds = ValueBounds(np.array([[-10.0, -10.0, -10.0]]), [(0, 0)], np.zeros(3), capacity=2)
    bounds.update_upper(np.array([0.5, 0.5, 0.0]), -1.0)
    bounds.update_upper(np.array([0.0, 0.5, 0.5]), -1.0)
    bounds.update_upper(np.array([0.5, 0.0, 0.5]), -1.0)
    assert len(bounds.point_values) == 2
    assert bounds.point_beliefs[0].tolist() == [0.0, 0.5, 0.5]


def test_add_alpha_dominance():
    """
    Dominated vectors are rejected, dominating vectors evict what they beat.
    """
    bounds = ValueBounds(np.array([[-5.0, -5.0], [-1.0, -9.0]]), [(0, 0), (1, 0)], np.zeros(2))
    assert not bounds.add_alpha(AlphaVector(np.array([-6.0, -6.0]), (0, 1)))
    assert bounds.add_alpha(AlphaVector(np.array([-4.0, -4.0]), (0, 1)))
    assert bounds.actions == [(1, 0), (0, 1)]


def test_prune_keeps_supporting_vectors():
    """
    Only vectors maximal at some belief of the set survive pruning.
    """
    bounds = ValueBounds(
        np.array([[0.0, -10.0], [-10.0, 0.0], [-6.0, -6.0]]), [(0, 0), (1, 0), (0, 1)], np.zeros(2)
    )
    removed = bounds.prune_lower(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert removed == 1
    assert bounds.actions == [(0, 0), (1, 0)]


def test_empty_bounds_rejected():
    """
    Bounds cannot start from an empty vector set.
    """
    with pytest.raises(EmptyAlphaSet):
        ValueBounds(np.empty((0, 2)), [], np.zeros(2))
    with pytest.raises(EmptyAlphaSet):
        backup(None, [], Belief([1.0]))


def test_backup_improves_lower_bound(machine_model):
    """
    A backup never lowers the value at the backed-up belief and stays below
    the upper bound.
    """
    bounds = initial_bounds(machine_model)
    b = Belief([0.5, 0.5])
    before = bounds.lower_value(b)[0]
    alpha = backup(machine_model, bounds, b)
    assert b.probs @ alpha.values >= before - 1e-9
    assert b.probs @ alpha.values <= bounds.upper_value(b) + 1e-9


def test_update_bounds_at_narrows_gap(machine_model):
    """
    Repeated local updates shrink the gap at a belief and keep it
    non-negative.
    """
    bounds = initial_bounds(machine_model)
    probs = np.array([0.5, 0.5])
    start = bounds.gap(probs)
    for _ in range(30):
        update_bounds_at(machine_model, bounds, probs)
    assert 0.0 <= bounds.gap(probs) + 1e-9
    assert bounds.gap(probs) < start


def test_policy_follows_maximizing_vector():
    """
    The greedy policy returns the action of the best vector at the belief.
    """
    bounds = ValueBounds(np.array([[0.0, -10.0], [-10.0, 0.0]]), [(0, 0), (1, 1)], np.zeros(2))
    policy = Policy(bounds)
    assert policy(Belief([0.9, 0.1])) == (0, 0)
    assert policy.action(np.array([0.1, 0.9])) == (1, 1)


def test_copy_is_independent():
    """
    Copies do not share storage with the original.
    """
    bounds = _bounds()
    clone = bounds.copy()
    clone.update_upper(Belief([1.0, 0.0]), -3.0)
    clone.add_alpha(AlphaVector(np.array([-1.0, -1.0]), (0, 1)))
    assert bounds.upper_corners.tolist() == [0.0, 0.0]
    assert len(bounds.actions) == 1
