"""
Single-step belief-space mathematics: prediction, observation likelihoods,
Bayesian updates, expected rewards and the value of a belief under a set of
alpha-vectors.
"""

from typing import Sequence, Tuple

import numpy as np

from .errors import EmptyAlphaSet, ModelValidationError, ZeroLikelihoodObservation
from .model import AlphaVector, Belief, JointObservation, PomdpModel, as_probs
from .utils import BELIEF_MATCH_TOL, LIKELIHOOD_FLOOR


def _check_action(model: PomdpModel, a_m: int, a_o: int | None = None):
    if not 0 <= a_m < model.n_maintenance:
        raise ModelValidationError(f"maintenance action {a_m} out of range")
    if a_o is not None and not 0 <= a_o < model.n_observation_actions:
        raise ModelValidationError(f"observation action {a_o} out of range")


def _check_belief(model: PomdpModel, probs: np.ndarray):
    if probs.size != model.n_states:
        raise ModelValidationError(f"belief has {probs.size} entries for {model.n_states} states")


def predict(model: PomdpModel, probs: np.ndarray, a_m: int) -> np.ndarray:
    """b^a(s') = sum_s p(s'|s, a_M) b(s), on raw arrays."""
    return model.transition[a_m].T @ probs


def successors(model: PomdpModel, probs: np.ndarray, a_m: int, a_o: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Enumerates the reachable posteriors of one action pair.

    Observations whose likelihood does not exceed the numeric floor are
    dropped.

    Args:
        model: The decision problem.
        probs: Current belief as a raw vector.
        a_m: Maintenance action index.
        a_o: Observation action index.

    Returns:
        (flat observation indices, likelihoods, posteriors as rows).
    """
    weighted = model.joint_likelihood(a_o) * predict(model, probs, a_m)[:, None]
    likelihoods = weighted.sum(axis=0)
    keep = np.flatnonzero(likelihoods > LIKELIHOOD_FLOOR)
    posteriors = (weighted[:, keep] / likelihoods[keep]).T
    return keep, likelihoods[keep], posteriors


def belief_predict(model: PomdpModel, b: Belief | np.ndarray, a_m: int) -> Belief:
    """
    Propagates a belief through the transition model of a maintenance action.

    Args:
        model: The decision problem.
        b: Current belief.
        a_m: Maintenance action index.

    Returns:
        The predicted belief b^a.
    """
    probs = as_probs(b)
    _check_belief(model, probs)
    _check_action(model, a_m)
    return Belief(predict(model, probs, a_m))


def observation_likelihood(
    model: PomdpModel, b: Belief | np.ndarray, a_m: int, a_o: int, o: JointObservation
) -> float:
    """
    Probability p(o | b, a) of a joint observation, the normalizing constant
    of the Bayesian update.
    """
    probs = as_probs(b)
    _check_belief(model, probs)
    _check_action(model, a_m, a_o)
    column = model.joint_likelihood(a_o)[:, o.flat(model, a_o)]
    return float(column @ predict(model, probs, a_m))


def belief_update(model: PomdpModel, b: Belief | np.ndarray, a_m: int, a_o: int, o: JointObservation) -> Belief:
    """
    Bayesian posterior after taking (a_M, a_O) and receiving `o`.

    Raises:
        ZeroLikelihoodObservation: When p(o|b, a) does not exceed 1e-300.
    """
    probs = as_probs(b)
    _check_belief(model, probs)
    _check_action(model, a_m, a_o)
    predicted = predict(model, probs, a_m)
    column = model.joint_likelihood(a_o)[:, o.flat(model, a_o)]
    likelihood = float(column @ predicted)
    if likelihood <= LIKELIHOOD_FLOOR:
        raise ZeroLikelihoodObservation(
            f"observation {o} has likelihood {likelihood!r} under action {model.action_label(a_m, a_o)}"
        )
    # A constant likelihood column carries no information.
    if np.all(column == column[0]):
        return Belief(predicted)
    return Belief(column * predicted / likelihood)


def expected_reward(model: PomdpModel, b: Belief | np.ndarray, a_m: int, a_o: int) -> float:
    """
    Expected immediate reward b.R_M + gamma b.R_O + b.R_D.

    The observation cost is discounted by one step because its outcome only
    materializes at the next decision step.
    """
    probs = as_probs(b)
    _check_belief(model, probs)
    _check_action(model, a_m, a_o)
    return float(probs @ model.reward_vector(a_m, a_o))


def alpha_matrix(gamma_set: Sequence[AlphaVector] | np.ndarray) -> np.ndarray:
    """Stacks a vector set into an (n, |S|) array."""
    if isinstance(gamma_set, np.ndarray):
        return np.atleast_2d(gamma_set)
    if len(gamma_set) == 0:
        return np.empty((0, 0))
    return np.vstack([alpha.values for alpha in gamma_set])


def value_of_belief(gamma_set: Sequence[AlphaVector] | np.ndarray, b: Belief | np.ndarray) -> Tuple[float, int]:
    """
    Value of a belief under a piece-wise linear convex value function.

    Returns:
        (max over alpha of b.alpha, index of the maximizing vector); ties go
        to the lowest index.

    Raises:
        EmptyAlphaSet: If the set has no vectors.
    """
    vectors = alpha_matrix(gamma_set)
    if vectors.shape[0] == 0 or vectors.size == 0:
        raise EmptyAlphaSet("cannot evaluate a belief against an empty alpha-vector set")
    scores = vectors @ as_probs(b)
    index = int(np.argmax(scores))
    return float(scores[index]), index


def belief_transition_probability(
    model: PomdpModel, b: Belief | np.ndarray, a: Tuple[int, int], b_next: Belief | np.ndarray
) -> float:
    """
    Probability of moving from `b` to `b_next` under action pair `a`: the
    summed likelihood of every joint observation whose posterior matches
    `b_next` within 1e-9 in L-infinity distance.
    """
    a_m, a_o = a
    probs = as_probs(b)
    _check_belief(model, probs)
    _check_action(model, a_m, a_o)
    target = as_probs(b_next)
    _, likelihoods, posteriors = successors(model, probs, a_m, a_o)
    if likelihoods.size == 0:
        return 0.0
    match = np.abs(posteriors - target).max(axis=1) <= BELIEF_MATCH_TOL
    return float(likelihoods[match].sum())
