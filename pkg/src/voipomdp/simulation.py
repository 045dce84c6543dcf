"""
Monte Carlo life-cycle rollouts.

A rollout samples a true state from the initial belief, then repeatedly asks
a policy for an action pair, accrues the discounted reward, samples the next
state and the joint observation, and updates the belief. Episodes run in
chunks with one child seed per chunk, so results only depend on the master
seed whatever executor runs the chunks.
"""

from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, List, Protocol, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.stats import norm

from .belief import belief_update
from .bounds import Policy, ValueBounds
from .errors import ModelValidationError
from .model import Belief, JointObservation, Matrix, PomdpModel, as_probs
from .utils import logger, spawn_streams, truncation_horizon

CHUNK_EPISODES = 1_000
CONFIDENCE_PRESETS = (0.95, 0.99)


class RolloutPolicy(Protocol):
    """
    Anything that picks an action pair from the current belief, the latest
    default-channel outcome (None before the first one) and the time step.
    """

    observation_driven: bool

    def act(self, belief: Belief, observation: int | None, t: int) -> Tuple[int, int]: ...


class GreedyPolicy:
    """Acts greedily on the lower-bound vectors of solved bounds."""

    observation_driven = False

    def __init__(self, bounds: ValueBounds):
        self.policy = Policy(bounds)

    def act(self, belief: Belief, observation: int | None, t: int) -> Tuple[int, int]:
        return self.policy.action(belief)


class ConditionPolicy:
    """
    Maps the latest default observation to a maintenance action and never
    pays for an observation action.
    """

    observation_driven = True

    def __init__(self, actions: Sequence[int], observation_action: int = 0):
        self.actions = np.asarray(actions, dtype=int)
        self.observation_action = observation_action

    def act(self, belief: Belief, observation: int | None, t: int) -> Tuple[int, int]:
        if observation is None:
            raise ModelValidationError("condition policies need a default observation")
        return int(self.actions[observation]), self.observation_action


class ScriptedPolicy:
    """Plays a fixed sequence of action pairs, repeating the last one."""

    observation_driven = False

    def __init__(self, script: Sequence[Tuple[int, int]] | Callable[[int], Tuple[int, int]]):
        if not callable(script) and not script:
            raise ModelValidationError("scripted policy needs at least one action")
        self.script = script

    def act(self, belief: Belief, observation: int | None, t: int) -> Tuple[int, int]:
        if callable(self.script):
            return self.script(t)
        return self.script[min(t, len(self.script) - 1)]


BASELINES = ("do-nothing", "always-repair")


def baseline_policy(model: PomdpModel, name: str) -> ScriptedPolicy:
    """
    Named baselines: "do-nothing" repeats the first maintenance action and
    "always-repair" the last one (repair everything in factored models,
    replacement in the deck model), both without observation actions.
    """
    if name == "do-nothing":
        return ScriptedPolicy([(0, 0)])
    if name == "always-repair":
        return ScriptedPolicy([(model.n_maintenance - 1, 0)])
    raise ModelValidationError(f"unknown baseline '{name}', expected one of {', '.join(BASELINES)}")


@dataclass(frozen=True)
class RolloutResult:
    """Discounted-return statistics of a batch of episodes."""

    episodes: int
    mean: float
    std_error: float
    horizon: int
    confidence: float = 0.95
    returns: np.ndarray | None = field(default=None, repr=False)

    @property
    def half_width(self) -> float:
        return self.interval_half_width(self.confidence)

    @property
    def lower(self) -> float:
        return self.mean - self.half_width

    @property
    def upper(self) -> float:
        return self.mean + self.half_width

    def interval_half_width(self, level: float) -> float:
        if not 0.0 < level < 1.0:
            raise ValueError(f"confidence level {level} outside (0, 1)")
        return float(norm.ppf(0.5 + level / 2.0)) * self.std_error

    def ci(self, level: float | None = None) -> Tuple[float, float]:
        width = self.interval_half_width(self.confidence if level is None else level)
        return self.mean - width, self.mean + width


@dataclass(frozen=True)
class TraceRecord:
    t: int
    state: int
    belief: Belief
    maintenance_action: int
    observation_action: int
    observation: JointObservation
    reward: float


@dataclass
class PolicyTrace:
    """One simulated life-cycle, step by step."""

    model_name: str
    records: List[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_return(self) -> float:
        return float(sum(record.reward for record in self.records))

    def beliefs(self) -> np.ndarray:
        return np.vstack([record.belief.probs for record in self.records])


def _sample(rng: np.random.Generator, matrix: Matrix, row: int) -> int:
    if sparse.issparse(matrix):
        start, end = matrix.indptr[row], matrix.indptr[row + 1]
        columns, probs = matrix.indices[start:end], matrix.data[start:end]
    else:
        probs = matrix[row]
        columns = None
    cumulative = np.cumsum(probs)
    pick = min(int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")), probs.size - 1)
    return int(columns[pick]) if columns is not None else pick


def _episode(
    model: PomdpModel,
    policy: RolloutPolicy,
    b0: Belief,
    horizon: int,
    rng: np.random.Generator,
    trace: PolicyTrace | None = None,
) -> float:
    state = _sample(rng, b0.probs[None, :], 0)
    belief = b0
    observation = _sample(rng, model.default_obs_model, state) if policy.observation_driven else None
    total, weight = 0.0, 1.0
    for t in range(horizon):
        a_m, a_o = policy.act(belief, observation, t)
        if not (0 <= a_m < model.n_maintenance and 0 <= a_o < model.n_observation_actions) or not model.allowed[a_m, a_o]:
            raise ModelValidationError(f"policy chose disallowed action ({a_m}, {a_o}) at t={t}")
        reward = weight * float(model.reward_vector(a_m, a_o)[state])
        total += reward
        current = state
        state = _sample(rng, model.transition[a_m], state)
        outcome = JointObservation(
            _sample(rng, model.default_obs_model, state),
            _sample(rng, model.obs_model[a_o], state),
        )
        if trace is not None:
            trace.records.append(TraceRecord(t, current, belief, a_m, a_o, outcome, reward))
        belief = belief_update(model, belief, a_m, a_o, outcome)
        observation = outcome.default_index
        weight *= model.discount
    return total


def _run_chunk(model: PomdpModel, policy: RolloutPolicy, b0: Belief, horizon: int, episodes: int, rng) -> np.ndarray:
    return np.array([_episode(model, policy, b0, horizon, rng) for _ in range(episodes)])


def _aggregate(returns: np.ndarray, horizon: int, confidence: float, keep_returns: bool) -> RolloutResult:
    return RolloutResult(
        episodes=returns.size,
        mean=float(returns.mean()),
        std_error=float(returns.std(ddof=1) / np.sqrt(returns.size)),
        horizon=horizon,
        confidence=confidence,
        returns=returns if keep_returns else None,
    )


def rollout(
    model: PomdpModel,
    policy: RolloutPolicy,
    b0: Belief | np.ndarray | None = None,
    episodes: int = 10_000,
    horizon: int | None = None,
    seed: int | np.random.SeedSequence | None = 0,
    confidence: float = 0.95,
    keep_returns: bool = False,
    chunk_size: int = CHUNK_EPISODES,
    executor: Executor | None = None,
) -> RolloutResult:
    """
    Estimates the expected discounted return of a policy.

    Rewards at step t are weighted by gamma^t; the observation cost carries
    one extra discount factor through the model's reward vector.
    Observation-driven policies receive a default-channel outcome of the
    initial state before their first decision.

    Args:
        model: The decision problem.
        policy: What to simulate.
        b0: Initial belief; the model's root belief by default.
        episodes: Number of episodes, at least 2.
        horizon: Steps per episode; by default the smallest one whose
            truncated tail is below 0.01.
        seed: Master seed; chunk i always uses the i-th child stream.
        confidence: Level of the reported interval.
        keep_returns: Retain the per-episode returns.
        chunk_size: Episodes per child stream.
        executor: Optional executor that runs chunks concurrently.

    Returns:
        Aggregate statistics of the discounted returns.
    """
    if episodes < 2:
        raise ValueError("a rollout needs at least 2 episodes")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence level {confidence} outside (0, 1)")
    b0 = model.root_belief() if b0 is None else Belief(as_probs(b0))
    if horizon is None:
        horizon = truncation_horizon(model.discount, model.reward_span)
        logger.info(f"truncating episodes of {model.name} at {horizon} steps")
    sizes = [chunk_size] * (episodes // chunk_size)
    if episodes % chunk_size:
        sizes.append(episodes % chunk_size)
    streams = spawn_streams(seed, len(sizes))
    if executor is None:
        chunks = [_run_chunk(model, policy, b0, horizon, size, rng) for size, rng in zip(sizes, streams)]
    else:
        futures = [executor.submit(_run_chunk, model, policy, b0, horizon, size, rng) for size, rng in zip(sizes, streams)]
        chunks = [future.result() for future in futures]
    result = _aggregate(np.concatenate(chunks), horizon, confidence, keep_returns)
    logger.info(
        f"rollout of {model.name}: {result.episodes} episodes, mean {result.mean:.6g} +/- {result.half_width:.3g}"
    )
    return result


def trace_realization(
    model: PomdpModel,
    policy: RolloutPolicy,
    b0: Belief | np.ndarray | None = None,
    seed: int | None = 0,
    horizon: int | None = None,
) -> PolicyTrace:
    """A single episode with its full step-by-step record."""
    b0 = model.root_belief() if b0 is None else Belief(as_probs(b0))
    if horizon is None:
        horizon = truncation_horizon(model.discount, model.reward_span)
    trace = PolicyTrace(model.name)
    _episode(model, policy, b0, horizon, spawn_streams(seed, 1)[0], trace)
    return trace


@dataclass(frozen=True)
class SimulatedGain:
    """Difference of two rollout means with a combined interval."""

    difference: float
    std_error: float
    confidence: float
    first: RolloutResult
    second: RolloutResult

    def ci(self, level: float | None = None) -> Tuple[float, float]:
        level = self.confidence if level is None else level
        width = float(norm.ppf(0.5 + level / 2.0)) * self.std_error
        return self.difference - width, self.difference + width


def estimate_metric_by_simulation(
    first: Tuple[PomdpModel, RolloutPolicy],
    second: Tuple[PomdpModel, RolloutPolicy],
    b0: Belief | np.ndarray | None = None,
    episodes: int = 10_000,
    horizon: int | None = None,
    seed: int | None = 0,
    confidence: float = 0.95,
    executor: Executor | None = None,
) -> SimulatedGain:
    """
    Simulated gain of the second setting over the first.

    Both rollouts use the same master seed; the interval treats them as
    independent, so it is conservative when the settings share dynamics.
    """
    results = []
    for model, policy in (first, second):
        start = model.root_belief() if b0 is None else b0
        results.append(rollout(model, policy, start, episodes, horizon, seed, confidence, executor=executor))
    one, two = results
    return SimulatedGain(
        difference=two.mean - one.mean,
        std_error=float(np.hypot(one.std_error, two.std_error)),
        confidence=confidence,
        first=one,
        second=two,
    )


def remaining_voshm(trace: PolicyTrace, first: ValueBounds, second: ValueBounds) -> List[Tuple[int, float]]:
    """
    Value of the second setting over the first from each traced belief
    onwards, measured on the lower bounds.
    """
    beliefs = trace.beliefs()
    gains = second.lower_values(beliefs) - first.lower_values(beliefs)
    return [(record.t, float(gain)) for record, gain in zip(trace.records, gains)]
