"""
Point-based solvers: randomized asynchronous backups (Perseus), synchronous
backups with belief-set expansion (PBVI), and upper-bound-guided trials that
descend where the bound gap is largest.

Every solver returns a SolveResult; running out of budget is reported as a
flagged result unless the configuration asks for an exception.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from .belief import successors
from .bounds import UPPER_CAPACITY, Policy, ValueBounds, backup, initial_bounds, upper_q_values
from .errors import BudgetExhausted, ModelValidationError
from .model import Belief, PomdpModel, as_probs
from .utils import BELIEF_MATCH_TOL, logger


@dataclass(frozen=True)
class SolverConfig:
    """Convergence targets and budgets shared by all solvers."""

    epsilon: float = 0.01
    max_iterations: int = 1000
    max_wall_seconds: float | None = None
    belief_set_size: int = 500
    trajectory_length: int = 100
    exploration_seed: int | None = 0
    pruning_tolerance: float = 1e-9
    upper_capacity: int = UPPER_CAPACITY
    raise_on_budget: bool = False

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ModelValidationError(f"epsilon must be positive, got {self.epsilon}")
        for name in ("max_iterations", "belief_set_size", "trajectory_length", "upper_capacity"):
            if getattr(self, name) < 1:
                raise ModelValidationError(f"{name} must be at least 1")
        if self.max_wall_seconds is not None and self.max_wall_seconds <= 0.0:
            raise ModelValidationError("max_wall_seconds must be positive")
        if self.pruning_tolerance < 0.0:
            raise ModelValidationError("pruning_tolerance must be non-negative")

    def digest(self) -> str:
        """Short stable hash identifying the configuration in reports."""
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ConvergenceRecord:
    iteration: int
    wall_seconds: float
    lower: float
    upper: float
    n_alpha: int
    n_beliefs: int


@dataclass
class SolveResult:
    """Bounds produced by a solve together with its convergence history."""

    solver: str
    bounds: ValueBounds
    root: Belief
    iterations: int
    converged: bool
    budget_exhausted: bool
    config_digest: str
    records: List[ConvergenceRecord] = field(default_factory=list)

    @property
    def lower(self) -> float:
        return self.bounds.lower_value(self.root)[0]

    @property
    def upper(self) -> float:
        return self.bounds.upper_value(self.root)

    @property
    def gap(self) -> float:
        return max(0.0, self.upper - self.lower)

    @property
    def policy(self) -> Policy:
        return Policy(self.bounds)


RecordCallback = Callable[[ConvergenceRecord], None]
StopCallback = Callable[[], bool]


class _Run:
    """Wall clock, stop requests and convergence records of one solve."""

    def __init__(
        self,
        name: str,
        model: PomdpModel,
        config: SolverConfig,
        root: Belief | None,
        bounds: ValueBounds | None,
        on_record: RecordCallback | None,
        should_stop: StopCallback | None,
    ):
        self.name = name
        self.config = config
        self.root = root if root is not None else model.root_belief()
        if len(self.root) != model.n_states:
            raise ModelValidationError(f"root belief has {len(self.root)} entries for {model.n_states} states")
        self.bounds = bounds if bounds is not None else initial_bounds(model, config.upper_capacity)
        self.on_record = on_record
        self.should_stop = should_stop
        self.started = time.monotonic()
        self.records: List[ConvergenceRecord] = []
        self.interrupted = False

    def out_of_time(self) -> bool:
        if self.should_stop is not None and self.should_stop():
            self.interrupted = True
        elapsed = time.monotonic() - self.started
        if self.config.max_wall_seconds is not None and elapsed >= self.config.max_wall_seconds:
            self.interrupted = True
        return self.interrupted

    def record(self, iteration: int, n_beliefs: int):
        entry = ConvergenceRecord(
            iteration=iteration,
            wall_seconds=time.monotonic() - self.started,
            lower=self.bounds.lower_value(self.root)[0],
            upper=self.bounds.upper_value(self.root),
            n_alpha=len(self.bounds.actions),
            n_beliefs=n_beliefs,
        )
        self.records.append(entry)
        logger.debug(
            f"{self.name} iteration {iteration}: lower={entry.lower:.6g} upper={entry.upper:.6g} "
            f"|alpha|={entry.n_alpha} |B|={n_beliefs}"
        )
        if self.on_record is not None:
            self.on_record(entry)

    def finish(self, iterations: int, converged: bool) -> SolveResult:
        result = SolveResult(
            solver=self.name,
            bounds=self.bounds,
            root=self.root,
            iterations=iterations,
            converged=converged,
            budget_exhausted=not converged,
            config_digest=self.config.digest(),
            records=self.records,
        )
        if converged:
            logger.info(f"{self.name} converged after {iterations} iterations: [{result.lower:.6g}, {result.upper:.6g}]")
            return result
        reason = "interrupted" if self.interrupted else f"reached {iterations} iterations"
        message = f"{self.name} {reason} before convergence, gap {result.gap:.6g}"
        logger.info(message)
        if self.config.raise_on_budget:
            raise BudgetExhausted(message, result)
        return result


def _root_upper_update(model: PomdpModel, bounds: ValueBounds, root: np.ndarray):
    q, _ = upper_q_values(model, bounds, root)
    bounds.update_upper(root, float(q.max()))


def _unique_beliefs(beliefs: np.ndarray) -> np.ndarray:
    kept: List[np.ndarray] = []
    for b in beliefs:
        if not kept or np.abs(np.vstack(kept) - b).max(axis=1).min() > BELIEF_MATCH_TOL:
            kept.append(b)
    return np.vstack(kept)


def collect_beliefs(
    model: PomdpModel, root: np.ndarray, size: int, trajectory_length: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Gathers beliefs along random trajectories from the root.

    Actions are drawn uniformly from the allowed pairs, observations from
    the model; each trajectory restarts at the root after
    `trajectory_length` steps. Duplicates are removed, so fewer than `size`
    beliefs may come back.
    """
    pairs = model.action_pairs
    collected = [root]
    current = root
    depth = 0
    while len(collected) < size:
        a_m, a_o = pairs[rng.integers(len(pairs))]
        _, likelihoods, posteriors = successors(model, current, a_m, a_o)
        pick = rng.choice(likelihoods.size, p=likelihoods / likelihoods.sum())
        current = posteriors[pick]
        collected.append(current)
        depth += 1
        if depth >= trajectory_length:
            current, depth = root, 0
    return _unique_beliefs(np.vstack(collected))


def perseus_solve(
    model: PomdpModel,
    config: SolverConfig,
    root: Belief | None = None,
    bounds: ValueBounds | None = None,
    on_record: RecordCallback | None = None,
    should_stop: StopCallback | None = None,
) -> SolveResult:
    """
    Randomized point-based value iteration over a fixed belief set.

    Each sweep backs up randomly chosen beliefs whose value has not improved
    yet during the sweep, until every collected belief is at least as good
    as before. Stops when neither the root nor any collected belief improves
    by epsilon over a sweep.
    """
    run = _Run("perseus", model, config, root, bounds, on_record, should_stop)
    rng = np.random.default_rng(config.exploration_seed)
    root_probs = run.root.probs
    beliefs = collect_beliefs(model, root_probs, config.belief_set_size, config.trajectory_length, rng)
    logger.info(f"perseus collected {beliefs.shape[0]} beliefs")
    bounds = run.bounds
    iteration = 0
    converged = False
    while iteration < config.max_iterations and not run.out_of_time():
        iteration += 1
        old = bounds.alphas
        scores = beliefs @ old.T
        values = scores.max(axis=1)
        new_alphas: List[np.ndarray] = []
        new_actions: List[Tuple[int, int]] = []
        pending = np.arange(beliefs.shape[0])
        while pending.size:
            index = int(pending[rng.integers(pending.size)])
            alpha = backup(model, old, beliefs[index])
            if beliefs[index] @ alpha.values >= values[index]:
                vector, action = alpha.values, alpha.greedy_action
            else:
                best = int(np.argmax(scores[index]))
                vector, action = old[best], bounds.actions[best]
            new_alphas.append(vector)
            new_actions.append(action)
            improved = (beliefs[pending] @ vector >= values[pending]) | (pending == index)
            pending = pending[~improved]
        bounds.replace_lower(np.vstack(new_alphas), new_actions)
        bounds.prune_lower(beliefs)
        _root_upper_update(model, bounds, root_probs)
        run.record(iteration, beliefs.shape[0])
        gains = bounds.lower_values(beliefs) - values
        if gains.max() < config.epsilon:
            converged = True
            break
    return run.finish(iteration, converged)


def _farthest_successor(model: PomdpModel, b: np.ndarray, belief_set: np.ndarray) -> Tuple[np.ndarray | None, float]:
    best, best_distance = None, 0.0
    for a_m, a_o in model.action_pairs:
        _, _, posteriors = successors(model, b, a_m, a_o)
        if posteriors.shape[0] == 0:
            continue
        distances = np.abs(posteriors[:, None, :] - belief_set[None, :, :]).sum(axis=2).min(axis=1)
        index = int(np.argmax(distances))
        if distances[index] > best_distance:
            best, best_distance = posteriors[index], float(distances[index])
    return best, best_distance


def expand_beliefs(model: PomdpModel, belief_set: np.ndarray, limit: int) -> np.ndarray:
    """
    Adds, for each belief, the successor farthest in L1 distance from the
    current set, up to `limit` beliefs in total.
    """
    expanded = belief_set
    for b in belief_set:
        if expanded.shape[0] >= limit:
            break
        candidate, distance = _farthest_successor(model, b, expanded)
        if candidate is not None and distance > BELIEF_MATCH_TOL:
            expanded = np.vstack([expanded, candidate])
    return expanded


def pbvi_solve(
    model: PomdpModel,
    config: SolverConfig,
    root: Belief | None = None,
    bounds: ValueBounds | None = None,
    on_record: RecordCallback | None = None,
    should_stop: StopCallback | None = None,
) -> SolveResult:
    """
    Point-based value iteration alternating synchronous backups over the
    belief set with expansion by farthest successors.

    Backups within one sweep all read the vector set as it was at the start
    of the sweep. The set is expanded whenever a sweep improves no belief by
    epsilon; the solve converges when that happens and expansion adds
    nothing.
    """
    run = _Run("pbvi", model, config, root, bounds, on_record, should_stop)
    root_probs = run.root.probs
    beliefs = root_probs[None, :]
    bounds = run.bounds
    iteration = 0
    converged = False
    while iteration < config.max_iterations and not run.out_of_time():
        iteration += 1
        frozen = bounds.alphas.copy()
        values = bounds.lower_values(beliefs)
        for b, value in zip(beliefs, values):
            alpha = backup(model, frozen, b)
            if b @ alpha.values > value:
                bounds.add_alpha(alpha)
        bounds.prune_lower(beliefs)
        _root_upper_update(model, bounds, root_probs)
        run.record(iteration, beliefs.shape[0])
        gains = bounds.lower_values(beliefs) - values
        if gains.max() < config.epsilon:
            grown = expand_beliefs(model, beliefs, config.belief_set_size)
            if grown.shape[0] == beliefs.shape[0]:
                converged = True
                break
            beliefs = grown
    return run.finish(iteration, converged)


def _depth_threshold(epsilon: float, gamma: float, depth: int) -> float:
    """epsilon / gamma^depth, saturating at infinity."""
    if gamma <= 0.0 or depth == 0:
        return epsilon
    exponent = -depth * math.log(gamma)
    return math.inf if exponent > 700.0 else epsilon * math.exp(exponent)


def _excess(bounds: ValueBounds, beliefs: np.ndarray, threshold: float) -> np.ndarray:
    return bounds.upper_values(beliefs) - bounds.lower_values(beliefs) - threshold


def _descent_depth(bounds: ValueBounds, epsilon: float, gamma: float, floor: int) -> int:
    """
    Depth at which epsilon / gamma^t exceeds every gap the bounds allow.

    Beyond it no successor has a positive excess, so a trial that keeps
    choosing the same belief still ends there.
    """
    span = float(bounds.upper_corners.max() - bounds.alphas.min())
    if gamma <= 0.0 or span <= epsilon:
        return floor
    return max(floor, int(math.ceil(math.log(span / epsilon) / -math.log(gamma))) + 1)


def _belief_key(b: np.ndarray) -> bytes:
    return np.round(b, 9).tobytes()


def gap_heuristic_solve(
    model: PomdpModel,
    config: SolverConfig,
    root: Belief | None = None,
    bounds: ValueBounds | None = None,
    on_record: RecordCallback | None = None,
    should_stop: StopCallback | None = None,
) -> SolveResult:
    """
    Trial-based solver guided by the upper bound.

    Each trial descends from the root choosing the upper-bound greedy action
    and the observation with the largest likelihood-weighted excess gap,
    until the gap at depth t falls below epsilon / gamma^t. Lower and upper
    bounds are updated along the path in reverse. Vectors that support no
    visited belief are pruned as the set grows.

    Trials may run deeper than `trajectory_length`, down to the depth where
    the threshold exceeds the widest possible gap. A belief that keeps winning
    the selection (a self-loop under the greedy action) loses it once its
    excess turns negative, and the rarer successors behind it get visited.
    """
    run = _Run("gap", model, config, root, bounds, on_record, should_stop)
    root_probs = run.root.probs
    bounds = run.bounds
    gamma = model.discount
    max_depth = _descent_depth(bounds, config.epsilon, gamma, config.trajectory_length)
    visited: Dict[bytes, np.ndarray] = {_belief_key(root_probs): root_probs}
    prune_at = 2 * len(bounds.actions) + 16
    iteration = 0
    run.record(0, 1)
    converged = bounds.gap(root_probs) <= config.epsilon
    while not converged and iteration < config.max_iterations and not run.out_of_time():
        iteration += 1
        path = [root_probs]
        current = root_probs
        for depth in range(max_depth):
            threshold = _depth_threshold(config.epsilon, gamma, depth)
            if bounds.gap(current) <= threshold:
                break
            q, branches = upper_q_values(model, bounds, current)
            _, likelihoods, posteriors = branches[int(np.argmax(q))]
            if likelihoods.size == 0:
                break
            next_threshold = _depth_threshold(config.epsilon, gamma, depth + 1)
            scores = likelihoods * _excess(bounds, posteriors, next_threshold)
            pick = int(np.argmax(scores))
            if scores[pick] <= 0.0:
                break
            current = posteriors[pick]
            path.append(current)
        for b in reversed(path):
            alpha = backup(model, bounds, b)
            if b @ alpha.values > bounds.lower_value(b)[0]:
                bounds.add_alpha(alpha)
            q, _ = upper_q_values(model, bounds, b)
            bounds.update_upper(b, float(q.max()))
        for b in path[1:]:
            visited.setdefault(_belief_key(b), b)
        if len(bounds.actions) > prune_at:
            removed = bounds.prune_lower(np.vstack(list(visited.values())), config.pruning_tolerance)
            logger.debug(f"gap solver pruned {removed} vectors")
            prune_at = 2 * len(bounds.actions) + 16
        run.record(iteration, len(visited))
        converged = bounds.gap(root_probs) <= config.epsilon
    return run.finish(iteration, converged)


SOLVERS: Dict[str, Callable[..., SolveResult]] = {
    "perseus": perseus_solve,
    "pbvi": pbvi_solve,
    "gap": gap_heuristic_solve,
}


def solve(
    model: PomdpModel,
    config: SolverConfig,
    solver: str = "gap",
    root: Belief | None = None,
    bounds: ValueBounds | None = None,
    on_record: RecordCallback | None = None,
    should_stop: StopCallback | None = None,
) -> SolveResult:
    """Dispatches to a solver by name."""
    try:
        function = SOLVERS[solver]
    except KeyError:
        raise ModelValidationError(f"unknown solver '{solver}', expected one of {sorted(SOLVERS)}") from None
    if root is not None and not isinstance(root, Belief):
        root = Belief(as_probs(root))
    logger.info(f"solving {model.name or 'model'} with {solver} (epsilon={config.epsilon})")
    return function(model, config, root=root, bounds=bounds, on_record=on_record, should_stop=should_stop)
