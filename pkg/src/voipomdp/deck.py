"""
Corroding deck structure: four condition levels combined with a
deterioration-rate index and a time index for a finite planning horizon,
closed by an absorbing terminal state.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import sparse

from .errors import SpecInvariantViolation
from .metrics import make_perm
from .model import PomdpModel
from .utils import STOCHASTIC_TOL, logger

MAINTENANCE_ACTIONS = ("no-repair", "minor-repair", "major-repair", "replace")
OBSERVATION_ACTIONS = ("none", "visual", "monitoring")
RATE_SETBACK = 3
# 13,945 states at the default size; ~90-step realizations need a horizon of 90
DEFAULT_HORIZON = 42

VISUAL_OBSERVATION = np.array(
    [
        [0.63, 0.37, 0.00, 0.00],
        [0.10, 0.63, 0.27, 0.00],
        [0.00, 0.10, 0.63, 0.27],
        [0.00, 0.00, 0.20, 0.80],
    ]
)

MONITORING_OBSERVATION = np.array(
    [
        [0.80, 0.20, 0.00, 0.00],
        [0.05, 0.80, 0.15, 0.00],
        [0.00, 0.05, 0.80, 0.15],
        [0.00, 0.00, 0.10, 0.90],
    ]
)


def _array_field(values):
    return field(default_factory=lambda: np.array(values, dtype=float))


@dataclass(frozen=True)
class DeckModelSpec:
    """
    Inputs of the deck model.

    `deterioration[tau, i]` is the probability of moving from condition i to
    i + 1 in one step at rate index tau under no repair; the worst condition
    never improves on its own. Repair blocks map the current condition to
    the next one and do not depend on the rate.
    """

    deterioration: np.ndarray
    minor_repair: np.ndarray
    major_repair: np.ndarray
    horizon: int = DEFAULT_HORIZON
    discount: float = 0.95
    minor_repair_cost: np.ndarray = _array_field([-60.0, -110.0, -160.0, -280.0])
    major_repair_cost: np.ndarray = _array_field([-105.0, -195.0, -290.0, -390.0])
    replace_cost: float = -820.0
    visual_cost: float = -4.5
    monitoring_cost: float = -7.5
    damage_cost: np.ndarray = _array_field([-5.0, -40.0, -120.0, -250.0])
    visual_observation: np.ndarray = _array_field(VISUAL_OBSERVATION)
    monitoring_observation: np.ndarray = _array_field(MONITORING_OBSERVATION)

    def __post_init__(self):
        for name in (
            "deterioration",
            "minor_repair",
            "major_repair",
            "minor_repair_cost",
            "major_repair_cost",
            "damage_cost",
            "visual_observation",
            "monitoring_observation",
        ):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        self.validate()

    @property
    def condition_count(self) -> int:
        return self.deterioration.shape[1] + 1

    @property
    def rate_count(self) -> int:
        return self.deterioration.shape[0]

    @property
    def state_count(self) -> int:
        return self.condition_count * self.rate_count * self.horizon + 1

    def validate(self):
        """
        Raises:
            SpecInvariantViolation: On any malformed block, cost or size.
        """
        if self.deterioration.ndim != 2 or self.deterioration.size == 0:
            raise SpecInvariantViolation("deterioration must be a non-empty (rates, conditions - 1) table")
        if np.any(self.deterioration < 0.0) or np.any(self.deterioration > 1.0):
            raise SpecInvariantViolation("deterioration probabilities must lie in [0, 1]")
        if self.horizon < 1:
            raise SpecInvariantViolation("horizon must be at least 1")
        if not 0.0 <= self.discount < 1.0:
            raise SpecInvariantViolation(f"discount {self.discount} outside [0, 1)")
        n = self.condition_count
        for name in ("minor_repair", "major_repair", "visual_observation", "monitoring_observation"):
            block = getattr(self, name)
            if block.shape != (n, n):
                raise SpecInvariantViolation(f"{name} must be {n} x {n}, got {block.shape}")
            if np.any(block < 0.0) or np.any(np.abs(block.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
                raise SpecInvariantViolation(f"{name} rows must be probability distributions")
        for name in ("minor_repair_cost", "major_repair_cost", "damage_cost"):
            if getattr(self, name).shape != (n,):
                raise SpecInvariantViolation(f"{name} needs {n} entries")
        costs = np.concatenate(
            [
                self.minor_repair_cost,
                self.major_repair_cost,
                self.damage_cost,
                [self.replace_cost, self.visual_cost, self.monitoring_cost],
            ]
        )
        if np.any(costs > 0.0):
            raise SpecInvariantViolation("deck costs must be non-positive")


def synth_deck_spec(
    seed: int | None = 0,
    rate_count: int = 83,
    horizon: int = DEFAULT_HORIZON,
    condition_count: int = 4,
    peak: Tuple[float, float, float] = (0.20, 0.28, 0.35),
    onset: float = 20.0,
) -> DeckModelSpec:
    """
    Synthetic deck inputs with deterioration probabilities rising in the rate
    index and saturating, plus mild seeded noise kept monotone.

    The numbers are illustrative; they are not measured corrosion data.
    """
    rng = np.random.default_rng(seed)
    rates = np.arange(1, rate_count + 1, dtype=float)
    ramp = 1.0 - np.exp(-rates / onset)
    peaks = np.resize(np.asarray(peak, dtype=float), condition_count - 1)
    table = ramp[:, None] * peaks[None, :]
    table *= 1.0 + 0.05 * rng.standard_normal(table.shape)
    table = np.maximum.accumulate(np.clip(table, 0.0, 0.95), axis=0)

    minor = np.zeros((condition_count, condition_count))
    minor[0, 0] = 1.0
    for i in range(1, condition_count):
        minor[i, i - 1] = 0.85
        minor[i, i] = 0.15
    major = np.zeros((condition_count, condition_count))
    major[:, 0] = 0.90
    major[:, 1] = 0.10
    return DeckModelSpec(deterioration=table, minor_repair=minor, major_repair=major, horizon=horizon)


def _index(spec: DeckModelSpec, condition: np.ndarray, rate: np.ndarray, time: np.ndarray) -> np.ndarray:
    return (condition * spec.rate_count + rate) * spec.horizon + time


def _transition(spec: DeckModelSpec, action: str) -> sparse.csr_matrix:
    n_cond, n_rate, horizon = spec.condition_count, spec.rate_count, spec.horizon
    terminal = spec.state_count - 1
    condition, rate, time = (grid.ravel() for grid in np.indices((n_cond, n_rate, horizon)))
    source = _index(spec, condition, rate, time)

    if action == "no-repair":
        blocks = np.zeros((source.size, n_cond))
        move = np.zeros(source.size)
        deteriorating = condition < n_cond - 1
        move[deteriorating] = spec.deterioration[rate[deteriorating], condition[deteriorating]]
        blocks[np.arange(source.size), condition] = 1.0 - move
        blocks[np.flatnonzero(deteriorating), condition[deteriorating] + 1] = move[deteriorating]
        next_rate = np.minimum(rate + 1, n_rate - 1)
    elif action == "minor-repair":
        blocks = spec.minor_repair[condition]
        next_rate = np.minimum(rate + 1, n_rate - 1)
    elif action == "major-repair":
        blocks = spec.major_repair[condition]
        next_rate = np.maximum(rate - RATE_SETBACK, 0)
    elif action == "replace":
        blocks = np.zeros((source.size, n_cond))
        blocks[:, 0] = 1.0
        next_rate = np.zeros_like(rate)
    else:
        raise SpecInvariantViolation(f"unknown deck action '{action}'")

    rows, cols, values = [], [], []
    final = time == horizon - 1
    for target in range(n_cond):
        weight = blocks[:, target]
        keep = (weight > 0.0) & ~final
        rows.append(source[keep])
        cols.append(_index(spec, np.full(keep.sum(), target), next_rate[keep], time[keep] + 1))
        values.append(weight[keep])
    rows.append(np.append(source[final], terminal))
    cols.append(np.full(final.sum() + 1, terminal))
    values.append(np.ones(final.sum() + 1))
    return sparse.csr_matrix(
        (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
        shape=(spec.state_count, spec.state_count),
    )


def build_deck_model(spec: DeckModelSpec, setting: int = 1) -> PomdpModel:
    """
    Flat deck model with time-augmented states and an absorbing terminal.

    Setting 1 offers visual and monitoring observations as optional actions;
    replacement is never combined with an observation, leaving 10 action
    pairs. Setting 2 keeps the 4 maintenance actions with the monitoring
    channel always on and free.

    Raises:
        SpecInvariantViolation: If the spec is malformed.
    """
    if setting not in (1, 2):
        raise SpecInvariantViolation(f"setting must be 1 or 2, got {setting}")
    n_cond, n_rate, horizon = spec.condition_count, spec.rate_count, spec.horizon
    n_states = spec.state_count
    condition = np.indices((n_cond, n_rate, horizon))[0].ravel()
    live = slice(0, n_states - 1)

    transition = tuple(_transition(spec, action) for action in MAINTENANCE_ACTIONS)
    if np.any(np.diff(transition[0].indptr) > 2):
        raise SpecInvariantViolation("no-repair rows must have at most two successors")

    reward_maintenance = np.zeros((n_states, len(MAINTENANCE_ACTIONS)))
    reward_maintenance[live, 1] = spec.minor_repair_cost[condition]
    reward_maintenance[live, 2] = spec.major_repair_cost[condition]
    reward_maintenance[live, 3] = spec.replace_cost
    reward_observation = np.zeros((n_states, len(OBSERVATION_ACTIONS)))
    reward_observation[live, 1] = spec.visual_cost
    reward_observation[live, 2] = spec.monitoring_cost
    reward_damage = np.zeros(n_states)
    reward_damage[live] = spec.damage_cost[condition]

    conditions = tuple(str(c + 1) for c in range(n_cond))
    terminal_row = np.zeros((1, n_cond))
    terminal_row[0, 0] = 1.0
    visual = np.vstack([spec.visual_observation[condition], terminal_row])
    monitoring = np.vstack([spec.monitoring_observation[condition], terminal_row])

    allowed = np.ones((len(MAINTENANCE_ACTIONS), len(OBSERVATION_ACTIONS)), dtype=bool)
    allowed[3, 1:] = False
    states = tuple(
        f"c{c + 1}-r{r + 1}-t{t}" for c in range(n_cond) for r in range(n_rate) for t in range(horizon)
    ) + ("terminal",)
    model = PomdpModel(
        states=states,
        maintenance_actions=MAINTENANCE_ACTIONS,
        observation_actions=OBSERVATION_ACTIONS,
        default_observations=("none",),
        action_observations=(("none",), conditions, conditions),
        transition=transition,
        default_obs_model=np.ones((n_states, 1)),
        obs_model=(np.ones((n_states, 1)), visual, monitoring),
        reward_maintenance=reward_maintenance,
        reward_observation=reward_observation,
        reward_damage=reward_damage,
        discount=spec.discount,
        allowed=allowed,
        initial_state=int(_index(spec, np.array(0), np.array(0), np.array(0))),
        name=f"deck-h{horizon}",
    )
    if setting == 2:
        model = make_perm(model, OBSERVATION_ACTIONS.index("monitoring")).model.derive(name=f"deck-h{horizon}-setting2")
    logger.debug(f"built {model.name}: {model.n_states} states, {len(model.action_pairs)} actions")
    return model
