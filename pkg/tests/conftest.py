import numpy as np
import pytest

from voipomdp.model import PomdpModel


def _stochastic(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    matrix = rng.random((rows, cols)) + 0.05
    return matrix / matrix.sum(axis=1, keepdims=True)


def build_random_model(
    seed: int,
    n_states: int = 3,
    n_maintenance: int = 2,
    n_outcomes: int = 2,
    discount: float = 0.6,
    default_outcomes: int = 1,
    observation_cost: float | None = None,
) -> PomdpModel:
    """
    A random problem with a trivial observation action and one informative
    action; the default channel is uninformative unless `default_outcomes` > 1.
    """
    rng = np.random.default_rng(seed)
    cost = -rng.uniform(0.0, 1.0) if observation_cost is None else observation_cost
    default_model = np.ones((n_states, 1)) if default_outcomes == 1 else _stochastic(rng, n_states, default_outcomes)
    return PomdpModel(
        states=tuple(f"s{i}" for i in range(n_states)),
        maintenance_actions=tuple(f"m{i}" for i in range(n_maintenance)),
        observation_actions=("none", "inspect"),
        default_observations=tuple(f"e{i}" for i in range(default_outcomes)),
        action_observations=(("none",), tuple(f"o{i}" for i in range(n_outcomes))),
        transition=tuple(_stochastic(rng, n_states, n_states) for _ in range(n_maintenance)),
        default_obs_model=default_model,
        obs_model=(np.ones((n_states, 1)), _stochastic(rng, n_states, n_outcomes)),
        reward_maintenance=-rng.uniform(0.0, 5.0, (n_states, n_maintenance)),
        reward_observation=np.column_stack([np.zeros(n_states), np.full(n_states, cost)]),
        reward_damage=-rng.uniform(0.0, 5.0, n_states),
        discount=discount,
        name=f"random-{seed}",
    )


@pytest.fixture
def random_model():
    """Factory for seeded random models."""
    return build_random_model


@pytest.fixture
def machine_model() -> PomdpModel:
    """
    Two-state machine that wears out: running is free while good, repairing
    restores it; inspecting reveals the condition with accuracy 0.9.
    """
    return PomdpModel(
        states=("good", "worn"),
        maintenance_actions=("run", "repair"),
        observation_actions=("none", "inspect"),
        default_observations=("none",),
        action_observations=(("none",), ("ok", "alarm")),
        transition=(
            np.array([[0.8, 0.2], [0.0, 1.0]]),
            np.array([[1.0, 0.0], [1.0, 0.0]]),
        ),
        default_obs_model=np.ones((2, 1)),
        obs_model=(np.ones((2, 1)), np.array([[0.9, 0.1], [0.1, 0.9]])),
        reward_maintenance=np.array([[0.0, -6.0], [0.0, -6.0]]),
        reward_observation=np.array([[0.0, -0.5], [0.0, -0.5]]),
        reward_damage=np.array([0.0, -4.0]),
        discount=0.9,
        name="machine",
    )


@pytest.fixture
def single_state_model() -> PomdpModel:
    """One state, one action, reward -1 per step."""
    return PomdpModel(
        states=("only",),
        maintenance_actions=("wait",),
        observation_actions=("none",),
        default_observations=("none",),
        action_observations=(("none",),),
        transition=(np.eye(1),),
        default_obs_model=np.ones((1, 1)),
        obs_model=(np.ones((1, 1)),),
        reward_maintenance=np.zeros((1, 1)),
        reward_observation=np.zeros((1, 1)),
        reward_damage=np.array([-1.0]),
        discount=0.95,
        name="single-state",
    )
