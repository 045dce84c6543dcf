import logging
from typing import List

import numpy as np

# Configure logging for the project
logger = logging.getLogger("voipomdp")

STOCHASTIC_TOL = 1e-9
LIKELIHOOD_FLOOR = 1e-300
BELIEF_MATCH_TOL = 1e-9
SPARSE_DENSITY = 0.05


def spawn_streams(seed: int | np.random.SeedSequence | None, count: int) -> List[np.random.Generator]:
    """
    Derives independent random generators from a master seed.

    Child streams come from `numpy.random.SeedSequence.spawn`, so stream `i`
    is the same whatever the number of workers consuming the streams.

    Args:
        seed: Master seed or seed sequence. None draws fresh OS entropy.
        count: Number of streams.

    Returns:
        A list of `count` generators.
    """
    sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = sequence.spawn(count)
    return [np.random.default_rng(child) for child in children]


def truncation_horizon(discount: float, reward_span: float, resolution: float = 0.01) -> int:
    """
    Smallest H with gamma^H * reward_span / (1 - gamma) < resolution.

    Args:
        discount: Discount factor in (0, 1).
        reward_span: Largest reward magnitude of the model.
        resolution: Reporting resolution of the discounted return.

    Returns:
        The truncation horizon (at least 1).
    """
    if reward_span <= 0.0 or discount <= 0.0:
        return 1
    bound = reward_span / (1.0 - discount)
    if bound < resolution:
        return 1
    horizon = int(np.ceil(np.log(resolution / bound) / np.log(discount)))
    while discount**horizon * bound >= resolution:
        horizon += 1
    return max(horizon, 1)
