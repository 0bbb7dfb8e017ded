"""Counter-based randomness for walkers.

Every draw is a pure function of (seed, walker_id, step), so trajectories
are reproducible regardless of scheduling, batching, or thread count, and
distinct walkers read from statistically independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field import STEP_TAG, hash_words, hash_words_array, uniform_from_hash, uniforms_from_hashes, validate_seed


def walker_uniform(seed: int, walker_id: int, step: int) -> float:
    """The uniform draw assigned to (seed, walker_id, step)."""
    return uniform_from_hash(hash_words(seed, [walker_id, step], STEP_TAG))


def walker_uniforms_batch(seed: int, walker_ids: np.ndarray, step: int) -> np.ndarray:
    """Vectorized walker_uniform over an array of walker ids at one step."""
    n = len(walker_ids)
    steps = np.full(n, step, dtype=np.int64)
    return uniforms_from_hashes(
        hash_words_array(seed, [walker_ids, steps], STEP_TAG, n)
    )


@dataclass
class WalkerStream:
    """One walker's private uniform stream; `step` advances per draw."""

    seed: int
    walker_id: int
    step: int = 0

    def __post_init__(self) -> None:
        self.seed = validate_seed(self.seed)

    def uniform(self) -> float:
        u = walker_uniform(self.seed, self.walker_id, self.step)
        self.step += 1
        return u

    def spawn(self, walker_id: int) -> "WalkerStream":
        return WalkerStream(seed=self.seed, walker_id=walker_id)


def poisson_count(stream: WalkerStream, t: float) -> int:
    """Number of rate-one Poisson arrivals in [0, t], drawn from the stream
    by accumulating exponential interarrival times."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t == 0:
        return 0
    total = 0.0
    count = 0
    while True:
        u = stream.uniform()
        # guard the open endpoint: log(0) would be -inf
        total += -math.log(1.0 - u)
        if total > t:
            return count
        count += 1
