"""Counter-based random streams for reproducible parallel runs.

Every stream is keyed by ``(seed, worker_id, iteration)`` through a Philox
bit generator, so the draws made by one worker in one iteration are a pure
function of the key and the draw position. Thread count and scheduling
order can never change the numbers a run consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream"]


@dataclass
class RngStream:
    """A deterministic stream of random draws for one (worker, iteration).

    ``draw_counter`` records how many uniform variates have been consumed;
    constructing a stream with a nonzero counter fast-forwards to that
    position, which makes the stream position checkpointable.
    """

    seed: int
    worker_id: int = 0
    iteration: int = 0
    draw_counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.seed < 0 or self.worker_id < 0 or self.iteration < 0:
            raise ValueError("seed, worker_id and iteration must be nonnegative")
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.worker_id, self.iteration)
        )
        self._gen = np.random.Generator(np.random.Philox(ss))
        if self.draw_counter:
            skip = self.draw_counter
            self.draw_counter = 0
            self.uniforms(skip)

    def uniforms(self, n: int) -> np.ndarray:
        """Return ``n`` uniform variates in [0, 1), advancing the stream."""
        out = self._gen.random(n)
        self.draw_counter += n
        return out

    def index_draws(self, n: int, upper: int) -> np.ndarray:
        """Return ``n`` indices uniform over [0, upper), consuming ``n`` draws.

        Derived from uniforms rather than integer rejection sampling so the
        number of consumed draws is always exactly ``n``.
        """
        if upper <= 0:
            raise ValueError("upper must be positive")
        u = self.uniforms(n)
        return np.minimum((u * upper).astype(np.int64), upper - 1)
