from __future__ import annotations

import numpy as np


class OuNoise:
    """Ornstein-Uhlenbeck process with zero mean, one state per action dimension."""

    def __init__(self, size: int, theta: float = 0.15, sigma: float = 0.2, dt: float = 1.0,
                 rng: np.random.Generator | None = None):
        self.size = size
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.rng = np.random.default_rng(0) if rng is None else rng
        self.reset()

    def reset(self) -> None:
        self.x = np.zeros(self.size)

    def sample(self) -> np.ndarray:
        dx = (self.theta * (0.0 - self.x) * self.dt
              + self.sigma * np.sqrt(self.dt) * self.rng.standard_normal(self.size))
        self.x = self.x + dx
        return self.x

    __call__ = sample


def ou_step(noise: OuNoise) -> np.ndarray:
    return noise.sample()
