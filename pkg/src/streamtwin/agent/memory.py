from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray


class ReplayMemory:
    """Fixed-capacity ring of (s, a, r, s') tuples with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def store(self, s, a, r, s2) -> None:
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """Uniform sample without replacement within the batch."""
        if n > self.size:
            raise ValueError(f"requested {n} tuples, only {self.size} stored")
        idx = rng.choice(self.size, size=n, replace=False)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx])
