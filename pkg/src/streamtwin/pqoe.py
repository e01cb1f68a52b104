"""Memory-weighted personalized QoE score and the engagement-based reference."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np


class UndefinedInput(ValueError):
    pass


@dataclass(frozen=True)
class PqoeParams:
    """Memory length (in slots) and per-factor sensitivities."""

    memory: float
    quality_weight: float  # per dB
    switch_weight: float  # per version level
    rebuffer_weight: float  # per second

    def __post_init__(self):
        if not self.memory > 0:
            raise ValueError("memory length must be positive")
        if min(self.quality_weight, self.switch_weight, self.rebuffer_weight) < 0:
            raise ValueError("sensitivity weights must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.memory, self.quality_weight, self.switch_weight,
                         self.rebuffer_weight], dtype=float)

    @classmethod
    def from_array(cls, x) -> "PqoeParams":
        return cls(*(float(v) for v in x))


POPULATION_PRIOR = PqoeParams(memory=50.0, quality_weight=0.1, switch_weight=0.5,
                              rebuffer_weight=1.0)


@dataclass(frozen=True)
class SlotFactors:
    quality: float  # V, dB
    variation: float  # H, levels
    rebuffer: float  # R, seconds
    slot: float  # t
    final_slot: float  # p_u

    def __post_init__(self):
        if min(self.quality, self.variation, self.rebuffer, self.slot) < 0:
            raise ValueError("slot factors must be nonnegative")
        if self.slot > self.final_slot:
            raise ValueError("slot index beyond the final slot of the video")


def memory_factor(memory: float, slot: float, final_slot: float) -> float:
    return math.exp(-(final_slot - slot) / memory)


def pqoe_score(params: PqoeParams, f: SlotFactors) -> float:
    return memory_factor(params.memory, f.slot, f.final_slot) * (
        params.quality_weight * f.quality
        - params.switch_weight * f.variation
        - params.rebuffer_weight * f.rebuffer)


def reference_score(engagement: float, segment_count: int, segment_duration: float,
                    total_rebuffer: float) -> float:
    """5 * q / (K * e + R_total), in [0, 5] when q <= K * e."""
    denom = segment_count * segment_duration + total_rebuffer
    if denom <= 0:
        raise UndefinedInput("video length plus rebuffer time must be positive")
    if engagement < 0 or total_rebuffer < 0:
        raise UndefinedInput("engagement and rebuffer time must be nonnegative")
    return 5.0 * engagement / denom


def accumulate_session(params: PqoeParams, factors: Sequence[SlotFactors]) -> float:
    if len(factors) == 0:
        raise ValueError("empty session")
    return sum(pqoe_score(params, f) for f in factors)


def session_scores(params, quality, variation, rebuffer, slot, final_slot):
    """Vectorized per-slot scores; ``params`` may be a PqoeParams or a 4-array."""
    lam, a, b, g = params.as_array() if isinstance(params, PqoeParams) else params
    m = np.exp(-(np.asarray(final_slot) - np.asarray(slot)) / lam)
    return m * (a * np.asarray(quality) - b * np.asarray(variation) - g * np.asarray(rebuffer))


@dataclass(frozen=True)
class NormalizedPqoe:
    values: dict  # scheme -> {user: normalized}
    degenerate_users: tuple  # users whose totals were all <= 0


def normalize_pqoe(totals: Mapping[str, Mapping[int, float]]) -> NormalizedPqoe:
    """Divide each user's per-scheme totals by that user's best total.

    Users without any positive total get zeros and are reported in
    ``degenerate_users``.
    """
    schemes = list(totals)
    users = sorted({u for s in schemes for u in totals[s]})
    out = {s: {} for s in schemes}
    bad = []
    for u in users:
        best = max(totals[s].get(u, 0.0) for s in schemes)
        if best <= 0:
            bad.append(u)
            for s in schemes:
                out[s][u] = 0.0
            continue
        for s in schemes:
            out[s][u] = totals[s].get(u, 0.0) / best
    if bad:
        warnings.warn(f"users {bad} have no positive PQoE total; normalized to 0", stacklevel=2)
    return NormalizedPqoe(out, tuple(bad))


def mean_normalized(norm: NormalizedPqoe, schemes: Iterable[str] | None = None) -> dict:
    schemes = list(norm.values) if schemes is None else list(schemes)
    return {s: float(np.mean(list(norm.values[s].values()))) if norm.values[s] else 0.0
            for s in schemes}
