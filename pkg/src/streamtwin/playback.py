"""Per-user buffer, rebuffering, delivered quality, switching, and abandonment."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class UserPlaybackState:
    video: int
    buffer: float = 0.0  # seconds
    next_segment: int = 1
    last_version: int = 0  # 0 = nothing delivered in this session
    last_psnr: float = 0.0
    last_size: float = 0.0
    slots_watched: int = 0
    played: float = 0.0  # seconds of content played in this session
    engaged: bool = True
    session_start: int = 0  # episode slot at which the session began
    last_rebuffer: float = 0.0
    last_quality: float = 0.0
    version_history: list[int] = field(default_factory=list)  # spans sessions (used by PF)

    def start_video(self, video: int, slot: int) -> None:
        """Switch to a new video: the old buffer content is discarded."""
        self.video = video
        self.buffer = 0.0
        self.next_segment = 1
        self.last_version = 0
        self.last_psnr = 0.0
        self.last_size = 0.0
        self.slots_watched = 0
        self.played = 0.0
        self.engaged = True
        self.session_start = slot


@dataclass(frozen=True)
class DepartureModel:
    base: float = 0.01
    per_rebuffer_s: float = 0.3
    per_switch_level: float = 0.05
    quality_relief: float = 0.05
    enabled: bool = True

    def probability(self, rebuffer: float, quality: float, variation: float,
                    v_min: float, v_max: float) -> float:
        span = v_max - v_min
        q = (quality - v_min) / span if span > 0 else 1.0
        q = min(max(q, 0.0), 1.0)
        p = (self.base + self.per_rebuffer_s * rebuffer + self.per_switch_level * variation
             - self.quality_relief * q)
        return min(max(p, 0.0), 1.0)


def update_buffer(buffer: float, delivered: bool, e: float, d: float) -> float:
    return max(buffer + (e if delivered else 0.0) - d, 0.0)


def rebuffer_time(delay: float, buffer: float) -> float:
    return max(delay - buffer, 0.0)


def segment_quality(psnr: float | None) -> float:
    """Quality of the segment added this slot (0 when nothing arrives)."""
    return 0.0 if psnr is None else float(psnr)


def quality_variation(l_now: int, l_prev: int) -> int:
    if l_now == 0 or l_prev == 0:
        return 0
    return abs(l_now - l_prev)


def maybe_depart(state: UserPlaybackState, rebuffer: float, quality: float, variation: float,
                 rng: np.random.Generator, model: DepartureModel,
                 v_min: float, v_max: float) -> bool:
    """Sample abandonment; returns the new engaged flag.

    A uniform draw is consumed every call so the random stream does not
    depend on the outcome.
    """
    u = rng.random()
    if not state.engaged or not model.enabled:
        return state.engaged
    p = model.probability(rebuffer, quality, variation, v_min, v_max)
    if u < p:
        state.engaged = False
        state.buffer = 0.0
    return state.engaged
