"""Service delay for the three delivery paths (edge hit, edge transcode, cloud)."""
from __future__ import annotations

from dataclasses import dataclass

from .catalog import SegmentCatalog, segment_size, transcode_feasible
from .radio import (ChannelModel, ComputeModel, InfeasibleAllocation, backhaul_time,
                    transcode_time, tx_rate)

EDGE_HIT = "edge-hit"
EDGE_TRANSCODE = "edge-transcode"
CLOUD = "cloud"
NONE = "none"
CASES = (EDGE_HIT, EDGE_TRANSCODE, CLOUD, NONE)


@dataclass(frozen=True)
class DeliveryDecision:
    """One user's decision for a slot. ``version == 0`` means no segment."""

    user: int
    video: int
    segment: int
    version: int = 0
    transcode: bool = False
    compute_share: float = 0.0
    bandwidth_share: float = 0.0

    @property
    def delivers(self) -> bool:
        return self.version > 0


@dataclass(frozen=True)
class DelayBreakdown:
    case: str
    backhaul: float = 0.0
    transcode: float = 0.0
    radio: float = 0.0

    @property
    def total(self) -> float:
        return self.backhaul + self.transcode + self.radio


def classify_delivery(cat: SegmentCatalog, decision: DeliveryDecision) -> str:
    if not decision.delivers:
        return NONE
    f, k, l = decision.video, decision.segment, decision.version
    if cat.is_cached(f, k, l):
        return EDGE_HIT
    if decision.transcode and transcode_feasible(cat, f, k, l):
        return EDGE_TRANSCODE
    return CLOUD


def service_delay(cat: SegmentCatalog, channel: ChannelModel, compute: ComputeModel,
                  decision: DeliveryDecision, snr: float) -> DelayBreakdown:
    case = classify_delivery(cat, decision)
    if case == NONE:
        return DelayBreakdown(NONE)
    bits = segment_size(cat, decision.video, decision.segment, decision.version)
    rate = tx_rate(channel, decision.bandwidth_share, snr)
    if rate <= 0:
        raise InfeasibleAllocation(f"user {decision.user}: zero radio rate for a chosen version")
    radio = bits / rate
    if case == EDGE_HIT:
        return DelayBreakdown(case, radio=radio)
    if case == EDGE_TRANSCODE:
        return DelayBreakdown(case, transcode=transcode_time(compute, bits, decision.compute_share),
                              radio=radio)
    return DelayBreakdown(case, backhaul=backhaul_time(compute, bits), radio=radio)
