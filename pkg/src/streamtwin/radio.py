"""Radio link capacity, backhaul, and edge transcoding throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass


class InfeasibleAllocation(ValueError):
    """A delivery was scheduled with a zero resource share."""


@dataclass(frozen=True)
class ChannelModel:
    bandwidth: float = 200e6  # Hz
    tx_power_dbm: float = 25.0
    noise_dbm: float = -82.0
    antenna_gain_db: float = 20.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    cell_radius: float = 600.0  # m
    min_distance: float = 10.0  # m
    shadowing: bool = False
    shadowing_sigma_db: float = 4.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.cell_radius <= 0:
            raise ValueError("cell_radius must be positive")
        if not 0 < self.min_distance <= self.cell_radius:
            raise ValueError("min_distance must lie in (0, cell_radius]")


@dataclass(frozen=True)
class ComputeModel:
    edge_capacity: float = 1e9  # cycles/s
    transcode_intensity: float = 10.0  # cycles/bit
    backhaul_rate: float = 200e6  # bps

    def __post_init__(self):
        if min(self.edge_capacity, self.transcode_intensity, self.backhaul_rate) <= 0:
            raise ValueError("compute model parameters must be strictly positive")


def dbm_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def pathloss_db(model: ChannelModel, distance: float) -> float:
    if distance <= 0:
        raise ValueError("distance must be positive")
    return model.pathloss_intercept_db + model.pathloss_slope_db * math.log10(distance / 1000.0)


def received_snr(model: ChannelModel, distance: float, shadow_db: float = 0.0) -> float:
    """Linear SNR P/N_o at ``distance`` metres from the BS."""
    snr_db = (model.tx_power_dbm + model.antenna_gain_db - pathloss_db(model, distance)
              - model.noise_dbm + shadow_db)
    return dbm_to_linear(snr_db)


def tx_rate(model: ChannelModel, share: float, snr: float) -> float:
    """Shannon rate share * W * log2(1 + snr) in bps."""
    if not 0.0 <= share <= 1.0:
        raise ValueError(f"bandwidth share {share} outside [0, 1]")
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return share * model.bandwidth * math.log2(1.0 + snr)


def transcode_time(model: ComputeModel, bits: float, share: float) -> float:
    if bits < 0:
        raise ValueError("bits must be nonnegative")
    if bits == 0:
        return 0.0
    if share <= 0:
        raise InfeasibleAllocation("transcoding scheduled with zero compute share")
    return model.transcode_intensity * bits / (share * model.edge_capacity)


def backhaul_time(model: ComputeModel, bits: float) -> float:
    return bits / model.backhaul_rate
