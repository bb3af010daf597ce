"""V2I channel: SNR, distributionally robust reliability, Shannon rate, upload duration and energy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class InfeasibleReliabilityError(ValueError):
    """No finite transmission power meets the reliability target."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class ChannelParams:
    noise_power: float = 1e-12  # W, -90 dBm
    antenna_const: float = 1.0
    pathloss_exp: float = 3.0
    fading_mean: float = 2.0
    fading_var: float = 0.4
    snr_target: float = 10.0
    reliability: float = 0.9

    def __post_init__(self):
        for name in ("noise_power", "antenna_const", "pathloss_exp", "fading_mean", "fading_var", "snr_target"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.reliability < 1:
            raise ValueError("reliability must lie in (0, 1)")


def snr(dis: float, power: float, fading_gain: float, params: ChannelParams) -> float:
    if dis <= 0:
        raise ValueError("distance must be > 0")
    return fading_gain * params.antenna_const * dis ** (-params.pathloss_exp) * power / params.noise_power


def worst_case_success_prob(threshold_gain: float, params: ChannelParams) -> float:
    """Infimum of Pr(gain >= c) over all laws with the configured mean and variance (Cantelli)."""
    margin = params.fading_mean - threshold_gain
    if margin <= 0:
        return 0.0
    return margin**2 / (params.fading_var + margin**2)


def threshold_gain(dis: float, power: float, params: ChannelParams) -> float:
    """Fading gain needed to reach the target SNR at this distance and power."""
    return params.snr_target * params.noise_power * dis**params.pathloss_exp / (params.antenna_const * power)


def min_power_for_reliability(dis: float, params: ChannelParams) -> float:
    delta = params.reliability
    margin = math.sqrt(delta * params.fading_var / (1.0 - delta))
    if params.fading_mean <= margin:
        raise InfeasibleReliabilityError(
            f"fading mean {params.fading_mean} <= required margin {margin:.4f}; reliability {delta} unreachable"
        )
    return params.snr_target * params.noise_power * dis**params.pathloss_exp / (
        params.antenna_const * (params.fading_mean - margin)
    )


def shannon_rate(bandwidth: float, snr_value: float) -> float:
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    return bandwidth * math.log2(1.0 + snr_value)


def transmission_duration(
    size: float, rates: Sequence[float], start: float, slot_duration: float = 1.0
) -> float | None:
    """Time needed to push ``size`` bits through a piecewise-constant rate profile.

    ``rates[j]`` holds during ``[j*slot_duration, (j+1)*slot_duration)``. Returns
    ``None`` when the profile ends (vehicle out of coverage) before completion.
    """
    if size <= 0:
        raise ValueError("size must be > 0")
    if start < 0:
        raise ValueError("start must be >= 0")
    remaining = size
    j = int(math.floor(start / slot_duration))
    clock = start
    while j < len(rates):
        end = (j + 1) * slot_duration
        rate = rates[j]
        if rate > 0 and rate * (end - clock) >= remaining:
            return clock + remaining / rate - start
        remaining -= rate * (end - clock)
        clock = end
        j += 1
    return None


def transmission_energy(power: float, duration: float) -> float:
    if power < 0 or duration < 0:
        raise ValueError("power and duration must be >= 0")
    return power * duration


def sample_fading(rng: np.random.Generator, shape, params: ChannelParams) -> np.ndarray:
    """Gaussian fading gains with the configured mean/variance, truncated at zero by resampling."""
    sd = math.sqrt(params.fading_var)
    out = rng.normal(params.fading_mean, sd, size=shape)
    bad = out < 0
    while bad.any():
        out[bad] = rng.normal(params.fading_mean, sd, size=int(bad.sum()))
        bad = out < 0
    return out
