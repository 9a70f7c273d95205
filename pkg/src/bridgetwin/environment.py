"""Weather-driven deterioration modifier.

Weather records are folded into a scalar multiplier ``m_env >= 1`` that scales
per-cycle damage increments downstream.  The multiplier is affine in three
saturating features: complete freeze-thaw cycles in a lookback window, rain
intensity relative to a saturation level, and a wind-rain corrosion potential.
Wind without rain contributes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .ingestion import WeatherRecord, align_weather


@dataclass(frozen=True)
class EnvModifierConfig:
    freeze_threshold: float = 0.0  # deg C
    freeze_thaw_weight: float = 0.10  # per complete cycle
    rain_weight: float = 0.15
    rain_saturation: float = 10.0  # mm/h at which rain saturates
    wind_weight: float = 0.10
    wind_reference: float = 20.0  # m/s
    window: float = 86400.0  # s of freeze-thaw lookback

    def __post_init__(self) -> None:
        if self.freeze_thaw_weight < 0 or self.rain_weight < 0 or self.wind_weight < 0:
            raise ConfigError("modifier weights must be >= 0")
        if self.rain_saturation <= 0:
            raise ConfigError(f"rain_saturation must be > 0, got {self.rain_saturation}")
        if self.wind_reference <= 0:
            raise ConfigError(f"wind_reference must be > 0, got {self.wind_reference}")
        if self.window <= 0:
            raise ConfigError(f"window must be > 0, got {self.window}")


@dataclass(frozen=True)
class EnvState:
    timestamp: float
    m_env: float  # >= 1
    freeze_thaw_cycles_in_window: int
    corrosion_potential: float  # in [0, 1]


def count_freeze_thaw(records: list[WeatherRecord], threshold: float) -> int:
    """Count complete freeze-then-thaw pairs in a sorted record window.

    A cycle is one crossing below the threshold followed later by a crossing
    back above it.  Temperatures exactly at the threshold hold the current
    state (they neither freeze nor thaw), and a trailing unthawed freeze does
    not count.
    """
    cycles = 0
    frozen = False
    for rec in records:
        if not frozen and rec.temperature < threshold:
            frozen = True
        elif frozen and rec.temperature > threshold:
            frozen = False
            cycles += 1
    return cycles


def compute_modifier(record: WeatherRecord, ft_cycles: int, cfg: EnvModifierConfig) -> EnvState:
    """Fold one weather record and a cycle count into the scalar modifier.

    ``corrosion_potential`` couples rain and wind so that wind alone
    contributes zero; every term is non-negative, so ``m_env >= 1``.
    """
    rain_frac = min(1.0, record.precipitation / cfg.rain_saturation)
    wind_frac = min(1.0, record.wind_speed / cfg.wind_reference)
    corrosion = rain_frac * (0.5 + 0.5 * wind_frac)
    m_env = (
        1.0
        + cfg.freeze_thaw_weight * ft_cycles
        + cfg.rain_weight * rain_frac
        + cfg.wind_weight * corrosion
    )
    return EnvState(record.timestamp, m_env, ft_cycles, corrosion)


def modifier_series(weather: list[WeatherRecord], timestamps: list[float],
                    cfg: EnvModifierConfig) -> list[EnvState]:
    """Evaluate the modifier at each timestamp with step-hold weather alignment."""
    if not weather:
        raise ValueError("modifier_series requires at least one weather record")
    states: list[EnvState] = []
    for t in timestamps:
        record = align_weather(weather, t)
        window_records = [r for r in weather if t - cfg.window <= r.timestamp <= t]
        cycles = count_freeze_thaw(window_records, cfg.freeze_threshold)
        state = compute_modifier(record, cycles, cfg)
        states.append(EnvState(t, state.m_env, cycles, state.corrosion_potential))
    return states
