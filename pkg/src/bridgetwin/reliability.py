"""Time-varying reliability index under the normal-approximation limit state.

The margin ``g = R - S`` between structural resistance and the traffic load
effect is summarized by ``beta = (mu_R - mu_S) / sqrt(sigma_R^2 + sigma_S^2)``:
the mean safety margin in standard deviations.  The composite series prefers
the observation-derived index and falls back to the simulation whenever any
observation in the rolling window is invalid (camera outage).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .fatigue import StressSample

# Reliability target below which the breach flag fires (strict comparison).
BETA_TARGET = 3.0


@dataclass(frozen=True)
class ResistanceModel:
    """Resistance statistics; the mean degrades linearly with accumulated damage."""

    mean: float = 4.0  # normalized stress units
    std: float = 0.6
    degradation_rate: float = 0.25  # fraction of mean lost per unit damage

    def __post_init__(self) -> None:
        if self.mean <= 0:
            raise ConfigError(f"resistance mean must be > 0, got {self.mean}")
        if self.std < 0:
            raise ConfigError(f"resistance std must be >= 0, got {self.std}")
        if self.degradation_rate < 0:
            raise ConfigError("degradation_rate must be >= 0")

    def degraded_mean(self, damage: float) -> float:
        return self.mean * max(0.0, 1.0 - self.degradation_rate * damage)


class BetaSource(enum.Enum):
    OBSERVED = "Observed"
    SIMULATED = "Simulated"


@dataclass(frozen=True)
class BetaSample:
    timestamp: float
    beta_sim: float | None
    beta_obs: float | None
    beta_primary: float
    source: BetaSource
    breach: bool


def beta(mu_r: float, sigma_r: float, mu_s: float, sigma_s: float) -> float:
    """Reliability index of the limit state ``R - S``."""
    variance = sigma_r * sigma_r + sigma_s * sigma_s
    if variance <= 0.0:
        raise ValueError("degenerate limit state: both standard deviations are zero")
    return (mu_r - mu_s) / math.sqrt(variance)


def load_stats(window: Sequence[StressSample]) -> tuple[float, float]:
    """Sample mean and sample standard deviation (n-1 denominator) of a stress window."""
    if not window:
        raise ValueError("load_stats requires a non-empty window")
    values = np.array([s.stress for s in window], dtype=np.float64)
    mu = float(np.mean(values))
    sigma = float(np.std(values, ddof=1)) if values.size >= 2 else 0.0
    return mu, sigma


def _windowed_stats(timestamps: np.ndarray, values: np.ndarray,
                    window: float) -> tuple[np.ndarray, np.ndarray]:
    """Rolling mean/std over right-closed windows ``(t - window, t]`` via prefix sums."""
    csum = np.concatenate(([0.0], np.cumsum(values)))
    csq = np.concatenate(([0.0], np.cumsum(values * values)))
    lo = np.searchsorted(timestamps, timestamps - window, side="right")
    hi = np.arange(1, timestamps.size + 1)
    n = (hi - lo).astype(np.float64)
    total = csum[hi] - csum[lo]
    total_sq = csq[hi] - csq[lo]
    mean = total / n
    var = np.zeros_like(mean)
    multi = n >= 2
    var[multi] = np.maximum(0.0, (total_sq[multi] - total[multi] ** 2 / n[multi]) / (n[multi] - 1.0))
    return mean, np.sqrt(var)


def beta_series(sim_stress: Sequence[StressSample], obs_stress: Sequence[StressSample],
                obs_valid: Sequence[bool], resistance: ResistanceModel,
                damage_series: Sequence[float], window: float,
                beta_target: float = BETA_TARGET) -> list[BetaSample]:
    """Compose the simulated, observed, and primary reliability series.

    All inputs share one time grid.  Per timestamp, resistance is degraded by
    the accumulated damage, both stress windows are summarized into
    (mean, std), and the primary index takes the observed value when every
    observation in the window is valid, the simulated one otherwise.
    """
    n = len(sim_stress)
    if not (len(obs_stress) == len(obs_valid) == len(damage_series) == n):
        raise ValueError("beta_series inputs must share one time grid")
    if n == 0:
        return []
    t_sim = np.array([s.timestamp for s in sim_stress], dtype=np.float64)
    t_obs = np.array([s.timestamp for s in obs_stress], dtype=np.float64)
    if not np.array_equal(t_sim, t_obs):
        raise ValueError("simulated and observed stress series are misaligned")

    sim_vals = np.array([s.stress for s in sim_stress], dtype=np.float64)
    obs_vals = np.array([s.stress for s in obs_stress], dtype=np.float64)
    valid = np.array(obs_valid, dtype=bool)

    sim_mean, sim_std = _windowed_stats(t_sim, sim_vals, window)
    obs_mean, obs_std = _windowed_stats(t_sim, obs_vals, window)

    # A window is observation-complete when it contains no invalid sample.
    invalid_csum = np.concatenate(([0], np.cumsum(~valid)))
    lo = np.searchsorted(t_sim, t_sim - window, side="right")
    hi = np.arange(1, n + 1)
    obs_complete = (invalid_csum[hi] - invalid_csum[lo]) == 0

    samples: list[BetaSample] = []
    for k in range(n):
        mu_r = resistance.degraded_mean(float(damage_series[k]))
        b_sim = beta(mu_r, resistance.std, float(sim_mean[k]), float(sim_std[k]))
        if obs_complete[k]:
            b_obs: float | None = beta(mu_r, resistance.std, float(obs_mean[k]), float(obs_std[k]))
            primary, source = b_obs, BetaSource.OBSERVED
        else:
            b_obs = None
            primary, source = b_sim, BetaSource.SIMULATED
        samples.append(
            BetaSample(
                timestamp=float(t_sim[k]),
                beta_sim=b_sim,
                beta_obs=b_obs,
                beta_primary=primary,
                source=source,
                breach=primary < beta_target,
            )
        )
    return samples
