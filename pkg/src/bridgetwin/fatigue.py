"""Stress-proxy construction, rainflow cycle extraction, and damage accumulation.

The normalized stress proxy blends class-weighted load intensity, macroscopic
density, and a speed penalty with fixed weights (0.45, 0.45, 0.10).  Cycles
are extracted with the three-point rainflow procedure (ranges compared pairwise
against the most recent range, start-containing ranges counted as half cycles,
leftover ranges counted as halves at the end of data), and accumulate linearly
against a single-slope life curve ``N(S) = A * S**(-m)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ConfigError
from .ingestion import VehicleClass
from .traffic import FundamentalDiagram

# Fixed blend of (load intensity, density, speed penalty); sums to 1.
STRESS_WEIGHTS = (0.45, 0.45, 0.10)

# Fatigue-score alert thresholds: below 50 safe, above 70 critical.
SCORE_SAFE_LIMIT = 50.0
SCORE_MONITOR_LIMIT = 70.0


class Alert(enum.Enum):
    SAFE = "Safe"
    MONITOR = "Monitor"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class StressSample:
    """One normalized stress-proxy sample with its blend components."""

    timestamp: float
    load_intensity: float
    density_norm: float
    speed_penalty: float
    stress: float
    m_env: float = 1.0


@dataclass(frozen=True)
class RainflowCycle:
    range: float
    mean: float
    count: float  # 1.0 for a closed cycle, 0.5 for a residue half

    def __post_init__(self) -> None:
        if self.range < 0:
            raise ValueError(f"cycle range must be >= 0, got {self.range}")
        if self.count not in (0.5, 1.0):
            raise ValueError(f"cycle count must be 0.5 or 1.0, got {self.count}")


@dataclass(frozen=True)
class SNCurve:
    """Single-slope stress-life curve ``N(S) = reference_cycles * S**(-exponent)``."""

    reference_cycles: float = 2e6
    exponent: float = 3.0

    def __post_init__(self) -> None:
        if self.reference_cycles <= 0:
            raise ConfigError(f"reference_cycles must be > 0, got {self.reference_cycles}")
        if self.exponent <= 0:
            raise ConfigError(f"exponent must be > 0, got {self.exponent}")

    def cycles_to_failure(self, stress_range: float) -> float:
        if stress_range <= 0:
            raise ValueError(f"stress range must be > 0, got {stress_range}")
        return self.reference_cycles * stress_range ** (-self.exponent)


@dataclass(frozen=True)
class ClassWeights:
    """Class-average vehicle weights (tonnes) and the normalization ceiling."""

    car: float = 2.0
    truck: float = 15.0
    bus: float = 12.0
    cap: float = 15.0

    def __post_init__(self) -> None:
        if min(self.car, self.truck, self.bus, self.cap) <= 0:
            raise ConfigError("class weights must be > 0")
        if self.cap < max(self.car, self.truck, self.bus):
            raise ConfigError("cap must be >= the heaviest class weight")

    def weight_of(self, cls: VehicleClass) -> float:
        return {VehicleClass.CAR: self.car, VehicleClass.TRUCK: self.truck,
                VehicleClass.BUS: self.bus}[cls]


@dataclass(frozen=True)
class FatigueReport:
    total_damage: float
    fatigue_score: float  # 0..100
    alert: Alert
    cycles: tuple[RainflowCycle, ...] = field(default_factory=tuple)


def stress_proxy(density: float, class_counts: Mapping[VehicleClass, float],
                 speed: float, fd: FundamentalDiagram, cw: ClassWeights,
                 effective_length: float, timestamp: float = 0.0,
                 m_env: float = 1.0) -> StressSample:
    """Blend one observation into a normalized stress sample.

    ``density`` is the stabilized (or simulated mean) density in veh/m and
    ``speed`` the mean speed in m/s.  Load intensity is the mean-weight
    fraction times an occupancy fraction against the jam capacity of the
    segment (``N_ref = jam_density * effective_length``); counts may be
    fractional when they come from the continuum state.
    """
    total = 0.0
    weighted = 0.0
    for cls, count in class_counts.items():
        if count < 0:
            raise ValueError(f"negative count for {cls}: {count}")
        total += count
        weighted += count * cw.weight_of(cls)
    n_ref = fd.jam_density * effective_length
    mean_weight_frac = min(1.0, weighted / (cw.cap * max(1.0, total)))
    occupancy_frac = min(1.0, total / n_ref)
    load_intensity = mean_weight_frac * occupancy_frac

    density_norm = min(1.0, max(0.0, density / fd.jam_density))
    speed_penalty = min(1.0, max(0.0, 1.0 - speed / fd.free_flow_speed))

    w_load, w_density, w_speed = STRESS_WEIGHTS
    stress = w_load * load_intensity + w_density * density_norm + w_speed * speed_penalty
    return StressSample(timestamp, load_intensity, density_norm, speed_penalty, stress, m_env)


def extract_turning_points(series: Sequence[float]) -> list[float]:
    """Reduce a series to strictly alternating local extrema.

    Plateaus collapse to a single point and both endpoints are retained, so
    the result starts and ends where the series does.
    """
    return [series[i] for i in turning_point_indices(series)]


def turning_point_indices(series: Sequence[float]) -> list[int]:
    """Indices of the alternating extrema kept by :func:`extract_turning_points`."""
    deduped: list[int] = []
    for i, value in enumerate(series):
        if not deduped or value != series[deduped[-1]]:
            deduped.append(i)
    if len(deduped) <= 2:
        return deduped
    kept = [deduped[0]]
    for k in range(1, len(deduped) - 1):
        prev_v = series[kept[-1]]
        curr_v = series[deduped[k]]
        next_v = series[deduped[k + 1]]
        if (curr_v - prev_v) * (next_v - curr_v) < 0:
            kept.append(deduped[k])
    kept.append(deduped[-1])
    return kept


def _check_alternating(points: Sequence[float]) -> None:
    for k in range(1, len(points) - 1):
        if (points[k] - points[k - 1]) * (points[k + 1] - points[k]) >= 0:
            raise ValueError(
                f"turning points must strictly alternate; violation at index {k}"
            )
    if len(points) >= 2 and points[0] == points[1]:
        raise ValueError("turning points must strictly alternate; repeated value at start")


def rainflow(turning_points: Sequence[float]) -> list[RainflowCycle]:
    """Extract rainflow cycles from an alternating extrema sequence.

    Three-point comparison: with the three most recent retained points forming
    the previous range Y and the current range X, Y is counted whenever
    X >= Y — as a full cycle when Y is interior, as a half cycle when Y
    contains the starting point (which then advances).  Whatever remains at
    the end of data is counted as half cycles.  Every interval between
    turning points lands in exactly one counted cycle.
    """
    cycles, _ = rainflow_indexed(turning_points, list(range(len(turning_points))))
    return cycles


def rainflow_indexed(turning_points: Sequence[float],
                     indices: Sequence[int]) -> tuple[list[RainflowCycle], list[tuple[int, int]]]:
    """Rainflow with provenance: also returns each cycle's (start, end) source indices.

    ``indices`` maps each turning point back to its position in the original
    sample series, letting callers attach per-cycle environmental modifiers.
    """
    if len(turning_points) != len(indices):
        raise ValueError("turning_points and indices must have equal length")
    _check_alternating(turning_points)

    cycles: list[RainflowCycle] = []
    spans: list[tuple[int, int]] = []

    def emit(a: int, b: int, count: float) -> None:
        lo, hi = stack_vals[a], stack_vals[b]
        cycles.append(RainflowCycle(range=abs(hi - lo), mean=0.5 * (hi + lo), count=count))
        spans.append((stack_idx[a], stack_idx[b]))

    stack_vals: list[float] = []
    stack_idx: list[int] = []

    # The starting point is always the stack bottom: it only ever advances by
    # dropping the bottom entry when a start-containing range is counted.
    for value, src in zip(turning_points, indices):
        stack_vals.append(value)
        stack_idx.append(src)
        while len(stack_vals) >= 3:
            x = abs(stack_vals[-1] - stack_vals[-2])
            y = abs(stack_vals[-2] - stack_vals[-3])
            if x < y:
                break
            if len(stack_vals) == 3:
                # Range Y contains the starting point: half cycle, start advances.
                emit(-3, -2, 0.5)
                del stack_vals[-3]
                del stack_idx[-3]
            else:
                emit(-3, -2, 1.0)
                del stack_vals[-3:-1]
                del stack_idx[-3:-1]

    for k in range(len(stack_vals) - 1):
        emit(k, k + 1, 0.5)
    return cycles, spans


def miner_damage(cycles: Sequence[RainflowCycle], sn: SNCurve,
                 m_env: float | Sequence[float] = 1.0) -> float:
    """Linear damage sum ``D = sum(m_env_i * count_i / N(range_i))``.

    ``m_env`` is either one scalar for the whole inventory or one value per
    cycle.  Zero-range cycles contribute nothing.
    """
    if isinstance(m_env, (int, float)):
        modifiers: Sequence[float] = [float(m_env)] * len(cycles)
    else:
        modifiers = m_env
        if len(modifiers) != len(cycles):
            raise ValueError(
                f"m_env has {len(modifiers)} entries for {len(cycles)} cycles"
            )
    damage = 0.0
    for cycle, modifier in zip(cycles, modifiers):
        if cycle.range == 0.0:
            continue
        damage += modifier * cycle.count / sn.cycles_to_failure(cycle.range)
    return damage


def fatigue_score(damage: float, damage_ref: float) -> tuple[float, Alert]:
    """Map accumulated damage onto the 0-100 score and its alert band."""
    if damage_ref <= 0:
        raise ConfigError(f"damage_ref must be > 0, got {damage_ref}")
    if damage < 0:
        raise ValueError(f"damage must be >= 0, got {damage}")
    score = 100.0 * min(1.0, damage / damage_ref)
    return score, classify_score(score)


def classify_score(score: float) -> Alert:
    if score < SCORE_SAFE_LIMIT:
        return Alert.SAFE
    if score <= SCORE_MONITOR_LIMIT:
        return Alert.MONITOR
    return Alert.CRITICAL
