"""End-to-end batch pipeline: detection frames in, risk series out.

Per frame-interval tick the pipeline (1) folds the frame into the stabilized
observed density, (2) advances the finite-volume solver with that density as
the upstream boundary, (3) evaluates the environmental modifier, and (4) emits
one observed and one simulated stress sample.  The composite stress series
(observed when the camera delivered a frame, simulated during outages) feeds
rainflow extraction, damage accumulation, the reliability series, and the
per-window feature rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .config import RunConfig
from .environment import EnvState, modifier_series
from .errors import ConfigError
from .fatigue import (
    Alert,
    FatigueReport,
    RainflowCycle,
    StressSample,
    fatigue_score,
    rainflow_indexed,
    stress_proxy,
    turning_point_indices,
)
from .forest import FeatureRow, assemble_features
from .ingestion import (
    CLASS_ORDER,
    DetectionFrame,
    ObservedDensity,
    WeatherRecord,
    handle_missing_frame,
    map_to_density,
)
from .reliability import BetaSample, beta_series
from .traffic import (
    ShockEvent,
    TrafficState,
    advance,
    detect_shocks,
    initial_state,
    mean_speed,
    observed_shock_proxy,
)

DEFAULT_WEATHER = WeatherRecord(timestamp=0, temperature=15.0, precipitation=0.0, wind_speed=0.0)


@dataclass
class PipelineResult:
    timestamps: list[int] = field(default_factory=list)
    densities: list[ObservedDensity] = field(default_factory=list)
    states: list[TrafficState] = field(default_factory=list)
    shocks: list[ShockEvent] = field(default_factory=list)
    observed_shocks: list[ShockEvent] = field(default_factory=list)
    env_states: list[EnvState] = field(default_factory=list)
    sim_stress: list[StressSample] = field(default_factory=list)
    obs_stress: list[StressSample] = field(default_factory=list)
    obs_valid: list[bool] = field(default_factory=list)
    cycles: list[RainflowCycle] = field(default_factory=list)
    cycle_m_env: list[float] = field(default_factory=list)
    damage_series: list[float] = field(default_factory=list)
    score_series: list[float] = field(default_factory=list)
    fatigue: FatigueReport = field(
        default_factory=lambda: FatigueReport(total_damage=0.0, fatigue_score=0.0, alert=Alert.SAFE)
    )
    beta: list[BetaSample] = field(default_factory=list)
    feature_rows: list[FeatureRow] = field(default_factory=list)
    dropped_windows: int = 0

    @property
    def final_beta(self) -> float | None:
        return self.beta[-1].beta_primary if self.beta else None


def _observed_stress(density: ObservedDensity, cfg: RunConfig, m_env: float) -> StressSample:
    rho = min(density.rho_stable, cfg.fd.jam_density)
    speed = cfg.fd.free_flow_speed * (1.0 - rho / cfg.fd.jam_density)
    return stress_proxy(
        density=density.rho_stable,
        class_counts=density.class_counts,
        speed=speed,
        fd=cfg.fd,
        cw=cfg.class_weights,
        effective_length=cfg.segment.effective_length,
        timestamp=float(density.timestamp),
        m_env=m_env,
    )


def run_pipeline(frames: list[DetectionFrame], weather: list[WeatherRecord],
                 cfg: RunConfig) -> PipelineResult:
    """Run the full digital-twin pipeline over a detection log.

    Grid timestamps without a frame are treated as camera dropouts: the
    stabilized density holds, the observation is flagged invalid, and the
    simulated branch carries the composite series.  An empty log yields an
    empty result with zero damage.
    """
    result = PipelineResult()
    if not frames:
        return result
    if not weather:
        weather = [replace(DEFAULT_WEATHER, timestamp=frames[0].timestamp)]

    interval = cfg.frame_interval
    t0 = frames[0].timestamp
    by_ts: dict[int, DetectionFrame] = {}
    for frame in frames:
        if (frame.timestamp - t0) % interval != 0:
            raise ConfigError(
                f"frame timestamp {frame.timestamp} is off the {interval} s cadence grid"
            )
        by_ts[frame.timestamp] = frame
    grid = list(range(t0, frames[-1].timestamp + 1, interval))
    result.timestamps = grid

    # Observation branch: density mapping with EMA stabilization and dropout holds.
    prev: ObservedDensity | None = None
    for t in grid:
        frame = by_ts.get(t)
        if frame is not None:
            density = map_to_density(frame, prev, cfg.segment)
        else:
            density = handle_missing_frame(prev, t)
        result.densities.append(density)
        prev = density

    result.env_states = modifier_series(weather, [float(t) for t in grid], cfg.env)

    # Physics branch: sub-step the solver across each frame interval with the
    # stabilized density as the upstream boundary (saturated at jam density).
    dt_max = cfg.solver.max_dt(cfg.fd)
    n_sub = max(1, math.ceil(interval / dt_max))
    dt = interval / n_sub
    state = initial_state(cfg.solver, time=float(t0))
    # The continuum state carries no class labels; spread the simulated vehicle
    # total over the configured class mix (fractional counts are fine).
    mix = cfg.demand.to_profile().class_mix
    speed_ratios: list[float] = []
    for k, t in enumerate(grid):
        result.states.append(state)
        speed = mean_speed(state, cfg.fd)
        speed_ratios.append(speed / cfg.fd.free_flow_speed)
        m_env = result.env_states[k].m_env
        result.obs_stress.append(_observed_stress(result.densities[k], cfg, m_env))
        total = state.total_vehicles()
        sim_counts = {cls: total * mix[cls] for cls in CLASS_ORDER}
        result.sim_stress.append(
            stress_proxy(
                density=state.mean_density(),
                class_counts=sim_counts,
                speed=speed,
                fd=cfg.fd,
                cw=cfg.class_weights,
                effective_length=cfg.segment.effective_length,
                timestamp=float(t),
                m_env=m_env,
            )
        )
        result.obs_valid.append(result.densities[k].valid)
        if k + 1 < len(grid):
            inflow = min(max(result.densities[k].rho_stable, 0.0), cfg.fd.jam_density)
            state = advance(state, cfg.fd, cfg.solver, inflow, dt, n_sub)
            state = TrafficState(float(grid[k + 1]), state.cell_densities, state.cell_length)
            result.shocks.extend(detect_shocks(result.states[-1], state, cfg.fd, cfg.solver))

    result.observed_shocks = observed_shock_proxy(
        [d.rho_stable for d in result.densities], [float(t) for t in grid], cfg.fd, cfg.solver
    )

    # Damage branch: rainflow over the composite stress series, each cycle
    # scaled by the mean environmental modifier across its span.
    primary = [
        obs.stress if valid else sim.stress
        for obs, sim, valid in zip(result.obs_stress, result.sim_stress, result.obs_valid)
    ]
    m_env_series = [e.m_env for e in result.env_states]
    tp_idx = turning_point_indices(primary)
    cycles, spans = rainflow_indexed([primary[i] for i in tp_idx], tp_idx)
    result.cycles = cycles
    damage_at = [0.0] * len(grid)
    for cycle, (i, j) in zip(cycles, spans):
        window = m_env_series[i : j + 1]
        modifier = sum(window) / len(window)
        result.cycle_m_env.append(modifier)
        if cycle.range > 0.0:
            increment = modifier * cycle.count / cfg.sn.cycles_to_failure(cycle.range)
            damage_at[j] += increment

    cumulative = 0.0
    for k in range(len(grid)):
        cumulative += damage_at[k]
        result.damage_series.append(cumulative)
        result.score_series.append(100.0 * min(1.0, cumulative / cfg.damage_ref))

    total_damage = result.damage_series[-1]
    score, alert = fatigue_score(total_damage, cfg.damage_ref)
    result.fatigue = FatigueReport(
        total_damage=total_damage, fatigue_score=score, alert=alert, cycles=tuple(cycles)
    )

    result.beta = beta_series(
        result.sim_stress,
        result.obs_stress,
        result.obs_valid,
        cfg.resistance,
        result.damage_series,
        cfg.reliability_window,
    )

    try:
        result.feature_rows, result.dropped_windows = assemble_features(
            [float(t) for t in grid],
            result.densities,
            speed_ratios,
            [s.time for s in result.shocks],
            result.env_states,
            result.score_series,
            cfg.feature_window,
        )
    except ValueError:
        # Run shorter than one feature window: features are an optional byproduct.
        result.feature_rows, result.dropped_windows = [], 0
    return result
