"""Macroscopic traffic flow on the bridge span.

First-order finite-volume solver for the kinematic-wave conservation law
``d rho/dt + d q(rho)/dx = 0`` with a Greenshields flux
``q(rho) = v_f * rho * (1 - rho/rho_jam)``.  The interface flux solves the
local Riemann problem (Godunov), which makes the update monotone and
conservative: cell densities stay inside [0, rho_jam] without clamping, and
mass changes only through the boundary fluxes.

Compressive density jumps between adjacent cells are reported as shock events
with their Rankine-Hugoniot speed ``s = (q(rho_R) - q(rho_L)) / (rho_R - rho_L)``,
which for the Greenshields flux reduces to ``v_f * (1 - (rho_L + rho_R)/rho_jam)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, SolverError

_BOUND_EPS = 1e-12


@dataclass(frozen=True)
class FundamentalDiagram:
    """Greenshields flux parameters."""

    free_flow_speed: float = 16.7  # m/s
    jam_density: float = 0.12  # veh/m

    def __post_init__(self) -> None:
        if self.free_flow_speed <= 0:
            raise ConfigError(f"free_flow_speed must be > 0, got {self.free_flow_speed}")
        if self.jam_density <= 0:
            raise ConfigError(f"jam_density must be > 0, got {self.jam_density}")

    @property
    def critical_density(self) -> float:
        return 0.5 * self.jam_density

    @property
    def capacity(self) -> float:
        """Peak flow, attained at the critical density."""
        return 0.25 * self.free_flow_speed * self.jam_density


@dataclass(frozen=True)
class SolverConfig:
    cell_count: int = 64
    span_length: float = 250.0  # m
    cfl_target: float = 0.9
    shock_gradient_threshold: float = 0.15  # fraction of jam density per cell

    def __post_init__(self) -> None:
        if self.cell_count < 3:
            raise ConfigError(f"cell_count must be >= 3, got {self.cell_count}")
        if self.span_length <= 0:
            raise ConfigError(f"span_length must be > 0, got {self.span_length}")
        if not 0.0 < self.cfl_target <= 1.0:
            raise ConfigError(f"cfl_target must be in (0, 1], got {self.cfl_target}")
        if self.shock_gradient_threshold <= 0:
            raise ConfigError("shock_gradient_threshold must be > 0")

    @property
    def cell_length(self) -> float:
        return self.span_length / self.cell_count

    def max_dt(self, fd: FundamentalDiagram) -> float:
        return self.cfl_target * self.cell_length / fd.free_flow_speed


@dataclass
class TrafficState:
    """Cell-averaged densities over the span at one instant."""

    time: float
    cell_densities: np.ndarray  # veh/m, one entry per cell
    cell_length: float  # m

    def __post_init__(self) -> None:
        self.cell_densities = np.asarray(self.cell_densities, dtype=np.float64)
        if self.cell_densities.ndim != 1 or self.cell_densities.size == 0:
            raise ValueError("cell_densities must be a non-empty 1-D array")
        if self.cell_length <= 0:
            raise ValueError(f"cell_length must be > 0, got {self.cell_length}")

    def total_vehicles(self) -> float:
        return float(np.sum(self.cell_densities) * self.cell_length)

    def mean_density(self) -> float:
        return float(np.mean(self.cell_densities))


@dataclass(frozen=True)
class ShockEvent:
    """Compressive density jump between adjacent cells."""

    time: float
    position: int  # index of the upstream cell of the jump
    upstream_density: float
    downstream_density: float
    wave_speed: float  # m/s, negative = wave moves upstream
    severity: float  # |jump| / jam density, in (0, 1]


def initial_state(cfg: SolverConfig, density: float = 0.0, time: float = 0.0) -> TrafficState:
    return TrafficState(time, np.full(cfg.cell_count, density, dtype=np.float64), cfg.cell_length)


def _check_density(fd: FundamentalDiagram, rho: float, name: str) -> None:
    if not 0.0 <= rho <= fd.jam_density:
        raise ValueError(f"{name} must be in [0, {fd.jam_density}], got {rho}")


def flux(fd: FundamentalDiagram, rho: float) -> float:
    """Greenshields flow rate at density ``rho`` (veh/s)."""
    _check_density(fd, rho, "density")
    return fd.free_flow_speed * rho * (1.0 - rho / fd.jam_density)


def godunov_flux(fd: FundamentalDiagram, rho_left: float, rho_right: float) -> float:
    """Interface flux of the local Riemann problem.

    For the concave Greenshields flux this is ``min`` of the flux over
    ``[rho_left, rho_right]`` when the left state is the smaller one, and the
    ``max`` over the interval otherwise (the capacity flow when the interval
    straddles the critical density).
    """
    _check_density(fd, rho_left, "rho_left")
    _check_density(fd, rho_right, "rho_right")
    if rho_left <= rho_right:
        return min(flux(fd, rho_left), flux(fd, rho_right))
    if rho_right <= fd.critical_density <= rho_left:
        return fd.capacity
    return max(flux(fd, rho_left), flux(fd, rho_right))


def _flux_array(fd: FundamentalDiagram, rho: np.ndarray) -> np.ndarray:
    return fd.free_flow_speed * rho * (1.0 - rho / fd.jam_density)


def _godunov_flux_array(fd: FundamentalDiagram, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    # Demand/supply form: bit-identical to the min/max-over-interval rule for
    # a concave flux, one branch per side instead of interval scans.
    rho_c = fd.critical_density
    demand = np.where(left <= rho_c, _flux_array(fd, left), fd.capacity)
    supply = np.where(right <= rho_c, fd.capacity, _flux_array(fd, right))
    return np.minimum(demand, supply)


@njit(cache=True)
def _advance_kernel(rho: np.ndarray, inflow: float, v_f: float, jam: float,
                    dt_over_dx: float, n_steps: int, closed: bool) -> np.ndarray:
    n = rho.size
    cap = 0.25 * v_f * jam
    rho_c = 0.5 * jam
    cur = rho.copy()
    fluxes = np.empty(n + 1)
    for _ in range(n_steps):
        for i in range(n + 1):
            left = inflow if i == 0 else cur[i - 1]
            right = cur[i] if i < n else cur[n - 1]
            demand = v_f * left * (1.0 - left / jam) if left <= rho_c else cap
            supply = cap if right <= rho_c else v_f * right * (1.0 - right / jam)
            fluxes[i] = demand if demand < supply else supply
        if closed:
            fluxes[0] = 0.0
            fluxes[n] = 0.0
        for i in range(n):
            cur[i] = cur[i] - dt_over_dx * (fluxes[i + 1] - fluxes[i])
    return cur


def step(state: TrafficState, fd: FundamentalDiagram, cfg: SolverConfig,
         inflow_density: float, dt: float, boundary: str = "open") -> TrafficState:
    """Advance the density field by one explicit finite-volume step.

    ``boundary="open"`` imposes the observed density as the upstream ghost cell
    and copies the last interior cell downstream (free outflow).
    ``boundary="closed"`` forces both boundary fluxes to zero, which makes the
    span mass-tight (used by conservation checks).

    Raises :class:`SolverError` when ``dt`` violates the CFL bound; the solver
    never sub-steps silently.
    """
    dx = state.cell_length
    dt_max = cfg.cfl_target * dx / fd.free_flow_speed
    if dt > dt_max * (1.0 + 1e-12):
        raise SolverError(
            f"CFL violation: dt={dt} exceeds {dt_max} "
            f"(cfl_target={cfg.cfl_target}, dx={dx}, v_f={fd.free_flow_speed})"
        )
    _check_density(fd, inflow_density, "inflow_density")
    rho = state.cell_densities
    if rho.size != cfg.cell_count:
        raise SolverError(f"state has {rho.size} cells, solver configured for {cfg.cell_count}")

    padded = np.empty(rho.size + 2, dtype=np.float64)
    padded[0] = inflow_density
    padded[1:-1] = rho
    padded[-1] = rho[-1]
    fluxes = _godunov_flux_array(fd, padded[:-1], padded[1:])
    if boundary == "closed":
        fluxes[0] = 0.0
        fluxes[-1] = 0.0
    elif boundary != "open":
        raise ConfigError(f"unknown boundary mode {boundary!r}")

    updated = rho - (dt / dx) * (fluxes[1:] - fluxes[:-1])
    # The Godunov update is monotone under the CFL bound, so bound escapes can
    # only come from a scheme bug; fail loudly instead of clamping.
    if np.any(updated < -_BOUND_EPS) or np.any(updated > fd.jam_density + _BOUND_EPS):
        raise SolverError(
            f"density left [0, jam] at t={state.time}: "
            f"min={updated.min()}, max={updated.max()}"
        )
    return TrafficState(state.time + dt, updated, dx)


def advance(state: TrafficState, fd: FundamentalDiagram, cfg: SolverConfig,
            inflow_density: float, dt: float, n_steps: int,
            boundary: str = "open") -> TrafficState:
    """Apply ``n_steps`` solver steps with a constant inflow density.

    Bit-identical to calling :func:`step` repeatedly; the loop is compiled, so
    batch runs pay the interpreter cost once per frame instead of per substep.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    dx = state.cell_length
    dt_max = cfg.cfl_target * dx / fd.free_flow_speed
    if dt > dt_max * (1.0 + 1e-12):
        raise SolverError(
            f"CFL violation: dt={dt} exceeds {dt_max} "
            f"(cfl_target={cfg.cfl_target}, dx={dx}, v_f={fd.free_flow_speed})"
        )
    _check_density(fd, inflow_density, "inflow_density")
    if state.cell_densities.size != cfg.cell_count:
        raise SolverError(
            f"state has {state.cell_densities.size} cells, solver configured for {cfg.cell_count}"
        )
    if boundary not in ("open", "closed"):
        raise ConfigError(f"unknown boundary mode {boundary!r}")
    updated = _advance_kernel(
        state.cell_densities, inflow_density, fd.free_flow_speed, fd.jam_density,
        dt / dx, n_steps, boundary == "closed",
    )
    if np.any(updated < -_BOUND_EPS) or np.any(updated > fd.jam_density + _BOUND_EPS):
        raise SolverError(
            f"density left [0, jam] at t={state.time}: "
            f"min={updated.min()}, max={updated.max()}"
        )
    return TrafficState(state.time + n_steps * dt, updated, dx)


def boundary_fluxes(state: TrafficState, fd: FundamentalDiagram,
                    inflow_density: float) -> tuple[float, float]:
    """(inflow, outflow) interface fluxes of the open-boundary update."""
    rho = state.cell_densities
    f_in = godunov_flux(fd, inflow_density, float(rho[0]))
    f_out = godunov_flux(fd, float(rho[-1]), float(rho[-1]))
    return f_in, f_out


def detect_shocks(prev: TrafficState, curr: TrafficState, fd: FundamentalDiagram,
                  cfg: SolverConfig) -> list[ShockEvent]:
    """Report compressive jumps (density increasing downstream) above threshold.

    Adjacent super-threshold interfaces belong to one physical front; each run
    collapses to a single event at its maximal jump.
    """
    if prev.cell_densities.size != curr.cell_densities.size or prev.cell_length != curr.cell_length:
        raise SolverError("states do not share grid geometry")
    rho = curr.cell_densities
    jumps = rho[1:] - rho[:-1]
    threshold = cfg.shock_gradient_threshold * fd.jam_density
    qualifying = jumps > threshold

    events: list[ShockEvent] = []
    i = 0
    n = qualifying.size
    while i < n:
        if not qualifying[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and qualifying[j + 1]:
            j += 1
        run = slice(i, j + 1)
        best = i + int(np.argmax(jumps[run]))
        rho_up = float(rho[best])
        rho_down = float(rho[best + 1])
        speed = (flux(fd, rho_down) - flux(fd, rho_up)) / (rho_down - rho_up)
        events.append(
            ShockEvent(
                time=curr.time,
                position=best,
                upstream_density=rho_up,
                downstream_density=rho_down,
                wave_speed=speed,
                severity=abs(rho_down - rho_up) / fd.jam_density,
            )
        )
        i = j + 1
    return events


def observed_shock_proxy(densities: list[float], timestamps: list[float],
                         fd: FundamentalDiagram, cfg: SolverConfig) -> list[ShockEvent]:
    """Two-point temporal-gradient analogue of :func:`detect_shocks`.

    Applied to the observed density time series instead of the spatial grid.
    The result is a measurement-side proxy: abrupt observation swings reflect
    detection variability as much as physical waves, so speeds reported here
    are indicative only.
    """
    if len(densities) != len(timestamps):
        raise ValueError("densities and timestamps must have equal length")
    threshold = cfg.shock_gradient_threshold * fd.jam_density
    events: list[ShockEvent] = []
    for k in range(1, len(densities)):
        rho_prev = min(max(densities[k - 1], 0.0), fd.jam_density)
        rho_curr = min(max(densities[k], 0.0), fd.jam_density)
        jump = rho_curr - rho_prev
        if jump > threshold:
            speed = (flux(fd, rho_curr) - flux(fd, rho_prev)) / jump
            events.append(
                ShockEvent(
                    time=timestamps[k],
                    position=k,
                    upstream_density=rho_prev,
                    downstream_density=rho_curr,
                    wave_speed=speed,
                    severity=jump / fd.jam_density,
                )
            )
    return events


def mean_speed(state: TrafficState, fd: FundamentalDiagram) -> float:
    """Density-weighted mean speed; free-flow speed on an empty span."""
    rho = state.cell_densities
    total = float(np.sum(rho))
    if total == 0.0:
        return fd.free_flow_speed
    speeds = fd.free_flow_speed * (1.0 - rho / fd.jam_density)
    return float(np.sum(rho * speeds) / total)
