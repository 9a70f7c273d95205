"""Seeded Monte Carlo ensembles over the full pipeline.

Each replicate owns streams derived from (master seed, replicate index,
parameter name), so the ensemble is bit-reproducible regardless of how many
worker processes execute it; results are reduced in replicate order.  The
summary carries the fatigue-score distribution: nearest-rank percentiles,
alert-band fractions, and a fixed-bin histogram.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .config import DistributionSpec, RunConfig, config_from_dict, config_to_dict, set_by_path
from .errors import BridgeTwinError, ConfigError, ReplicateError
from .fatigue import SCORE_MONITOR_LIMIT, SCORE_SAFE_LIMIT
from .ingestion import WeatherRecord, generate_synthetic_traffic
from .pipeline import PipelineResult, run_pipeline
from .seeding import RandomStream, derive_seed

HISTOGRAM_BIN_WIDTH = 5.0
_TRUNCATION_ATTEMPTS = 1000


@dataclass(frozen=True)
class RiskSummary:
    scores: tuple[float, ...]  # per replicate, in replicate order
    seeds: tuple[int, ...]
    final_betas: tuple[float, ...]
    p50: float
    p90: float
    frac_safe: float
    frac_monitor: float
    frac_critical: float
    histogram: tuple[tuple[float, float, int], ...]  # (bin_lo, bin_hi, count)


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: element ``ceil(q*n)`` (1-based) of the sorted list."""
    if not values:
        raise ValueError("percentile of an empty list")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    ordered = sorted(values)
    # Guard against float products like 0.9*1000 = 900.0000000000001.
    rank = math.ceil(q * len(ordered) - 1e-9)
    return ordered[max(0, rank - 1)]


def sample_value(spec: DistributionSpec, stream: RandomStream) -> float:
    """Draw one value; truncated kinds resample until in range (bounded attempts)."""
    def draw() -> float:
        if spec.kind == "fixed":
            return spec.params[0]
        if spec.kind == "uniform":
            return stream.uniform(spec.params[0], spec.params[1])
        if spec.kind == "normal":
            return stream.normal(spec.params[0], spec.params[1])
        if spec.kind == "lognormal":
            return stream.lognormal(spec.params[0], spec.params[1])
        raise ConfigError(f"unknown distribution kind {spec.kind!r}")

    if spec.truncation is None:
        return draw()
    lo, hi = spec.truncation
    for _ in range(_TRUNCATION_ATTEMPTS):
        value = draw()
        if lo <= value <= hi:
            return value
    raise ConfigError(
        f"truncation starvation for parameter {spec.name!r}: "
        f"no draw landed in [{lo}, {hi}] after {_TRUNCATION_ATTEMPTS} attempts"
    )


def sample_parameters(cfg: RunConfig, replicate_index: int) -> RunConfig:
    """Resolve the scenario config for one replicate.

    Every distribution gets its own stream derived from
    (master seed, replicate index, parameter name); fixed entries bypass
    sampling entirely, so an all-fixed ensemble replays the scenario verbatim.
    """
    tree = config_to_dict(cfg)
    for spec in cfg.mc.distributions:
        if spec.kind == "fixed":
            value: float = spec.params[0]
        else:
            stream = RandomStream(derive_seed(cfg.mc.master_seed, replicate_index, spec.name))
            value = sample_value(spec, stream)
        set_by_path(tree, spec.name, value)
    return config_from_dict(tree)


def replicate_traffic_seed(master_seed: int, replicate_index: int) -> int:
    return derive_seed(master_seed, replicate_index, "traffic")


def run_replicate(cfg: RunConfig, replicate_index: int,
                  weather: list[WeatherRecord] | None = None,
                  traffic_seed: int | None = None) -> PipelineResult:
    """One full pipeline run under the replicate's sampled parameters."""
    resolved = sample_parameters(cfg, replicate_index)
    seed = traffic_seed if traffic_seed is not None else replicate_traffic_seed(
        cfg.mc.master_seed, replicate_index)
    frames = generate_synthetic_traffic(resolved.demand.to_profile(), resolved.mc.duration, seed)
    return run_pipeline(frames, list(weather or []), resolved)


def _replicate_worker(args: tuple[dict, int, list[WeatherRecord] | None,
                                  int | None]) -> tuple[int, float, float]:
    tree, index, weather, pinned_seed = args
    cfg = config_from_dict(tree)
    seed = pinned_seed if pinned_seed is not None else replicate_traffic_seed(
        cfg.mc.master_seed, index)
    try:
        result = run_replicate(cfg, index, weather, traffic_seed=seed)
    except BridgeTwinError as exc:
        raise ReplicateError(index, seed, exc) from exc
    final_beta = result.final_beta
    return index, result.fatigue.fatigue_score, final_beta if final_beta is not None else math.nan


def thread_cap() -> int:
    """Worker-process cap from BRIDGE_TWIN_THREADS (default 1 = serial)."""
    raw = os.environ.get("BRIDGE_TWIN_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"BRIDGE_TWIN_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def run_ensemble(cfg: RunConfig, weather: list[WeatherRecord] | None = None,
                 threads: int | None = None,
                 pin_traffic_seed: int | None = None) -> RiskSummary:
    """Run the ensemble and summarize the fatigue-score distribution.

    Replicates are independent and reduced in index order, so serial and
    parallel execution produce identical summaries.  Any replicate failure
    aborts the ensemble with its index and seed.
    """
    n = cfg.mc.n_replicates
    workers = threads if threads is not None else thread_cap()
    tree = config_to_dict(cfg)
    jobs = [(tree, i, weather, pin_traffic_seed) for i in range(n)]

    results: list[tuple[float, float] | None] = [None] * n
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            chunk = max(1, n // (4 * workers))
            for index, score, final_beta in pool.map(_replicate_worker, jobs, chunksize=chunk):
                results[index] = (score, final_beta)
    else:
        for job in jobs:
            index, score, final_beta = _replicate_worker(job)
            results[index] = (score, final_beta)

    scores = tuple(r[0] for r in results)
    betas = tuple(r[1] for r in results)
    seeds = tuple(
        pin_traffic_seed if pin_traffic_seed is not None
        else replicate_traffic_seed(cfg.mc.master_seed, i)
        for i in range(n)
    )
    return summarize(scores, seeds, betas)


def summarize(scores: Sequence[float], seeds: Sequence[int],
              final_betas: Sequence[float]) -> RiskSummary:
    n = len(scores)
    n_safe = sum(1 for s in scores if s < SCORE_SAFE_LIMIT)
    n_critical = sum(1 for s in scores if s > SCORE_MONITOR_LIMIT)
    n_monitor = n - n_safe - n_critical

    n_bins = int(100.0 / HISTOGRAM_BIN_WIDTH)
    counts = [0] * n_bins
    for s in scores:
        counts[min(int(s / HISTOGRAM_BIN_WIDTH), n_bins - 1)] += 1
    histogram = tuple(
        (b * HISTOGRAM_BIN_WIDTH, (b + 1) * HISTOGRAM_BIN_WIDTH, counts[b])
        for b in range(n_bins)
    )
    return RiskSummary(
        scores=tuple(scores),
        seeds=tuple(seeds),
        final_betas=tuple(final_betas),
        p50=percentile(scores, 0.5),
        p90=percentile(scores, 0.9),
        frac_safe=n_safe / n,
        frac_monitor=n_monitor / n,
        frac_critical=n_critical / n,
        histogram=histogram,
    )


def sensitivity_report(cfg: RunConfig, weather: list[WeatherRecord] | None = None,
                       threads: int | None = None) -> list[tuple[str, float]]:
    """One-at-a-time sweeps: per parameter, the p90 - p10 score spread.

    Each sweep varies a single distribution while every other parameter and
    the traffic arrival seed stay pinned, so a fixed parameter shows spread 0
    and the ranking isolates parametric sensitivity.  Ranked descending,
    ties broken by name.
    """
    pinned_seed = derive_seed(cfg.mc.master_seed, "sensitivity-traffic")
    spreads: list[tuple[str, float]] = []
    for spec in cfg.mc.distributions:
        tree = config_to_dict(cfg)
        tree["mc"]["distributions"] = [
            {
                "name": spec.name,
                "kind": spec.kind,
                "params": list(spec.params),
                "truncation": list(spec.truncation) if spec.truncation else None,
            }
        ]
        sweep_cfg = config_from_dict(tree)
        summary = run_ensemble(sweep_cfg, weather, threads, pin_traffic_seed=pinned_seed)
        spread = percentile(summary.scores, 0.9) - percentile(summary.scores, 0.1)
        spreads.append((spec.name, spread))
    spreads.sort(key=lambda item: (-item[1], item[0]))
    return spreads
