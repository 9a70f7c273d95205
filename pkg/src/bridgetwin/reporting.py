"""CSV reports and run manifests.

Every report has a header row and serializes floats as their shortest exact
decimal representation, so identical runs produce byte-identical files and
every file re-parses to the original values.  The manifest records config and
input digests plus per-output digests for later integrity checks.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .config import RunConfig, config_hash
from .environment import EnvState
from .errors import ConfigError, ParseError
from .fatigue import FatigueReport, RainflowCycle, StressSample
from .forest import FEATURE_NAMES, FeatureRow, ImportanceReport
from .ingestion import ObservedDensity, VehicleClass
from .montecarlo import RiskSummary
from .reliability import BetaSample
from .traffic import ShockEvent, TrafficState

MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1


def _fmt(value: float | int | bool | str | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write one report; returns the number of data rows."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
            count += 1
    return count


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise ParseError("empty CSV", str(path), 1)
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_density_csv(path: Path, densities: Sequence[ObservedDensity]) -> int:
    return write_csv(
        path,
        ["timestamp", "rho_raw", "rho_stable", "vehicle_count", "cars", "trucks", "buses", "valid"],
        (
            (
                d.timestamp,
                d.rho_raw,
                d.rho_stable,
                d.vehicle_count,
                d.class_counts.get(VehicleClass.CAR, 0),
                d.class_counts.get(VehicleClass.TRUCK, 0),
                d.class_counts.get(VehicleClass.BUS, 0),
                d.valid,
            )
            for d in densities
        ),
    )


def write_states_csv(path: Path, states: Sequence[TrafficState]) -> int:
    def rows():
        for state in states:
            for i, rho in enumerate(state.cell_densities):
                yield (state.time, i, float(rho))

    return write_csv(path, ["time", "cell_index", "rho"], rows())


def write_shocks_csv(path: Path, shocks: Sequence[ShockEvent], cell_length: float) -> int:
    return write_csv(
        path,
        ["time", "position_m", "rho_up", "rho_down", "wave_speed_ms", "severity"],
        (
            (
                s.time,
                (s.position + 1) * cell_length,  # interface between cells i and i+1
                s.upstream_density,
                s.downstream_density,
                s.wave_speed,
                s.severity,
            )
            for s in shocks
        ),
    )


def write_env_csv(path: Path, states: Sequence[EnvState]) -> int:
    return write_csv(
        path,
        ["timestamp", "m_env", "ft_cycles", "corrosion_potential"],
        ((e.timestamp, e.m_env, e.freeze_thaw_cycles_in_window, e.corrosion_potential) for e in states),
    )


def write_stress_csv(path: Path, samples: Sequence[StressSample],
                     valid: Sequence[bool] | None = None) -> int:
    header = ["timestamp", "load", "density", "speedpen", "stress", "m_env"]
    if valid is not None:
        header.append("valid")

    def rows():
        for k, s in enumerate(samples):
            row = [s.timestamp, s.load_intensity, s.density_norm, s.speed_penalty, s.stress, s.m_env]
            if valid is not None:
                row.append(valid[k])
            yield row

    return write_csv(path, header, rows())


def write_cycles_csv(path: Path, cycles: Sequence[RainflowCycle]) -> int:
    return write_csv(path, ["range", "mean", "count"],
                     ((c.range, c.mean, c.count) for c in cycles))


def write_fatigue_csv(path: Path, report: FatigueReport) -> int:
    return write_csv(path, ["D_total", "score", "alert"],
                     [(report.total_damage, report.fatigue_score, report.alert.value)])


def write_beta_csv(path: Path, samples: Sequence[BetaSample]) -> int:
    return write_csv(
        path,
        ["timestamp", "beta_sim", "beta_obs", "beta_primary", "source", "breach"],
        ((b.timestamp, b.beta_sim, b.beta_obs, b.beta_primary, b.source.value, b.breach)
         for b in samples),
    )


def write_features_csv(path: Path, rows: Sequence[FeatureRow]) -> int:
    header = ["window_start", "window_end", *FEATURE_NAMES, "target"]
    return write_csv(
        path,
        header,
        ((r.window[0], r.window[1], *r.features, r.target) for r in rows),
    )


def read_features_csv(path: Path, require_target: bool = True) -> list[FeatureRow]:
    """Parse a feature CSV back into rows, enforcing the fixed feature schema."""
    header, raw_rows = read_csv(path)
    with_target = ["window_start", "window_end", *FEATURE_NAMES, "target"]
    without_target = with_target[:-1]
    if header == with_target:
        has_target = True
    elif header == without_target:
        has_target = False
    else:
        raise ConfigError(
            f"{path}: feature schema mismatch: expected columns {with_target}, got {header}"
        )
    if require_target and not has_target:
        raise ConfigError(f"{path}: feature file has no target column")
    rows: list[FeatureRow] = []
    for lineno, fields in enumerate(raw_rows, start=2):
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", str(path), lineno)
        try:
            values = [float(v) for v in fields]
        except ValueError:
            raise ParseError("non-numeric field", str(path), lineno) from None
        window = (values[0], values[1])
        features = tuple(values[2 : 2 + len(FEATURE_NAMES)])
        target = values[-1] if has_target else 0.0
        rows.append(FeatureRow(features=features, target=target, window=window))
    return rows


def write_mc_replicates_csv(path: Path, summary: RiskSummary) -> int:
    return write_csv(
        path,
        ["replicate", "seed", "fatigue_score", "final_beta"],
        ((i, summary.seeds[i], summary.scores[i], summary.final_betas[i])
         for i in range(len(summary.scores))),
    )


def write_mc_summary_csv(path: Path, summary: RiskSummary) -> int:
    return write_csv(
        path,
        ["p50", "p90", "frac_safe", "frac_monitor", "frac_critical"],
        [(summary.p50, summary.p90, summary.frac_safe, summary.frac_monitor,
          summary.frac_critical)],
    )


def write_mc_histogram_csv(path: Path, summary: RiskSummary) -> int:
    return write_csv(path, ["bin_lo", "bin_hi", "count"], summary.histogram)


def write_sensitivity_csv(path: Path, spreads: Sequence[tuple[str, float]]) -> int:
    return write_csv(path, ["parameter", "spread"], spreads)


def write_importance_csv(path: Path, report: ImportanceReport,
                         feature_names: Sequence[str] = FEATURE_NAMES) -> int:
    return write_csv(path, ["feature", "importance"],
                     zip(feature_names, report.importances))


def write_metrics_csv(path: Path, metrics: Sequence[tuple[str, float | None]]) -> int:
    return write_csv(path, ["metric", "value"], metrics)


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ManifestWriter:
    """Collects inputs, outputs, and row counts for one command invocation."""

    def __init__(self, cfg: RunConfig, command: str, master_seed: int | None = None):
        self._started = time.monotonic()
        self.data: dict = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "tool_version": __version__,
            "command": command,
            "config_hash": config_hash(cfg),
            "master_seed": master_seed,
            "inputs": {},
            "outputs": {},
            "duration_seconds": None,
        }

    def add_input(self, path: Path) -> None:
        self.data["inputs"][Path(path).name] = file_digest(path)

    def add_output(self, path: Path, rows: int) -> None:
        self.data["outputs"][Path(path).name] = {"sha256": file_digest(path), "rows": rows}

    def write(self, out_dir: Path) -> Path:
        self.data["duration_seconds"] = round(time.monotonic() - self._started, 3)
        target = Path(out_dir) / MANIFEST_NAME
        target.write_text(json.dumps(self.data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return target


def load_manifest(run_dir: Path) -> dict:
    target = Path(run_dir) / MANIFEST_NAME
    if not target.exists():
        raise ConfigError(f"{run_dir} has no {MANIFEST_NAME}")
    return json.loads(target.read_text(encoding="utf-8"))


def verify_outputs(run_dir: Path, manifest: dict) -> list[tuple[str, int | None, str]]:
    """Check every manifest output; returns (file, rows, status) with status
    one of ``ok``, ``modified``, ``missing``."""
    findings: list[tuple[str, int | None, str]] = []
    for name, meta in sorted(manifest.get("outputs", {}).items()):
        path = Path(run_dir) / name
        if not path.exists():
            findings.append((name, None, "missing"))
        elif file_digest(path) != meta["sha256"]:
            findings.append((name, meta["rows"], "modified"))
        else:
            findings.append((name, meta["rows"], "ok"))
    return findings
