"""Batch command-line interface.

Subcommands: ``replay`` (detection + weather logs), ``simulate`` (synthetic
traffic), ``mc`` (Monte Carlo ensemble), ``train`` / ``predict`` (fatigue-trend
forest), ``report`` (consolidate a run directory).  Exit codes: 0 success,
1 input or config error, 2 success with a Critical alert present.
BRIDGE_TWIN_THREADS caps worker processes for the ensemble.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import forest as forest_mod
from . import reporting
from .config import RunConfig, load_config
from .errors import BridgeTwinError
from .fatigue import Alert
from .ingestion import generate_synthetic_traffic, parse_detection_log, parse_weather_log
from .montecarlo import run_ensemble, sensitivity_report
from .pipeline import PipelineResult, run_pipeline

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CRITICAL = 2


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_pipeline_outputs(result: PipelineResult, cfg: RunConfig, out: Path,
                            manifest: reporting.ManifestWriter) -> None:
    primary = [
        obs if valid else sim
        for obs, sim, valid in zip(result.obs_stress, result.sim_stress, result.obs_valid)
    ]
    outputs = [
        ("density.csv", reporting.write_density_csv(out / "density.csv", result.densities)),
        ("states.csv", reporting.write_states_csv(out / "states.csv", result.states)),
        ("shocks.csv", reporting.write_shocks_csv(out / "shocks.csv", result.shocks,
                                                  cfg.solver.cell_length)),
        ("shocks_observed.csv",
         reporting.write_shocks_csv(out / "shocks_observed.csv", result.observed_shocks,
                                    cfg.solver.cell_length)),
        ("env.csv", reporting.write_env_csv(out / "env.csv", result.env_states)),
        ("stress.csv", reporting.write_stress_csv(out / "stress.csv", primary)),
        ("stress_sim.csv", reporting.write_stress_csv(out / "stress_sim.csv", result.sim_stress)),
        ("stress_obs.csv", reporting.write_stress_csv(out / "stress_obs.csv", result.obs_stress,
                                                      valid=result.obs_valid)),
        ("cycles.csv", reporting.write_cycles_csv(out / "cycles.csv", result.cycles)),
        ("fatigue.csv", reporting.write_fatigue_csv(out / "fatigue.csv", result.fatigue)),
        ("beta.csv", reporting.write_beta_csv(out / "beta.csv", result.beta)),
        ("features.csv", reporting.write_features_csv(out / "features.csv", result.feature_rows)),
    ]
    for name, rows in outputs:
        manifest.add_output(out / name, rows)


def _finish_pipeline_command(result: PipelineResult, cfg: RunConfig, out: Path,
                             manifest: reporting.ManifestWriter) -> int:
    _write_pipeline_outputs(result, cfg, out, manifest)
    manifest.write(out)
    report = result.fatigue
    final_beta = result.final_beta
    beta_text = repr(final_beta) if final_beta is not None else "n/a"
    print(
        f"damage={report.total_damage:.6g} score={report.fatigue_score:.6g} "
        f"alert={report.alert.value} beta={beta_text}"
    )
    return EXIT_CRITICAL if report.alert is Alert.CRITICAL else EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    out = _prepare_out(args.out)
    detections_path = Path(args.detections)
    with open(detections_path, encoding="utf-8") as fh:
        frames = parse_detection_log(fh, fmt=args.format, source=str(detections_path))
    weather = []
    manifest = reporting.ManifestWriter(cfg, "replay")
    manifest.add_input(detections_path)
    if args.weather:
        weather_path = Path(args.weather)
        with open(weather_path, encoding="utf-8") as fh:
            weather = parse_weather_log(fh, source=str(weather_path))
        manifest.add_input(weather_path)
    result = run_pipeline(frames, weather, cfg)
    return _finish_pipeline_command(result, cfg, out, manifest)


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.duration is not None:
        cfg = replace(cfg, duration=float(args.duration))
    seed = args.seed if args.seed is not None else cfg.mc.master_seed
    out = _prepare_out(args.out)
    frames = generate_synthetic_traffic(cfg.demand.to_profile(), cfg.duration, seed)
    weather = []
    manifest = reporting.ManifestWriter(cfg, "simulate", master_seed=seed)
    if args.weather:
        weather_path = Path(args.weather)
        with open(weather_path, encoding="utf-8") as fh:
            weather = parse_weather_log(fh, source=str(weather_path))
        manifest.add_input(weather_path)
    result = run_pipeline(frames, weather, cfg)
    return _finish_pipeline_command(result, cfg, out, manifest)


def _cmd_mc(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, master_seed=args.seed))
    out = _prepare_out(args.out)
    weather = []
    manifest = reporting.ManifestWriter(cfg, "mc", master_seed=cfg.mc.master_seed)
    if args.weather:
        weather_path = Path(args.weather)
        with open(weather_path, encoding="utf-8") as fh:
            weather = parse_weather_log(fh, source=str(weather_path))
        manifest.add_input(weather_path)
    summary = run_ensemble(cfg, weather)
    outputs = [
        ("mc_replicates.csv",
         reporting.write_mc_replicates_csv(out / "mc_replicates.csv", summary)),
        ("mc_summary.csv", reporting.write_mc_summary_csv(out / "mc_summary.csv", summary)),
        ("mc_histogram.csv", reporting.write_mc_histogram_csv(out / "mc_histogram.csv", summary)),
    ]
    if args.sweep:
        sweep_cfg = replace(cfg, mc=replace(cfg.mc, n_replicates=args.sweep))
        spreads = sensitivity_report(sweep_cfg, weather)
        outputs.append(
            ("sensitivity.csv", reporting.write_sensitivity_csv(out / "sensitivity.csv", spreads))
        )
    for name, rows in outputs:
        manifest.add_output(out / name, rows)
    manifest.write(out)
    print(
        f"p50={repr(summary.p50)} p90={repr(summary.p90)} "
        f"safe={summary.frac_safe:.3f} monitor={summary.frac_monitor:.3f} "
        f"critical={summary.frac_critical:.3f}"
    )
    return EXIT_CRITICAL if summary.frac_critical > 0 else EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    out = _prepare_out(args.out)
    manifest = reporting.ManifestWriter(cfg, "train", master_seed=cfg.forest.seed)
    rows: list[forest_mod.FeatureRow] = []
    for path in args.features:
        rows.extend(reporting.read_features_csv(Path(path)))
        manifest.add_input(Path(path))
    model = forest_mod.fit(rows, cfg.forest)
    report = forest_mod.importance(model)
    holdout = forest_mod.holdout_rmse(rows, cfg.forest)
    model_path = out / "model.json"
    model_path.write_text(forest_mod.to_json(model), encoding="utf-8")
    outputs = [
        ("model.json", len(model.trees)),
        ("importance.csv", reporting.write_importance_csv(out / "importance.csv", report)),
        ("metrics.csv", reporting.write_metrics_csv(
            out / "metrics.csv", [("oob_rmse", report.oob_rmse), ("holdout_rmse", holdout)])),
    ]
    for name, rows_written in outputs:
        manifest.add_output(out / name, rows_written)
    manifest.write(out)
    oob_text = repr(report.oob_rmse) if report.oob_rmse is not None else "n/a"
    print(f"trained {len(model.trees)} trees on {len(rows)} rows, oob_rmse={oob_text}")
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    out = _prepare_out(args.out)
    model = forest_mod.from_json(Path(args.model).read_text(encoding="utf-8"))
    manifest = reporting.ManifestWriter(cfg, "predict")
    manifest.add_input(Path(args.model))
    rows: list[forest_mod.FeatureRow] = []
    for path in args.features:
        rows.extend(reporting.read_features_csv(Path(path), require_target=False))
        manifest.add_input(Path(path))
    predictions = [forest_mod.predict(model, r.features) for r in rows]
    n = reporting.write_csv(
        out / "predictions.csv",
        ["window_start", "window_end", "prediction"],
        ((r.window[0], r.window[1], p) for r, p in zip(rows, predictions)),
    )
    manifest.add_output(out / "predictions.csv", n)
    manifest.write(out)
    print(f"predicted {n} windows")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    manifest = reporting.load_manifest(run_dir)
    findings = reporting.verify_outputs(run_dir, manifest)
    bundle_rows = [(name, rows if rows is not None else "", status)
                   for name, rows, status in findings]
    reporting.write_csv(run_dir / "report_bundle.csv", ["file", "rows", "status"], bundle_rows)

    lines = [
        "bridgetwin run summary",
        f"command: {manifest.get('command')}",
        f"tool version: {manifest.get('tool_version')}",
        f"config hash: {manifest.get('config_hash')}",
    ]
    issues = [f for f in findings if f[2] != "ok"]
    fatigue_path = run_dir / "fatigue.csv"
    if fatigue_path.exists():
        _, rows = reporting.read_csv(fatigue_path)
        if rows:
            damage, score, alert = rows[0]
            lines.append(f"total damage: {damage}")
            lines.append(f"fatigue score: {score} ({alert})")
    beta_path = run_dir / "beta.csv"
    if beta_path.exists():
        _, rows = reporting.read_csv(beta_path)
        if rows:
            lines.append(f"final beta_primary: {rows[-1][3]} (source {rows[-1][4]})")
            breaches = sum(1 for r in rows if r[5] == "1")
            lines.append(f"beta breaches below target: {breaches}/{len(rows)}")
    mc_path = run_dir / "mc_summary.csv"
    if mc_path.exists():
        header, rows = reporting.read_csv(mc_path)
        if rows:
            summary = dict(zip(header, rows[0]))
            lines.append(
                f"mc p50={summary['p50']} p90={summary['p90']} "
                f"safe={summary['frac_safe']} monitor={summary['frac_monitor']} "
                f"critical={summary['frac_critical']}"
            )
    else:
        lines.append("mc percentiles: not present (no ensemble outputs in this run)")
    missing = [name for name, _, status in findings if status == "missing"]
    modified = [name for name, _, status in findings if status == "modified"]
    if missing:
        lines.append(f"missing outputs: {', '.join(missing)}")
    if modified:
        lines.append(f"integrity warning: digest mismatch in {', '.join(modified)}")
    if not issues:
        lines.append("integrity: all outputs match the manifest")
    text = "\n".join(lines) + "\n"
    (run_dir / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgetwin",
        description="Bridge digital twin: traffic and weather logs to fatigue and risk reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_out: bool = True) -> None:
        p.add_argument("--config", help="run configuration JSON")
        if with_out:
            p.add_argument("--out", required=True, help="output directory")

    p_replay = sub.add_parser("replay", help="run the pipeline on recorded logs")
    p_replay.add_argument("detections", help="detection log path")
    p_replay.add_argument("weather", nargs="?", help="weather CSV path")
    p_replay.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    add_common(p_replay)
    p_replay.set_defaults(func=_cmd_replay)

    p_sim = sub.add_parser("simulate", help="run the pipeline on synthetic traffic")
    p_sim.add_argument("--duration", type=float, help="simulated seconds")
    p_sim.add_argument("--seed", type=int, help="traffic seed")
    p_sim.add_argument("--weather", help="weather CSV path")
    add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_mc = sub.add_parser("mc", help="Monte Carlo ensemble")
    p_mc.add_argument("--seed", type=int, help="master seed override")
    p_mc.add_argument("--weather", help="weather CSV path")
    p_mc.add_argument("--sweep", type=int, default=0,
                      help="also write one-at-a-time sensitivity with N replicates per sweep")
    add_common(p_mc)
    p_mc.set_defaults(func=_cmd_mc)

    p_train = sub.add_parser("train", help="fit the fatigue-trend forest")
    p_train.add_argument("features", nargs="+", help="feature CSVs from replay/simulate")
    add_common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_pred = sub.add_parser("predict", help="predict with a trained forest")
    p_pred.add_argument("model", help="model JSON from train")
    p_pred.add_argument("features", nargs="+", help="feature CSVs")
    add_common(p_pred)
    p_pred.set_defaults(func=_cmd_predict)

    p_report = sub.add_parser("report", help="consolidate a run directory")
    p_report.add_argument("run_dir", help="directory containing a run manifest")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BridgeTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
