"""Command-line front end: simulate, track, evaluate, demo.

Exit codes: 0 ok, 2 configuration error, 3 I/O or stream error,
4 filter divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .csvio import read_estimate_csv, read_truth_csv, write_estimate_csv
from .ekf import FilterDivergenceError, StreamError
from .pipeline import (
    ConfigError,
    RunConfig,
    compare_variants,
    evaluate_tracks,
    load_config,
    render_report_csv,
    render_report_text,
    run_scenario,
    run_tracking,
    simulate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="legtrack",
        description="Leg joint tracking: simulate gait data, run estimator variants, evaluate RMSE.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate IMU streams, markers, and ground truth")
    p_sim.add_argument("--config", required=True, help="TOML scenario configuration")
    p_sim.add_argument("--out", required=True, help="output directory")

    p_track = sub.add_parser("track", help="run one estimator variant over simulated data")
    p_track.add_argument("--config", required=True)
    p_track.add_argument("--data", required=True, help="directory written by simulate")
    mode = p_track.add_mutually_exclusive_group(required=True)
    mode.add_argument("--fused", action="store_true", help="IMU + camera fusion")
    mode.add_argument("--imu-only", action="store_true", help="IMU with truth-anchored pelvis")
    mode.add_argument("--camera-only", action="store_true", help="camera track, no filter")
    p_track.add_argument("--out", help="estimate CSV path (default inside the data directory)")

    p_eval = sub.add_parser("evaluate", help="RMSE report for estimate tracks")
    p_eval.add_argument("--est", required=True, help="estimate CSV (treated as the fused track)")
    p_eval.add_argument("--truth", required=True, help="truth CSV")
    p_eval.add_argument("--imu-est", help="optional IMU-only estimate CSV for percentage change")
    p_eval.add_argument("--camera-est", help="optional camera-only estimate CSV")
    p_eval.add_argument("--out-prefix", help="write <prefix>.txt and <prefix>.csv")

    p_demo = sub.add_parser("demo", help="simulate, track, and evaluate both gait scenarios")
    p_demo.add_argument("--config", help="optional base TOML configuration")
    p_demo.add_argument("--seed", type=int, help="override the configured seed")
    p_demo.add_argument("--out", required=True, help="output root directory")
    return parser


def _load(config_path: str | None) -> RunConfig:
    if config_path is None:
        return RunConfig()
    return load_config(config_path)


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    simulate(cfg, args.out)
    print(f"simulated scenario {cfg.scenario!r} (seed {cfg.seed}) into {args.out}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _load(args.config)
    variant = "fused" if args.fused else "imu-only" if args.imu_only else "camera-only"
    est = run_tracking(cfg, args.data, variant)
    out = args.out or str(Path(args.data) / f"estimate_{variant.replace('-', '_')}.csv")
    write_estimate_csv(out, est)
    print(f"{variant} track: {len(est.t)} steps -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth = read_truth_csv(args.truth)
    fused = evaluate_tracks(read_estimate_csv(args.est), truth, "fused")
    reports = []
    imu_rep = cam_rep = None
    if args.imu_est:
        imu_rep = evaluate_tracks(read_estimate_csv(args.imu_est), truth, "imu-only")
        reports.append(imu_rep)
    if args.camera_est:
        cam_rep = evaluate_tracks(read_estimate_csv(args.camera_est), truth, "camera-only")
        reports.append(cam_rep)
    compare_variants(fused, imu_rep, cam_rep)
    reports.append(fused)
    text = render_report_text(reports)
    print(text)
    if args.out_prefix:
        Path(args.out_prefix + ".txt").write_text(text)
        Path(args.out_prefix + ".csv").write_text(render_report_csv(reports))
    return EXIT_OK


def cmd_demo(args) -> int:
    from .pipeline import config_from_dict, load_config_dict

    doc = load_config_dict(args.config) if args.config else {}
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    summary = []
    for scenario in ("walk", "run_in_place"):
        # rebuild per scenario so gait/noise presets follow the scenario
        scenario_doc = {k: dict(v) for k, v in doc.items()}
        scenario_doc.setdefault("run", {})["scenario"] = scenario
        if args.seed is not None:
            scenario_doc["run"]["seed"] = args.seed
        cfg = config_from_dict(scenario_doc)
        result = run_scenario(cfg, out_root / scenario)
        fused = result["reports"]["fused"]
        summary.append(
            f"{scenario}: fused overall {fused.overall['euclid']:.2f} cm, "
            f"change vs IMU {fused.change_vs_imu_pct:+.0f}%, "
            f"change vs camera {fused.change_vs_camera_pct:+.0f}%"
        )
        print(summary[-1])
    (out_root / "summary.txt").write_text("\n".join(summary) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "track": cmd_track,
        "evaluate": cmd_evaluate,
        "demo": cmd_demo,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, StreamError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FilterDivergenceError as exc:
        print(f"filter divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
