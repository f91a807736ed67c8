"""Scenario configuration and the simulate / track / evaluate stages.

Configuration is a single TOML file; every value has a default, unknown
keys are rejected, and the effective configuration (defaults applied) is
written next to the outputs so a run is fully reproducible from its
artifacts.  Three estimator variants consume identical input streams:

- fused: IMU + camera through the full filter;
- imu-only: IMU measurements only, pelvis anchored to the truth track;
- camera-only: camera joints mapped to NED, no filter.

Missing-marker handling for the camera-only track zero-fills by default
(image-plane coordinates zeroed, depth interpolated from the other joints,
everything zero when all are missing); a linear-in-time policy is
selectable for comparison.
"""

from __future__ import annotations

import dataclasses
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .csvio import (
    EstimateTrack,
    read_imu_csv,
    read_marker_csv,
    read_truth_csv,
    write_estimate_csv,
    write_imu_csv,
    write_joints3d_csv,
    write_marker_csv,
    write_truth_csv,
)
from .depth import CameraModel, Joint3D, fuse_joint_depths
from .ekf import (
    CameraData,
    FilterConfig,
    FilterRun,
    HipAnchor,
    LegModel,
    NoiseConfig,
    run_fusion,
)
from .imu import EarthFields
from .quat import FrameRotation, IDENTITY, compose_frames, quat_to_matrix
from .simulator import (
    GaitProfile,
    SensorNoiseSpec,
    TruthTrack,
    generate_truth,
    side_view_camera,
    synthesize_imu,
    synthesize_markers,
)
from .vision import JOINTS, detect_frame, read_ppm

MARKER_COLOR = (0, 200, 0)

SCENARIO_DROPOUT = {"walk": 0.03, "run_in_place": 0.05, "static": 0.0}


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class PipelineOptions:
    missing_policy: str = "zero_fill"  # zero_fill | linear
    depth_motion_var: float = 4e-6
    min_marker_area: float = 9.0
    camera_mode: str = "blobs"  # blobs | frames

    def __post_init__(self):
        if self.missing_policy not in ("zero_fill", "linear"):
            raise ConfigError(f"unknown missing_policy {self.missing_policy!r}")
        if self.camera_mode not in ("blobs", "frames"):
            raise ConfigError(f"unknown camera_mode {self.camera_mode!r}")


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "walk"
    seed: int = 7
    imu_rate_hz: float = 100.0
    camera_rate_hz: float = 30.0
    camera_distance_east_m: float = 2.5
    camera_height_m: float = 0.8
    mag_dip_deg: float = 60.0
    g: float = 9.81
    leg: LegModel = field(default_factory=LegModel)
    camera: CameraModel = field(default_factory=CameraModel)
    gait: GaitProfile = field(default_factory=GaitProfile)
    sensor_noise: SensorNoiseSpec = field(default_factory=SensorNoiseSpec)
    filter: FilterConfig = field(default_factory=FilterConfig)
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)

    def fields(self) -> EarthFields:
        return EarthFields.with_dip(self.mag_dip_deg, self.g)

    def camera_pose(self):
        return side_view_camera(self.camera_distance_east_m, self.camera_height_m)


_RUN_KEYS = {
    "scenario": str,
    "seed": int,
    "imu_rate_hz": float,
    "camera_rate_hz": float,
    "camera_distance_east_m": float,
    "camera_height_m": float,
    "mag_dip_deg": float,
    "g": float,
}

_FILTER_ARRAY_KEYS = {"q_diag": 20, "r1_diag": 14, "r2_diag": 3, "r3_diag": 6}

_FILTER_SCALAR_KEYS = {
    "alpha": float,
    "bias_sign": float,
    "accel_threshold": float,
    "gate_inflation": float,
    "bias_tau": float,
    "enable_rate_orientation_update": bool,
    "enable_knee_constraint_update": bool,
    "enable_segment_vector_update": bool,
    "bias_p0": float,
}


def _coerce_section(name: str, raw: dict, cls, overrides: dict | None = None):
    fields_by_name = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = dict(overrides or {})
    for key, value in raw.items():
        if key not in fields_by_name:
            raise ConfigError(f"unknown key [{name}].{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    known_sections = {"run", "leg", "camera", "gait", "sensor_noise", "filter", "pipeline"}
    unknown = set(doc) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    run_raw = dict(doc.get("run", {}))
    top = {}
    for key, value in run_raw.items():
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key [run].{key}")
        try:
            top[key] = _RUN_KEYS[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [run].{key}: {exc}") from exc
    scenario = top.get("scenario", "walk")
    if scenario not in SCENARIO_DROPOUT:
        raise ConfigError(f"unknown scenario {scenario!r}")

    leg = _coerce_section("leg", doc.get("leg", {}), LegModel)
    camera = _coerce_section("camera", doc.get("camera", {}), CameraModel)

    gait_defaults = dataclasses.asdict(GaitProfile.preset(scenario))
    gait_raw = dict(doc.get("gait", {}))
    gait = _coerce_section("gait", gait_raw, GaitProfile, overrides=gait_defaults)

    noise_defaults = {"marker_dropout_prob": SCENARIO_DROPOUT[scenario]}
    sensor_noise = _coerce_section(
        "sensor_noise", doc.get("sensor_noise", {}), SensorNoiseSpec, overrides=noise_defaults
    )

    filt_raw = dict(doc.get("filter", {}))
    noise_kwargs = {}
    for key, n in _FILTER_ARRAY_KEYS.items():
        if key in filt_raw:
            arr = np.asarray(filt_raw.pop(key), dtype=float)
            if arr.shape != (n,):
                raise ConfigError(f"[filter].{key} must hold {n} values")
            noise_kwargs[key] = arr
    for key in ("accel_threshold", "gate_inflation"):
        if key in filt_raw:
            noise_kwargs[key] = float(filt_raw.pop(key))
    filt_kwargs = {}
    for key, value in filt_raw.items():
        if key not in _FILTER_SCALAR_KEYS:
            raise ConfigError(f"unknown key [filter].{key}")
        caster = _FILTER_SCALAR_KEYS[key]
        filt_kwargs[key] = caster(value)
    if "bias_tau" in filt_kwargs:
        filt_kwargs["bias_tau"] = np.full(3, filt_kwargs["bias_tau"])
    try:
        noise_cfg = NoiseConfig(**noise_kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid [filter] noise values: {exc}") from exc

    pipeline = _coerce_section("pipeline", doc.get("pipeline", {}), PipelineOptions)

    cfg = RunConfig(
        **top,
        leg=leg,
        camera=camera,
        gait=gait,
        sensor_noise=sensor_noise,
        filter=FilterConfig(noise=noise_cfg, leg=leg, **filt_kwargs),
        pipeline=pipeline,
    )
    cfg = replace(cfg, filter=replace(cfg.filter, fields=cfg.fields(), g=cfg.g))
    return cfg


def load_config_dict(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> RunConfig:
    return config_from_dict(load_config_dict(path))


def effective_dict(cfg: RunConfig) -> dict:
    def clean(value):
        if isinstance(value, np.ndarray):
            return [float(v) for v in value]
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        return value

    filt = cfg.filter
    return {
        "run": {
            "scenario": cfg.scenario,
            "seed": cfg.seed,
            "imu_rate_hz": cfg.imu_rate_hz,
            "camera_rate_hz": cfg.camera_rate_hz,
            "camera_distance_east_m": cfg.camera_distance_east_m,
            "camera_height_m": cfg.camera_height_m,
            "mag_dip_deg": cfg.mag_dip_deg,
            "g": cfg.g,
        },
        "leg": {k: clean(v) for k, v in dataclasses.asdict(cfg.leg).items()},
        "camera": {k: clean(v) for k, v in dataclasses.asdict(cfg.camera).items()},
        "gait": {k: clean(v) for k, v in dataclasses.asdict(cfg.gait).items()},
        "sensor_noise": {k: clean(v) for k, v in dataclasses.asdict(cfg.sensor_noise).items()},
        "filter": {
            "q_diag": clean(filt.noise.q_diag),
            "r1_diag": clean(filt.noise.r1_diag),
            "r2_diag": clean(filt.noise.r2_diag),
            "r3_diag": clean(filt.noise.r3_diag),
            "accel_threshold": clean(filt.noise.accel_threshold),
            "gate_inflation": clean(filt.noise.gate_inflation),
            "alpha": filt.alpha,
            "bias_sign": filt.bias_sign,
            "bias_tau": float(filt.bias_tau[0]),
            "enable_rate_orientation_update": filt.enable_rate_orientation_update,
            "enable_knee_constraint_update": filt.enable_knee_constraint_update,
            "enable_segment_vector_update": filt.enable_segment_vector_update,
            "bias_p0": filt.bias_p0,
        },
        "pipeline": {k: clean(v) for k, v in dataclasses.asdict(cfg.pipeline).items()},
    }


def dump_toml(doc: dict) -> str:
    def fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, float):
            return repr(float(value))
        if isinstance(value, str):
            return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(value, (list, tuple)):
            return "[" + ", ".join(fmt(v) for v in value) + "]"
        raise TypeError(f"cannot serialize {type(value)}")

    lines = []
    for section, body in doc.items():
        lines.append(f"[{section}]")
        for key, value in body.items():
            if value is None:
                continue
            lines.append(f"{key} = {fmt(value)}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Stages


def simulate(cfg: RunConfig, out_dir) -> TruthTrack:
    """Generate ground truth, IMU streams, and marker observations."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    fields = cfg.fields()
    truth = generate_truth(cfg.gait, cfg.imu_rate_hz, cfg.leg)
    imu_u, imu_l = synthesize_imu(truth, cfg.sensor_noise, fields, rng)
    rot, pos = cfg.camera_pose()
    frames_dir = out / "frames"
    if cfg.pipeline.camera_mode == "frames":
        frames_dir.mkdir(exist_ok=True)
    t_cam, marker_frames = synthesize_markers(
        truth,
        cfg.camera,
        rot,
        pos,
        cfg.sensor_noise,
        rng,
        rate_hz=cfg.camera_rate_hz,
        mode=cfg.pipeline.camera_mode,
        frames_dir=frames_dir if cfg.pipeline.camera_mode == "frames" else None,
    )
    write_imu_csv(out / "imu_upper.csv", imu_u)
    write_imu_csv(out / "imu_lower.csv", imu_l)
    if cfg.pipeline.camera_mode == "blobs":
        write_marker_csv(out / "markers.csv", marker_frames)
    write_truth_csv(out / "truth.csv", truth)
    (out / "effective_config.toml").write_text(dump_toml(effective_dict(cfg)))
    return truth


def _markers_from_frames_dir(cfg: RunConfig, data_dir) -> list:
    frames_dir = Path(data_dir) / "frames"
    paths = sorted(frames_dir.glob("frame_*.ppm"))
    if not paths:
        raise FileNotFoundError(f"no PPM frames under {frames_dir}")
    t0 = 0.5 / cfg.camera_rate_hz
    out = []
    prev = None
    for j, p in enumerate(paths):
        img = read_ppm(p)
        obs = detect_frame(
            img,
            MARKER_COLOR,
            t=t0 + j / cfg.camera_rate_hz,
            prev=prev,
            min_area=int(cfg.pipeline.min_marker_area),
        )
        prev = obs
        out.append(obs)
    return out


def camera_joints3d(cfg: RunConfig, data_dir, write: bool = True) -> list[list[Joint3D]]:
    """Markers (CSV or rendered frames) to camera-frame 3D joints."""
    data = Path(data_dir)
    if cfg.pipeline.camera_mode == "frames":
        marker_frames = _markers_from_frames_dir(cfg, data)
        if write:
            write_marker_csv(data / "markers.csv", marker_frames)
    else:
        marker_frames = read_marker_csv(data / "markers.csv")
    j3d = fuse_joint_depths(
        marker_frames,
        cfg.camera,
        cfg.leg.l_u,
        cfg.leg.l_l,
        min_area=cfg.pipeline.min_marker_area,
        motion_var_per_frame=cfg.pipeline.depth_motion_var,
    )
    if write:
        write_joints3d_csv(data / "joints3d.csv", j3d)
    return j3d


def interpolate_missing(frames: list[list[Joint3D]], policy: str = "zero_fill") -> list[list[Joint3D]]:
    """Fill invalid joints in a camera-frame 3D track.

    zero_fill: image-plane coordinates of a missing joint are zeroed and its
    depth is the mean of the other joints' valid depths; if every joint is
    missing the whole frame collapses to zeros.  linear: each coordinate is
    interpolated in time across the joint's own valid frames.
    """
    if policy == "zero_fill":
        out = []
        for frame in frames:
            valid_depths = [j.position[2] for j in frame if j.valid]
            row = []
            for j in frame:
                if j.valid:
                    row.append(j)
                elif valid_depths:
                    z = float(np.mean(valid_depths))
                    row.append(Joint3D(j.t, j.joint, np.array([0.0, 0.0, z]), False))
                else:
                    row.append(Joint3D(j.t, j.joint, np.zeros(3), False))
            out.append(row)
        return out
    if policy == "linear":
        n = len(frames)
        t = np.array([frame[0].t for frame in frames])
        out_cols = {}
        for i, joint in enumerate(JOINTS):
            pos = np.array([frame[i].position for frame in frames])
            ok = np.array([frame[i].valid for frame in frames])
            if ok.sum() >= 2:
                filled = np.column_stack(
                    [np.interp(t, t[ok], pos[ok, c]) for c in range(3)]
                )
            else:
                filled = pos
            out_cols[joint] = (filled, ok)
        out = []
        for k in range(n):
            row = []
            for i, joint in enumerate(JOINTS):
                filled, ok = out_cols[joint]
                row.append(Joint3D(t[k], joint, filled[k], bool(ok[k])))
            out.append(row)
        return out
    raise ConfigError(f"unknown missing-marker policy {policy!r}")


def _camera_data(cfg: RunConfig, j3d: list[list[Joint3D]]) -> CameraData:
    rot, pos = cfg.camera_pose()
    t_cam = np.array([frame[0].t for frame in j3d])
    positions = {j: np.array([frame[i].position for frame in j3d]) for i, j in enumerate(JOINTS)}
    valid = {j: np.array([frame[i].valid for frame in j3d]) for i, j in enumerate(JOINTS)}
    return CameraData(t_cam, positions, valid, rot, pos)


def estimate_from_run(run: FilterRun) -> EstimateTrack:
    from .ekf import BIAS_L, BIAS_U, QUAT_L, QUAT_U

    return EstimateTrack(
        t=run.t,
        q_u=run.states[:, QUAT_U],
        q_l=run.states[:, QUAT_L],
        bias_u=run.states[:, BIAS_U],
        bias_l=run.states[:, BIAS_L],
        hip=run.hip,
        knee=run.knee,
        ankle=run.ankle,
        gate_u=run.gate_u,
        gate_l=run.gate_l,
    )


def camera_only_estimate(
    cfg: RunConfig, j3d: list[list[Joint3D]], t_imu: np.ndarray
) -> EstimateTrack:
    """Camera joints, policy-filled, mapped to NED, resampled to the IMU grid."""
    filled = interpolate_missing(j3d, cfg.pipeline.missing_policy)
    rot, pos = cfg.camera_pose()
    # chain camera -> NED -> reference; the synthetic reference frame is NED
    ref_from_ned = FrameRotation("ned", "reference", IDENTITY.copy())
    ref_from_cam = compose_frames(ref_from_ned, rot.inverse())
    R_ref = quat_to_matrix(ref_from_cam.q)
    t_cam = np.array([frame[0].t for frame in filled])
    ned = {}
    for i, joint in enumerate(JOINTS):
        p_cam = np.array([frame[i].position for frame in filled])
        p_ned = p_cam @ R_ref.T + pos
        ned[joint] = np.column_stack(
            [np.interp(t_imu, t_cam, p_ned[:, c]) for c in range(3)]
        )
    n = len(t_imu)
    quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
    zeros3 = np.zeros((n, 3))
    flags = np.zeros(n, dtype=bool)
    return EstimateTrack(
        t=t_imu,
        q_u=quat.copy(),
        q_l=quat.copy(),
        bias_u=zeros3.copy(),
        bias_l=zeros3.copy(),
        hip=ned["hip"],
        knee=ned["knee"],
        ankle=ned["ankle"],
        gate_u=flags.copy(),
        gate_l=flags.copy(),
    )


VARIANTS = ("fused", "imu-only", "camera-only")


def run_tracking(cfg: RunConfig, data_dir, variant: str) -> EstimateTrack:
    """Produce one estimator variant's track from simulated data products."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    data = Path(data_dir)
    imu_u = read_imu_csv(data / "imu_upper.csv")
    imu_l = read_imu_csv(data / "imu_lower.csv")
    t_imu = np.array([s.t for s in imu_u])
    j3d = camera_joints3d(cfg, data)

    if variant == "camera-only":
        return camera_only_estimate(cfg, j3d, t_imu)

    if variant == "fused":
        camera = _camera_data(cfg, j3d)
        run = run_fusion(imu_u, imu_l, cfg.filter, camera=camera)
        return estimate_from_run(run)

    truth = read_truth_csv(data / "truth.csv")
    anchor = HipAnchor(truth.t, truth.hip, np.ones(len(truth.t), dtype=bool))
    run = run_fusion(imu_u, imu_l, cfg.filter, camera=None, hip_anchor=anchor)
    return estimate_from_run(run)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class RmseReport:
    variant: str
    per_joint: dict  # joint -> dict(axis -> cm), axes x, y, z, euclid
    overall: dict  # axis -> cm
    n_steps: int
    change_vs_imu_pct: float | None = None
    change_vs_camera_pct: float | None = None


def evaluate_tracks(
    est: EstimateTrack,
    truth: TruthTrack,
    variant: str = "estimate",
    est_to_truth: FrameRotation | None = None,
) -> RmseReport:
    """Per-joint, per-axis RMSE in centimeters against ground truth.

    Estimate steps are matched to the nearest truth step (maximum skew half
    the truth sample period); both tracks must cover the same span within 1%.
    est_to_truth rotates estimate positions into the truth frame when the
    two tracks are not expressed in the same axes (translation must already
    be resolved upstream).
    """
    R = None if est_to_truth is None else quat_to_matrix(est_to_truth.q)
    span_est = est.t[-1] - est.t[0]
    span_truth = truth.t[-1] - truth.t[0]
    if abs(span_est - span_truth) > 0.01 * span_truth:
        raise ValueError(
            f"track span mismatch: estimate {span_est:.3f} s vs truth {span_truth:.3f} s"
        )
    dt = float(np.median(np.diff(truth.t)))
    idx = np.clip(np.searchsorted(truth.t, est.t), 0, len(truth.t) - 1)
    prev_closer = (idx > 0) & (
        np.abs(est.t - truth.t[np.maximum(idx - 1, 0)]) < np.abs(est.t - truth.t[idx])
    )
    idx[prev_closer] -= 1
    skew = np.abs(est.t - truth.t[idx])
    if np.max(skew) > 0.5 * dt + 1e-9:
        raise ValueError(f"time alignment skew {np.max(skew):.4f} s exceeds half a period")

    truth_pos = truth.positions()
    per_joint = {}
    sq_all = []
    for joint in JOINTS:
        est_pos = est.positions()[joint]
        if R is not None:
            est_pos = est_pos @ R.T
        e = est_pos - truth_pos[joint][idx]
        sq = e**2
        sq_all.append(sq)
        per_joint[joint] = {
            "x": float(np.sqrt(sq[:, 0].mean()) * 100),
            "y": float(np.sqrt(sq[:, 1].mean()) * 100),
            "z": float(np.sqrt(sq[:, 2].mean()) * 100),
            "euclid": float(np.sqrt(sq.sum(axis=1).mean()) * 100),
        }
    pooled = np.concatenate(sq_all, axis=0)
    overall = {
        "x": float(np.sqrt(pooled[:, 0].mean()) * 100),
        "y": float(np.sqrt(pooled[:, 1].mean()) * 100),
        "z": float(np.sqrt(pooled[:, 2].mean()) * 100),
        "euclid": float(np.sqrt(pooled.sum(axis=1).mean()) * 100),
    }
    return RmseReport(variant, per_joint, overall, n_steps=len(est.t))


def render_report_text(reports: list[RmseReport]) -> str:
    lines = []
    for rep in reports:
        lines.append(f"RMSE of joint locations, {rep.variant} ({rep.n_steps} steps, centimeters)")
        lines.append(f"{'Joint':<8}{'X':>8}{'Y':>8}{'Z':>8}{'Euclidean':>12}")
        for joint in ("ankle", "knee", "hip"):
            row = rep.per_joint[joint]
            lines.append(
                f"{joint.capitalize():<8}{row['x']:>8.2f}{row['y']:>8.2f}{row['z']:>8.2f}{row['euclid']:>12.2f}"
            )
        o = rep.overall
        lines.append(f"{'Overall':<8}{o['x']:>8.2f}{o['y']:>8.2f}{o['z']:>8.2f}{o['euclid']:>12.2f}")
        if rep.change_vs_imu_pct is not None:
            lines.append(f"Error change relative to IMU: {rep.change_vs_imu_pct:+.0f}%")
        if rep.change_vs_camera_pct is not None:
            lines.append(f"Error change relative to camera: {rep.change_vs_camera_pct:+.0f}%")
        lines.append("")
    return "\n".join(lines)


def render_report_csv(reports: list[RmseReport]) -> str:
    lines = ["# legtrack-csv rmse-report v1", "variant,joint,x_cm,y_cm,z_cm,euclid_cm"]
    for rep in reports:
        for joint in JOINTS:
            row = rep.per_joint[joint]
            lines.append(
                f"{rep.variant},{joint},{row['x']:.4f},{row['y']:.4f},{row['z']:.4f},{row['euclid']:.4f}"
            )
        o = rep.overall
        lines.append(f"{rep.variant},overall,{o['x']:.4f},{o['y']:.4f},{o['z']:.4f},{o['euclid']:.4f}")
    return "\n".join(lines) + "\n"


def compare_variants(
    fused: RmseReport, imu: RmseReport | None, cam: RmseReport | None
) -> RmseReport:
    if imu is not None:
        fused.change_vs_imu_pct = 100.0 * (fused.overall["euclid"] / imu.overall["euclid"] - 1.0)
    if cam is not None:
        fused.change_vs_camera_pct = 100.0 * (
            fused.overall["euclid"] / cam.overall["euclid"] - 1.0
        )
    return fused


# ---------------------------------------------------------------------------
# End-to-end scenario helper


def run_scenario(cfg: RunConfig, out_dir) -> dict:
    """simulate + all three variants + evaluation for one scenario."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    truth = simulate(cfg, out)
    reports = {}
    estimates = {}
    for variant in VARIANTS:
        est = run_tracking(cfg, out, variant)
        estimates[variant] = est
        write_estimate_csv(out / f"estimate_{variant.replace('-', '_')}.csv", est)
        reports[variant] = evaluate_tracks(est, truth, variant)
    compare_variants(reports["fused"], reports["imu-only"], reports["camera-only"])
    ordered = [reports["imu-only"], reports["camera-only"], reports["fused"]]
    (out / "report.txt").write_text(render_report_text(ordered))
    (out / "report.csv").write_text(render_report_csv(ordered))
    return {
        "truth": truth,
        "estimates": estimates,
        "reports": reports,
        "elapsed_s": time.perf_counter() - t_start,
    }
