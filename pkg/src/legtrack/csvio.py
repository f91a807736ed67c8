"""CSV schemas shared across the pipeline.

Every file starts with a `# legtrack-csv <name> v1` comment line followed
by a column header.  Floats are written with 12 significant digits, which
keeps runs byte-identical for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .depth import Joint3D
from .imu import ImuSample
from .simulator import TruthTrack
from .vision import JOINTS, MarkerObservation


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _open_rows(path, expected_schema: str):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# legtrack-csv {expected_schema} "):
        raise ValueError(f"{path}: expected schema {expected_schema!r}")
    return [ln.split(",") for ln in lines[2:] if ln]


def _write(path, schema: str, header: str, rows):
    with open(path, "w") as fh:
        fh.write(f"# legtrack-csv {schema} v1\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# IMU streams


def write_imu_csv(path, samples: list[ImuSample]):
    rows = (
        [_fmt(s.t)]
        + [_fmt(v) for v in s.gyro]
        + [_fmt(v) for v in s.accel]
        + [_fmt(v) for v in s.mag]
        for s in samples
    )
    _write(path, "imu", "t,gx,gy,gz,ax,ay,az,mx,my,mz", rows)


def read_imu_csv(path) -> list[ImuSample]:
    out = []
    for row in _open_rows(path, "imu"):
        vals = [float(v) for v in row]
        out.append(
            ImuSample(vals[0], np.array(vals[1:4]), np.array(vals[4:7]), np.array(vals[7:10]))
        )
    return out


# ---------------------------------------------------------------------------
# Marker observations (one row per joint per frame)


def write_marker_csv(path, frames: list[list[MarkerObservation]]):
    rows = (
        [_fmt(o.t), o.joint, _fmt(o.pixel[0]), _fmt(o.pixel[1]), _fmt(o.area_px), str(int(o.valid))]
        for frame in frames
        for o in frame
    )
    _write(path, "markers", "t,joint,u,v,area_px,valid", rows)


def read_marker_csv(path) -> list[list[MarkerObservation]]:
    frames: list[list[MarkerObservation]] = []
    current: list[MarkerObservation] = []
    last_t = None
    for row in _open_rows(path, "markers"):
        t = float(row[0])
        obs = MarkerObservation(t, row[1], (float(row[2]), float(row[3])), float(row[4]), row[5] == "1")
        if last_t is not None and t != last_t:
            frames.append(current)
            current = []
        current.append(obs)
        last_t = t
    if current:
        frames.append(current)
    return frames


# ---------------------------------------------------------------------------
# Camera-frame 3D joints


def write_joints3d_csv(path, frames: list[list[Joint3D]]):
    rows = (
        [_fmt(j.t), j.joint] + [_fmt(v) for v in j.position] + [str(int(j.valid))]
        for frame in frames
        for j in frame
    )
    _write(path, "joints3d", "t,joint,X,Y,Z,valid", rows)


def read_joints3d_csv(path) -> list[list[Joint3D]]:
    frames: list[list[Joint3D]] = []
    current: list[Joint3D] = []
    last_t = None
    for row in _open_rows(path, "joints3d"):
        t = float(row[0])
        j = Joint3D(t, row[1], np.array([float(v) for v in row[2:5]]), row[5] == "1")
        if last_t is not None and t != last_t:
            frames.append(current)
            current = []
        current.append(j)
        last_t = t
    if current:
        frames.append(current)
    return frames


# ---------------------------------------------------------------------------
# Ground truth


_TRUTH_HEADER = (
    "t,"
    + ",".join(f"{j}_{a}" for j in JOINTS for a in "xyz")
    + ",qu_w,qu_x,qu_y,qu_z,ql_w,ql_x,ql_y,ql_z"
    + ",wu_x,wu_y,wu_z,wl_x,wl_y,wl_z"
    + ",bu_x,bu_y,bu_z,bl_x,bl_y,bl_z"
    + ",viu_x,viu_y,viu_z,vil_x,vil_y,vil_z"
)


def write_truth_csv(path, truth: TruthTrack):
    n = len(truth.t)
    bias_u = truth.bias_u if truth.bias_u is not None else np.zeros((n, 3))
    bias_l = truth.bias_l if truth.bias_l is not None else np.zeros((n, 3))

    def rows():
        for k in range(n):
            vals = (
                [truth.t[k]]
                + list(truth.hip[k])
                + list(truth.knee[k])
                + list(truth.ankle[k])
                + list(truth.q_u[k])
                + list(truth.q_l[k])
                + list(truth.omega_u[k])
                + list(truth.omega_l[k])
                + list(bias_u[k])
                + list(bias_l[k])
                + list(truth.v_imu_u[k])
                + list(truth.v_imu_l[k])
            )
            yield [_fmt(v) for v in vals]

    _write(path, "truth", _TRUTH_HEADER, rows())


def read_truth_csv(path) -> TruthTrack:
    data = np.array([[float(v) for v in row] for row in _open_rows(path, "truth")])
    n = data.shape[0]
    zeros = np.zeros((n, 3))
    return TruthTrack(
        t=data[:, 0],
        hip=data[:, 1:4],
        knee=data[:, 4:7],
        ankle=data[:, 7:10],
        q_u=data[:, 10:14],
        q_l=data[:, 14:18],
        omega_u=data[:, 18:21],
        omega_l=data[:, 21:24],
        v_imu_u=data[:, 30:33],
        v_imu_l=data[:, 33:36],
        a_imu_u=zeros,
        a_imu_l=zeros,
        bias_u=data[:, 24:27],
        bias_l=data[:, 27:30],
    )


# ---------------------------------------------------------------------------
# Estimate tracks


@dataclass
class EstimateTrack:
    t: np.ndarray
    q_u: np.ndarray  # (N, 4)
    q_l: np.ndarray
    bias_u: np.ndarray  # (N, 3)
    bias_l: np.ndarray
    hip: np.ndarray  # (N, 3) NED
    knee: np.ndarray
    ankle: np.ndarray
    gate_u: np.ndarray  # (N,) bool
    gate_l: np.ndarray

    def positions(self) -> dict:
        return {"hip": self.hip, "knee": self.knee, "ankle": self.ankle}


_EST_HEADER = (
    "t,qu_w,qu_x,qu_y,qu_z,ql_w,ql_x,ql_y,ql_z"
    ",bu_x,bu_y,bu_z,bl_x,bl_y,bl_z"
    ",hip_x,hip_y,hip_z,knee_x,knee_y,knee_z,ankle_x,ankle_y,ankle_z"
    ",gate_u,gate_l"
)


def write_estimate_csv(path, est: EstimateTrack):
    def rows():
        for k in range(len(est.t)):
            vals = (
                [est.t[k]]
                + list(est.q_u[k])
                + list(est.q_l[k])
                + list(est.bias_u[k])
                + list(est.bias_l[k])
                + list(est.hip[k])
                + list(est.knee[k])
                + list(est.ankle[k])
            )
            yield [_fmt(v) for v in vals] + [str(int(est.gate_u[k])), str(int(est.gate_l[k]))]

    _write(path, "estimate", _EST_HEADER, rows())


def read_estimate_csv(path) -> EstimateTrack:
    raw = _open_rows(path, "estimate")
    data = np.array([[float(v) for v in row] for row in raw])
    return EstimateTrack(
        t=data[:, 0],
        q_u=data[:, 1:5],
        q_l=data[:, 5:9],
        bias_u=data[:, 9:12],
        bias_l=data[:, 12:15],
        hip=data[:, 15:18],
        knee=data[:, 18:21],
        ankle=data[:, 21:24],
        gate_u=data[:, 24].astype(bool),
        gate_l=data[:, 25].astype(bool),
    )
