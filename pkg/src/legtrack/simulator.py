"""Synthetic two-link leg motion with IMU and camera-marker observables.

Ground truth is built from closed-form periodic joint-angle trajectories,
differentiated analytically (positions, velocities, accelerations, body
rates all exact), then inverted into sensor readings: gyro with an
Ornstein-Uhlenbeck bias, accelerometer reading gravity plus motion, and a
magnetometer seeing the dipped earth field.  A smooth warmup envelope
starts every profile from standstill so filters can initialize statically.

World frame is NED with the subject walking along +x (north); the camera
sits east of the subject looking west, image u along north, v down.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .depth import CameraModel, project
from .imu import EarthFields, ImuSample
from .quat import FrameRotation, quat_from_axis_angle, quat_from_matrix, quat_multiply, quat_to_matrix
from .vision import JOINTS, MarkerObservation, RasterImage, frame_path, write_ppm

GRAY_BG = (96, 96, 96)
GREEN = (0, 200, 0)


@dataclass(frozen=True)
class GaitProfile:
    kind: str = "walk"  # walk | run_in_place | static
    duration_s: float = 60.0
    cadence_hz: float = 0.55
    hip_amp_deg: float = 8.0
    knee_max_deg: float = 18.0
    knee_rest_deg: float = 8.0
    knee_phase: float = 0.0
    sway_deg: float = 3.0
    walk_span_m: float = 0.8
    walk_period_s: float = 20.0
    bounce_m: float = 0.0015
    hip_height_m: float = 0.85
    warmup_s: float = 2.0

    def __post_init__(self):
        if self.kind not in ("walk", "run_in_place", "static"):
            raise ValueError(f"unknown gait kind {self.kind!r}")
        if self.cadence_hz <= 0 or self.duration_s <= 0:
            raise ValueError("cadence and duration must be positive")
        if self.knee_rest_deg < -5.0:
            raise ValueError("knee rest angle hyperextends beyond 5 degrees")

    @classmethod
    def preset(cls, kind: str, duration_s: float | None = None) -> "GaitProfile":
        if kind == "walk":
            p = cls()
        elif kind == "run_in_place":
            p = cls(
                kind="run_in_place",
                duration_s=25.0,
                cadence_hz=2.0,
                hip_amp_deg=6.0,
                knee_max_deg=20.0,
                knee_phase=-1.2,
                walk_span_m=0.0,
                bounce_m=0.022,
            )
        elif kind == "static":
            p = cls(
                kind="static",
                duration_s=10.0,
                hip_amp_deg=0.0,
                knee_max_deg=0.0,
                knee_rest_deg=10.0,
                sway_deg=0.0,
                walk_span_m=0.0,
                bounce_m=0.0,
            )
        else:
            raise ValueError(f"unknown gait kind {kind!r}")
        if duration_s is not None:
            p = replace(p, duration_s=duration_s)
        return p


@dataclass(frozen=True)
class SensorNoiseSpec:
    gyro_sigma: float = 0.012  # rad/s
    accel_sigma: float = 0.05  # m/s^2
    mag_sigma: float = 0.005
    bias_init: float = 0.05  # rad/s, stationary magnitude of the OU bias
    bias_tau: float = 100.0  # s
    marker_dropout_prob: float = 0.0
    pixel_jitter_sigma: float = 0.1

    def __post_init__(self):
        vals = [self.gyro_sigma, self.accel_sigma, self.mag_sigma, self.bias_init, self.bias_tau]
        if any(v < 0 for v in vals):
            raise ValueError("noise magnitudes must be non-negative")
        if not 0.0 <= self.marker_dropout_prob <= 1.0:
            raise ValueError("dropout probability must lie in [0, 1]")

    @classmethod
    def noise_free(cls) -> "SensorNoiseSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.0)


@dataclass
class TruthTrack:
    t: np.ndarray
    hip: np.ndarray  # (N, 3) NED
    knee: np.ndarray
    ankle: np.ndarray
    q_u: np.ndarray  # (N, 4) sensor->NED
    q_l: np.ndarray
    omega_u: np.ndarray  # (N, 3) sensor frame
    omega_l: np.ndarray
    v_imu_u: np.ndarray  # (N, 3) NED
    v_imu_l: np.ndarray
    a_imu_u: np.ndarray  # (N, 3) NED coordinate acceleration
    a_imu_l: np.ndarray
    bias_u: np.ndarray | None = None  # filled by synthesize_imu
    bias_l: np.ndarray | None = None

    def positions(self) -> dict:
        return {"hip": self.hip, "knee": self.knee, "ankle": self.ankle}


class _Curve:
    """Scalar trajectory with analytic first and second derivatives."""

    def __init__(self, v, d1, d2):
        self.v, self.d1, self.d2 = v, d1, d2

    @classmethod
    def constant(cls, t, value):
        z = np.zeros_like(t)
        return cls(np.full_like(t, value), z, z)

    @classmethod
    def sinusoid(cls, t, amp, freq, phase=0.0):
        w = 2.0 * np.pi * freq
        arg = w * t + phase
        return cls(amp * np.sin(arg), amp * w * np.cos(arg), -amp * w * w * np.sin(arg))

    @classmethod
    def raised_cosine(cls, t, amp, freq, phase=0.0):
        w = 2.0 * np.pi * freq
        arg = w * t + phase
        return cls(
            amp * 0.5 * (1.0 - np.cos(arg)),
            amp * 0.5 * w * np.sin(arg),
            amp * 0.5 * w * w * np.cos(arg),
        )

    @classmethod
    def smooth_ramp(cls, t, duration):
        """C2 envelope rising 0 to 1 over duration."""
        if duration <= 0:
            one = np.ones_like(t)
            zero = np.zeros_like(t)
            return cls(one, zero, zero)
        u = np.clip(t / duration, 0.0, 1.0)
        v = u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
        d1 = 30.0 * u * u * (1.0 - u) ** 2 / duration
        d2 = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / duration**2
        return cls(v, d1, d2)

    def __mul__(self, other: "_Curve") -> "_Curve":
        return _Curve(
            self.v * other.v,
            self.d1 * other.v + self.v * other.d1,
            self.d2 * other.v + 2.0 * self.d1 * other.d1 + self.v * other.d2,
        )

    def __add__(self, other):
        if isinstance(other, _Curve):
            return _Curve(self.v + other.v, self.d1 + other.d1, self.d2 + other.d2)
        return _Curve(self.v + other, self.d1, self.d2)

    def __sub__(self, other: "_Curve") -> "_Curve":
        return _Curve(self.v - other.v, self.d1 - other.d1, self.d2 - other.d2)


def _segment_quats(sway: np.ndarray, pitch: np.ndarray) -> np.ndarray:
    """Compose world-x sway with world-y pitch into sensor->NED quaternions."""
    n = len(sway)
    out = np.zeros((n, 4))
    x_axis = np.array([1.0, 0.0, 0.0])
    y_axis = np.array([0.0, 1.0, 0.0])
    for k in range(n):
        out[k] = quat_multiply(
            quat_from_axis_angle(x_axis, sway[k]), quat_from_axis_angle(y_axis, pitch[k])
        )
    return out


def _body_rates(q: np.ndarray, sway: _Curve, pitch: _Curve) -> tuple[np.ndarray, np.ndarray]:
    """Sensor-frame angular velocity and acceleration for the sway+pitch chain."""
    n = q.shape[0]
    omega = np.zeros((n, 3))
    alpha = np.zeros((n, 3))
    x_axis = np.array([1.0, 0.0, 0.0])
    for k in range(n):
        R = quat_to_matrix(q[k])
        rx = R.T @ x_axis
        w = sway.d1[k] * rx
        w[1] += pitch.d1[k]
        omega[k] = w
        alpha[k] = sway.d2[k] * rx - np.cross(w, sway.d1[k] * rx)
        alpha[k][1] += pitch.d2[k]
    return omega, alpha


def _chain_point(parent_p, parent_v, parent_a, q, omega, alpha, offset):
    """Position/velocity/acceleration of a body-fixed offset from a parent point."""
    n = q.shape[0]
    p = np.zeros((n, 3))
    v = np.zeros((n, 3))
    a = np.zeros((n, 3))
    for k in range(n):
        R = quat_to_matrix(q[k])
        p[k] = parent_p[k] + R @ offset
        v[k] = parent_v[k] + R @ np.cross(omega[k], offset)
        a[k] = parent_a[k] + R @ (
            np.cross(alpha[k], offset) + np.cross(omega[k], np.cross(omega[k], offset))
        )
    return p, v, a


def generate_truth(profile: GaitProfile, rate_hz: float, leg) -> TruthTrack:
    """Exact kinematics of the two-link chain for the given gait profile."""
    if rate_hz < 2.0 * profile.cadence_hz * 10.0:
        raise ValueError("sample rate must be at least 20x the cadence")
    n = int(round(profile.duration_s * rate_hz)) + 1
    t = np.arange(n) / rate_hz

    env = _Curve.smooth_ramp(t, profile.warmup_s)
    f = profile.cadence_hz
    hip_angle = env * _Curve.sinusoid(t, np.radians(profile.hip_amp_deg), f)
    knee_flex = (
        env * _Curve.raised_cosine(t, np.radians(profile.knee_max_deg), f, profile.knee_phase)
        + np.radians(profile.knee_rest_deg)
    )
    sway = env * _Curve.sinusoid(t, np.radians(profile.sway_deg), 0.5 * f)

    # pelvis path: back-and-forth along north, slight vertical bounce
    if profile.walk_period_s > 0 and profile.walk_span_m > 0:
        pelvis_x = env * _Curve.sinusoid(t, profile.walk_span_m, 1.0 / profile.walk_period_s)
    else:
        pelvis_x = _Curve.constant(t, 0.0)
    pelvis_y = _Curve.constant(t, 0.0)
    pelvis_z = _Curve.constant(t, -profile.hip_height_m) + (
        env * _Curve.sinusoid(t, profile.bounce_m, 2.0 * f)
    )

    half_pi = np.pi / 2.0
    pitch_u = hip_angle + half_pi
    pitch_l = hip_angle - knee_flex + half_pi

    q_u = _segment_quats(sway.v, pitch_u.v)
    q_l = _segment_quats(sway.v, pitch_l.v)
    omega_u, alpha_u = _body_rates(q_u, sway, pitch_u)
    omega_l, alpha_l = _body_rates(q_l, sway, pitch_l)

    hip_p = np.column_stack([pelvis_x.v, pelvis_y.v, pelvis_z.v])
    hip_v = np.column_stack([pelvis_x.d1, pelvis_y.d1, pelvis_z.d1])
    hip_a = np.column_stack([pelvis_x.d2, pelvis_y.d2, pelvis_z.d2])

    knee_p, knee_v, knee_a = _chain_point(
        hip_p, hip_v, hip_a, q_u, omega_u, alpha_u, np.array([-leg.l_u, 0.0, 0.0])
    )
    ankle_p, _, _ = _chain_point(
        knee_p, knee_v, knee_a, q_l, omega_l, alpha_l, np.array([-leg.l_l, 0.0, 0.0])
    )
    _, viu, aiu = _chain_point(
        hip_p, hip_v, hip_a, q_u, omega_u, alpha_u, np.array([leg.r_u - leg.l_u, 0.0, 0.0])
    )
    _, vil, ail = _chain_point(
        knee_p, knee_v, knee_a, q_l, omega_l, alpha_l, np.array([-leg.r_l, 0.0, 0.0])
    )

    return TruthTrack(
        t=t,
        hip=hip_p,
        knee=knee_p,
        ankle=ankle_p,
        q_u=q_u,
        q_l=q_l,
        omega_u=omega_u,
        omega_l=omega_l,
        v_imu_u=viu,
        v_imu_l=vil,
        a_imu_u=aiu,
        a_imu_l=ail,
    )


def _ou_bias(n: int, dt: float, spec: SensorNoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Stationary Ornstein-Uhlenbeck bias track, exact discretization."""
    sigma_axis = spec.bias_init / np.sqrt(3.0)
    b = np.zeros((n, 3))
    if sigma_axis == 0.0:
        return b
    decay = np.exp(-dt / spec.bias_tau)
    step_sigma = sigma_axis * np.sqrt(max(0.0, 1.0 - decay * decay))
    b[0] = rng.normal(scale=sigma_axis, size=3)
    for k in range(1, n):
        b[k] = b[k - 1] * decay + rng.normal(scale=step_sigma, size=3)
    return b


def synthesize_imu(
    truth: TruthTrack,
    spec: SensorNoiseSpec,
    fields: EarthFields,
    rng: np.random.Generator,
) -> tuple[list[ImuSample], list[ImuSample]]:
    """Invert the truth into two IMU streams; bias tracks are stored on truth.

    Accelerometer model: reads gravity direction plus motion, i.e.
    R(q)ᵀ (a_ned + g_ned); static magnitude is exactly g.
    """
    n = len(truth.t)
    dt = float(np.median(np.diff(truth.t)))
    g_ned = fields.gravity
    m_ned = fields.mag_field
    streams = []
    biases = []
    for q_arr, omega_arr, a_arr in (
        (truth.q_u, truth.omega_u, truth.a_imu_u),
        (truth.q_l, truth.omega_l, truth.a_imu_l),
    ):
        bias = _ou_bias(n, dt, spec, rng)
        samples = []
        for k in range(n):
            R = quat_to_matrix(q_arr[k])
            gyro = omega_arr[k] + bias[k] + rng.normal(scale=spec.gyro_sigma, size=3)
            accel = R.T @ (a_arr[k] + g_ned) + rng.normal(scale=spec.accel_sigma, size=3)
            mag = R.T @ m_ned + rng.normal(scale=spec.mag_sigma, size=3)
            mag = mag / np.linalg.norm(mag)
            samples.append(ImuSample(float(truth.t[k]), gyro, accel, mag))
        streams.append(samples)
        biases.append(bias)
    truth.bias_u, truth.bias_l = biases
    return streams[0], streams[1]


def side_view_camera(distance_east_m: float = 2.5, height_m: float = 0.8):
    """Camera east of the subject looking west: u north, v down, z west->east.

    Returns (FrameRotation NED->camera, camera position in NED).
    """
    R_cam_from_ned = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    rot = FrameRotation("ned", "camera", quat_from_matrix(R_cam_from_ned))
    return rot, np.array([0.0, distance_east_m, -height_m])


def _camera_times(truth: TruthTrack, rate_hz: float) -> np.ndarray:
    # offset by half a camera period: deliberately asynchronous to the IMU grid
    t0 = truth.t[0] + 0.5 / rate_hz
    return np.arange(t0, truth.t[-1], 1.0 / rate_hz)


def _interp_positions(truth: TruthTrack, t_cam: np.ndarray) -> dict:
    out = {}
    for joint, arr in truth.positions().items():
        out[joint] = np.column_stack(
            [np.interp(t_cam, truth.t, arr[:, i]) for i in range(3)]
        )
    return out


def synthesize_markers(
    truth: TruthTrack,
    cam: CameraModel,
    cam_rotation: FrameRotation,
    cam_position: np.ndarray,
    spec: SensorNoiseSpec,
    rng: np.random.Generator,
    rate_hz: float = 30.0,
    mode: str = "blobs",
    frames_dir=None,
) -> tuple[np.ndarray, list[list[MarkerObservation]]]:
    """Project joints into the camera, as blob observations or rendered frames.

    Blob mode emits labeled MarkerObservation rows directly (ideal tracker);
    frame mode renders green squares on gray background to PPM files and
    returns the same observation structure computed from the ideal
    projections (callers re-extract from the frames to exercise the vision
    stage).
    """
    if mode not in ("blobs", "frames"):
        raise ValueError(f"unknown marker mode {mode!r}")
    t_cam = _camera_times(truth, rate_hz)
    pos_ned = _interp_positions(truth, t_cam)
    R_cn = quat_to_matrix(cam_rotation.q)
    frames: list[list[MarkerObservation]] = []
    for j, tj in enumerate(t_cam):
        obs_row = []
        render_spots = []
        for joint in JOINTS:
            p_cam = R_cn @ (pos_ned[joint][j] - cam_position)
            if p_cam[2] <= 0.5:
                raise ValueError(f"{joint} joint behind or too close to the camera at t={tj:.3f}")
            u, v = project(p_cam, cam)
            side_px = cam.focal_px * cam.marker_side_m / p_cam[2]
            dropped = rng.random() < spec.marker_dropout_prob
            u_obs = u + rng.normal(scale=spec.pixel_jitter_sigma)
            v_obs = v + rng.normal(scale=spec.pixel_jitter_sigma)
            side_obs = max(1e-6, side_px + rng.normal(scale=spec.pixel_jitter_sigma))
            if dropped:
                obs_row.append(MarkerObservation(float(tj), joint, (0.0, 0.0), 0.0, False))
            else:
                obs_row.append(
                    MarkerObservation(
                        float(tj), joint, (float(u_obs), float(v_obs)), float(side_obs**2), True
                    )
                )
                render_spots.append((u, v, side_px))
        frames.append(obs_row)
        if mode == "frames":
            img = _render_frame(cam, render_spots)
            write_ppm(frame_path(frames_dir, j), img)
    return t_cam, frames


def _render_frame(cam: CameraModel, spots) -> RasterImage:
    """Gray background with antialiased axis-aligned marker squares."""
    img = RasterImage.filled(cam.width, cam.height, GRAY_BG)
    px = img.pixels.astype(float)
    for u, v, side in spots:
        half = side / 2.0
        lo_u, hi_u = u - half, u + half
        lo_v, hi_v = v - half, v + half
        for row in range(max(0, int(np.floor(lo_v - 0.5))), min(cam.height, int(np.ceil(hi_v + 0.5)) + 1)):
            cov_v = max(0.0, min(hi_v, row + 0.5) - max(lo_v, row - 0.5))
            if cov_v <= 0:
                continue
            for col in range(max(0, int(np.floor(lo_u - 0.5))), min(cam.width, int(np.ceil(hi_u + 0.5)) + 1)):
                cov_u = max(0.0, min(hi_u, col + 0.5) - max(lo_u, col - 0.5))
                if cov_u <= 0:
                    continue
                c = cov_u * cov_v
                px[row, col] = (1.0 - c) * px[row, col] + c * np.array(GREEN, dtype=float)
    img.pixels = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    return img
