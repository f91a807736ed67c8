"""Hybrid extended Kalman filter over the two-segment leg state.

Continuous-time prediction (RK4 on both the state and its covariance),
discrete sequential updates.  The 20-component state stacks, per segment
(upper then lower): angular rate (3), gyro bias (3), orientation
quaternion (4).  Angular rate is modeled as a noise-driven random walk,
bias as first-order dynamics damped by its time constants, orientation by
quaternion kinematics driven by the state's own rate.

Three updates per step:

1. gyro + gradient-descent orientation (14 rows), suppressed per segment
   when motion acceleration contaminates the gravity reading;
2. knee velocity consistency (3 rows): the knee point's velocity computed
   through either segment's IMU must agree, with the measured value
   identically zero;
3. camera segment vectors (6 rows): hip->knee and knee->ankle vectors
   observed in the camera frame, applied whenever a camera frame lands on
   the current IMU step.

Segment frames: each sensor x-axis points proximally (up the leg), so the
hip->knee vector is (-l_u, 0, 0) in the upper frame and knee->ankle is
(-l_l, 0, 0) in the lower frame.  The knee thus sits at -r_u along the
upper sensor's axis and +r_l along the lower one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imu import EarthFields, GRAVITY, ImuSample, acceleration_gate, gradient_descent_orientation, solve_static_orientation, quat_rate_from_gyro
from .quat import FrameRotation, quat_multiply, quat_norm, quat_to_matrix, renormalize, rotate_vector

N_STATE = 20
OMEGA_U = slice(0, 3)
BIAS_U = slice(3, 6)
QUAT_U = slice(6, 10)
OMEGA_L = slice(10, 13)
BIAS_L = slice(13, 16)
QUAT_L = slice(16, 20)

_SEGMENTS = ((OMEGA_U, BIAS_U, QUAT_U), (OMEGA_L, BIAS_L, QUAT_L))


class FilterDivergenceError(RuntimeError):
    """Covariance lost positive semidefiniteness or a state degenerated."""


class StreamError(ValueError):
    """Input streams are inconsistent (gaps, misaligned timestamps)."""


@dataclass(frozen=True)
class FusionState:
    """Structured view of the 20-component state vector."""

    omega_u: np.ndarray
    bias_u: np.ndarray
    q_u: np.ndarray
    omega_l: np.ndarray
    bias_l: np.ndarray
    q_l: np.ndarray

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "FusionState":
        return cls(
            x[OMEGA_U].copy(),
            x[BIAS_U].copy(),
            x[QUAT_U].copy(),
            x[OMEGA_L].copy(),
            x[BIAS_L].copy(),
            x[QUAT_L].copy(),
        )

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.omega_u, self.bias_u, self.q_u, self.omega_l, self.bias_l, self.q_l]
        )


def _default_q_diag() -> np.ndarray:
    q = np.zeros(N_STATE)
    q[OMEGA_U] = 0.045
    q[OMEGA_L] = 0.045
    q[BIAS_U] = 1e-5
    q[BIAS_L] = 1e-5
    return q


def _default_r1_diag() -> np.ndarray:
    return 1e-3 * np.array(
        [0.134, 0.167, 0.035, 0.005, 0.007, 0.002, 0.019, 0.185, 0.029, 0.057, 0.014, 0.004, 0.014, 0.004]
    )


@dataclass(frozen=True)
class NoiseConfig:
    """Process and measurement covariances (diagonals)."""

    q_diag: np.ndarray = field(default_factory=_default_q_diag)
    r1_diag: np.ndarray = field(default_factory=_default_r1_diag)
    r2_diag: np.ndarray = field(default_factory=lambda: 1e-4 * np.ones(3))
    r3_diag: np.ndarray = field(default_factory=lambda: 1e-8 * np.ones(6))
    accel_threshold: float = 0.2
    gate_inflation: float = 1e6

    def __post_init__(self):
        for name, arr, n in (
            ("q_diag", self.q_diag, N_STATE),
            ("r1_diag", self.r1_diag, 14),
            ("r2_diag", self.r2_diag, 3),
            ("r3_diag", self.r3_diag, 6),
        ):
            a = np.asarray(arr, dtype=float)
            if a.shape != (n,) or np.any(a < 0):
                raise ValueError(f"{name} must be {n} non-negative values")
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class LegModel:
    """Segment lengths and IMU-to-knee lever arms along each segment axis."""

    l_u: float = 0.40
    l_l: float = 0.40
    r_u: float = 0.20
    r_l: float = 0.20

    def __post_init__(self):
        if min(self.l_u, self.l_l, self.r_u, self.r_l) <= 0:
            raise ValueError("segment lengths and lever arms must be positive")
        if self.r_u > self.l_u or self.r_l > self.l_l:
            raise ValueError("lever arms cannot exceed their segment lengths")


@dataclass(frozen=True)
class FilterConfig:
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    leg: LegModel = field(default_factory=LegModel)
    fields: EarthFields = field(default_factory=lambda: EarthFields.with_dip(60.0))
    bias_tau: np.ndarray = field(default_factory=lambda: np.full(3, 100.0))
    alpha: float = 5.0
    g: float = GRAVITY
    bias_sign: float = 1.0  # measured rate = omega + bias_sign * bias
    enable_rate_orientation_update: bool = True
    enable_knee_constraint_update: bool = True
    enable_segment_vector_update: bool = True
    fd_step: float = 1e-6
    max_dt: float = 0.05
    innovation_cond_limit: float = 1e12
    bias_p0: float = 1e-4
    swap_update_order: bool = False  # apply camera vectors before the knee constraint


# ---------------------------------------------------------------------------
# Process model


def process_derivative(
    x: np.ndarray, tau: np.ndarray, noise: np.ndarray | None = None
) -> np.ndarray:
    """State derivative: rate random walk, damped bias, quaternion kinematics."""
    w = np.zeros(N_STATE) if noise is None else np.asarray(noise, dtype=float)
    dx = np.zeros(N_STATE)
    inv_tau = 1.0 / np.asarray(tau, dtype=float)
    for om, bi, qu in _SEGMENTS:
        dx[om] = w[om]
        dx[bi] = inv_tau * (w[bi] - x[bi])
        q = x[qu]
        o = x[om]
        dx[qu] = 0.5 * quat_multiply(q, np.array([0.0, o[0], o[1], o[2]]))
    return dx


def process_jacobians(x: np.ndarray, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic F = df/dx and L = df/dw at the given state."""
    F = np.zeros((N_STATE, N_STATE))
    L = np.zeros((N_STATE, N_STATE))
    inv_tau = 1.0 / np.asarray(tau, dtype=float)
    for om, bi, qu in _SEGMENTS:
        F[bi, bi] = -np.diag(inv_tau)
        w, xq, yq, zq = x[qu]
        ox, oy, oz = x[om]
        # d(q̇)/dq: right-multiplication by (0, omega)
        F[qu, qu] = 0.5 * np.array(
            [
                [0.0, -ox, -oy, -oz],
                [ox, 0.0, oz, -oy],
                [oy, -oz, 0.0, ox],
                [oz, oy, -ox, 0.0],
            ]
        )
        # d(q̇)/domega: left-multiplication by q, vector columns
        F[qu, om] = 0.5 * np.array(
            [
                [-xq, -yq, -zq],
                [w, -zq, yq],
                [zq, w, -xq],
                [-yq, xq, w],
            ]
        )
        L[om, om] = np.eye(3)
        L[bi, bi] = np.diag(inv_tau)
    return F, L


def _check_covariance(P: np.ndarray, where: str, floor: float = -1e-6):
    eigmin = float(np.linalg.eigvalsh(P).min())
    if eigmin < floor:
        raise FilterDivergenceError(f"covariance lost PSD during {where}: min eig {eigmin:.3e}")
    return eigmin


def predict(
    x: np.ndarray,
    P: np.ndarray,
    dt: float,
    cfg: FilterConfig,
) -> tuple[np.ndarray, np.ndarray, float]:
    """RK4 integration of the state and covariance over one IMU period.

    Returns (x, P, min covariance eigenvalue) with quaternions renormalized
    and P symmetrized.
    """
    if not 0.0 < dt <= cfg.max_dt:
        raise ValueError(f"dt {dt} outside (0, {cfg.max_dt}]")
    Q = np.diag(cfg.noise.q_diag)
    tau = cfg.bias_tau

    def deriv(xx, PP):
        F, L = process_jacobians(xx, tau)
        return process_derivative(xx, tau), F @ PP + PP @ F.T + L @ Q @ L.T

    k1x, k1P = deriv(x, P)
    k2x, k2P = deriv(x + 0.5 * dt * k1x, P + 0.5 * dt * k1P)
    k3x, k3P = deriv(x + 0.5 * dt * k2x, P + 0.5 * dt * k2P)
    k4x, k4P = deriv(x + dt * k3x, P + dt * k3P)
    x_new = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    P_new = P + dt / 6.0 * (k1P + 2 * k2P + 2 * k3P + k4P)
    for _, _, qu in _SEGMENTS:
        x_new[qu] = renormalize(x_new[qu])
    P_new = 0.5 * (P_new + P_new.T)
    eigmin = _check_covariance(P_new, "predict")
    return x_new, P_new, eigmin


# ---------------------------------------------------------------------------
# Measurement models


def rate_orientation_measurement(x: np.ndarray, bias_sign: float = 1.0):
    """Predicted gyro reading and orientation per segment: h (14,), H (14x20)."""
    h = np.concatenate(
        [
            x[OMEGA_U] + bias_sign * x[BIAS_U],
            x[QUAT_U],
            x[OMEGA_L] + bias_sign * x[BIAS_L],
            x[QUAT_L],
        ]
    )
    H = np.zeros((14, N_STATE))
    H[0:3, OMEGA_U] = np.eye(3)
    H[0:3, BIAS_U] = bias_sign * np.eye(3)
    H[3:7, QUAT_U] = np.eye(4)
    H[7:10, OMEGA_L] = np.eye(3)
    H[7:10, BIAS_L] = bias_sign * np.eye(3)
    H[10:14, QUAT_L] = np.eye(4)
    return h, H


def propagate_imu_velocity(
    V_prev: np.ndarray, q: np.ndarray, a_m: np.ndarray, dt: float, g: float = GRAVITY
) -> np.ndarray:
    """Euler step of the IMU velocity in NED: rotate the reading, remove gravity."""
    a_ned = rotate_vector(renormalize(q), a_m) - np.array([0.0, 0.0, g])
    return V_prev + a_ned * dt


def _rotate_quadratic(q: np.ndarray, v) -> np.ndarray:
    """Rotation form q (0,v) q* as a smooth polynomial in q (no unit check).

    Measurement models evaluate this under finite-difference perturbations
    that leave q slightly non-unit; the quadratic form keeps h smooth there.
    """
    w, ux, uy, uz = q
    vx, vy, vz = v
    s = w * w - (ux * ux + uy * uy + uz * uz)
    d = 2.0 * (ux * vx + uy * vy + uz * vz)
    return np.array(
        [
            s * vx + d * ux + 2.0 * w * (uy * vz - uz * vy),
            s * vy + d * uy + 2.0 * w * (uz * vx - ux * vz),
            s * vz + d * uz + 2.0 * w * (ux * vy - uy * vx),
        ]
    )


def knee_velocity_mismatch(
    x: np.ndarray, V_u: np.ndarray, V_l: np.ndarray, leg: LegModel
) -> np.ndarray:
    """Knee velocity through the lower segment minus through the upper one.

    The knee sits against the upper sensor's proximal x-axis (arm -r_u) and
    along the lower sensor's (arm +r_l).  Zero on rigid, consistent motion.
    """
    # omega x (a, 0, 0) = (0, wz*a, -wy*a)
    lever_u = (0.0, -x[2] * leg.r_u, x[1] * leg.r_u)
    lever_l = (0.0, x[12] * leg.r_l, -x[11] * leg.r_l)
    upper = V_u + _rotate_quadratic(x[QUAT_U], lever_u)
    lower = V_l + _rotate_quadratic(x[QUAT_L], lever_l)
    return lower - upper


def segment_vectors_camera(
    x: np.ndarray, cam_from_ned: FrameRotation, leg: LegModel
) -> np.ndarray:
    """Predicted hip->knee and knee->ankle vectors in the camera frame (6,)."""
    q_cu = quat_multiply(cam_from_ned.q, x[QUAT_U])
    q_cl = quat_multiply(cam_from_ned.q, x[QUAT_L])
    return np.concatenate(
        [
            _rotate_quadratic(q_cu, np.array([-leg.l_u, 0.0, 0.0])),
            _rotate_quadratic(q_cl, np.array([-leg.l_l, 0.0, 0.0])),
        ]
    )


def fd_jacobian(h_fn, x: np.ndarray, rows: int, cols, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of a measurement model.

    Only the state indices in cols are perturbed; other columns are zero.
    """
    H = np.zeros((rows, N_STATE))
    for j in cols:
        dx = np.zeros(N_STATE)
        dx[j] = step
        H[:, j] = (h_fn(x + dx) - h_fn(x - dx)) / (2.0 * step)
    return H


_COLS_MEAS2 = list(range(0, 3)) + list(range(6, 13)) + list(range(16, 20))
_COLS_MEAS3 = list(range(6, 10)) + list(range(16, 20))


def kalman_update(
    x: np.ndarray,
    P: np.ndarray,
    y: np.ndarray,
    h: np.ndarray,
    H: np.ndarray,
    R: np.ndarray,
    M: np.ndarray | None = None,
    cond_limit: float = 1e12,
):
    """One sequential EKF update; returns (x, P, applied).

    Measurement noise is additive (M defaults to identity).  A badly
    conditioned innovation covariance skips the update and reports it.
    """
    MRM = R if M is None else M @ R @ M.T
    S = H @ P @ H.T + MRM
    S = 0.5 * (S + S.T)
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 0 or eig[-1] / eig[0] > cond_limit:
        return x, P, False
    K = np.linalg.solve(S, H @ P).T
    x_new = x + K @ (y - h)
    P_new = (np.eye(N_STATE) - K @ H) @ P
    P_new = 0.5 * (P_new + P_new.T)
    for _, _, qu in _SEGMENTS:
        x_new[qu] = renormalize(x_new[qu])
    return x_new, P_new, True


def align_double_cover(q_meas: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Flip the measured quaternion onto the reference hemisphere."""
    return -q_meas if float(np.dot(q_meas, q_ref)) < 0.0 else q_meas


# ---------------------------------------------------------------------------
# Run loop


@dataclass
class CameraData:
    """Camera-frame joint positions per camera frame, with validity flags."""

    t: np.ndarray  # (M,)
    positions: dict  # joint -> (M, 3) camera-frame meters
    valid: dict  # joint -> (M,) bool
    rotation: FrameRotation  # NED -> camera
    position_ned: np.ndarray  # camera origin in NED

    def to_ned(self, p_cam: np.ndarray) -> np.ndarray:
        R = quat_to_matrix(self.rotation.q)
        return R.T @ np.asarray(p_cam, dtype=float) + self.position_ned


@dataclass
class HipAnchor:
    """Positioning track for the pelvis: timestamps, NED positions, validity."""

    t: np.ndarray
    pos: np.ndarray  # (M, 3)
    valid: np.ndarray  # (M,) bool

    def interpolated(self, t_query: np.ndarray) -> np.ndarray:
        ok = self.valid
        if ok.sum() < 2:
            raise StreamError("hip anchor needs at least two valid fixes")
        tq = np.clip(t_query, self.t[ok][0], self.t[ok][-1])
        return np.column_stack(
            [np.interp(tq, self.t[ok], self.pos[ok, i]) for i in range(3)]
        )


@dataclass
class RunDiagnostics:
    max_quat_norm_error: float = 0.0
    min_cov_eigenvalue: float = np.inf
    trace_violations: int = 0
    updates_applied: int = 0
    updates_skipped: int = 0
    gate_fraction: float = 0.0


@dataclass
class FilterRun:
    t: np.ndarray
    states: np.ndarray  # (N, 20) posterior state vectors
    hip: np.ndarray  # (N, 3) NED
    knee: np.ndarray
    ankle: np.ndarray
    gate_u: np.ndarray  # (N,) bool
    gate_l: np.ndarray
    diagnostics: RunDiagnostics


def hip_anchor_from_camera(camera: CameraData) -> HipAnchor:
    pos = np.array([camera.to_ned(p) for p in camera.positions["hip"]])
    return HipAnchor(camera.t.copy(), pos, camera.valid["hip"].copy())


def _validate_streams(imu_upper, imu_lower):
    if len(imu_upper) != len(imu_lower) or len(imu_upper) < 2:
        raise StreamError("IMU streams must have equal length >= 2")
    t = np.array([s.t for s in imu_upper])
    t_l = np.array([s.t for s in imu_lower])
    if np.max(np.abs(t - t_l)) > 1e-9:
        raise StreamError("IMU streams must share timestamps")
    gaps = np.diff(t)
    if np.any(gaps <= 0):
        raise StreamError("IMU timestamps must be strictly increasing")
    if np.max(gaps) > 0.5:
        raise StreamError(f"stream gap {np.max(gaps):.3f} s exceeds 0.5 s")
    return t


def run_fusion(
    imu_upper: list[ImuSample],
    imu_lower: list[ImuSample],
    cfg: FilterConfig,
    camera: CameraData | None = None,
    hip_anchor: HipAnchor | None = None,
) -> FilterRun:
    """Run the filter over aligned IMU streams, with optional camera data.

    The hip anchor positions the body (camera-derived when not supplied);
    it also re-anchors the auxiliary IMU velocity integrators, curbing the
    quadratic drift of raw accelerometer integration.
    """
    t = _validate_streams(imu_upper, imu_lower)
    n = len(t)
    if camera is None and hip_anchor is None:
        raise StreamError("positioning requires a camera track or a hip anchor")
    if hip_anchor is None:
        hip_anchor = hip_anchor_from_camera(camera)

    noise = cfg.noise
    leg = cfg.leg

    # camera frame -> nearest IMU step
    cam_at_step: dict[int, int] = {}
    if camera is not None:
        idx = np.searchsorted(t, camera.t)
        for j, ci in enumerate(idx):
            k = int(np.clip(ci, 0, n - 1))
            if k > 0 and abs(camera.t[j] - t[k - 1]) < abs(camera.t[j] - t[k]):
                k -= 1
            if abs(camera.t[j] - t[k]) <= 0.5 * np.median(np.diff(t)) + 1e-9:
                cam_at_step[k] = j

    # velocity re-anchoring: hip velocity by finite difference of the anchor
    anchor_vel_at_step: dict[int, np.ndarray] = {}
    ok = np.flatnonzero(hip_anchor.valid)
    max_gap = 5.0 * float(np.median(np.diff(hip_anchor.t))) if len(hip_anchor.t) > 1 else np.inf
    for a, b in zip(ok[:-1], ok[1:]):
        dt_fix = hip_anchor.t[b] - hip_anchor.t[a]
        if dt_fix <= 0 or dt_fix > max_gap:
            continue
        v = (hip_anchor.pos[b] - hip_anchor.pos[a]) / dt_fix
        k = int(np.argmin(np.abs(t - hip_anchor.t[b])))
        anchor_vel_at_step[k] = v

    # initialization: first gyro readings, zero bias, converged static orientation
    x = np.zeros(N_STATE)
    x[OMEGA_U] = imu_upper[0].gyro
    x[OMEGA_L] = imu_lower[0].gyro
    x[QUAT_U] = solve_static_orientation(imu_upper[0].accel, imu_upper[0].mag, cfg.fields)
    x[QUAT_L] = solve_static_orientation(imu_lower[0].accel, imu_lower[0].mag, cfg.fields)
    p0 = np.zeros(N_STATE)
    p0[OMEGA_U] = noise.r1_diag[0:3]
    p0[QUAT_U] = noise.r1_diag[3:7]
    p0[OMEGA_L] = noise.r1_diag[7:10]
    p0[QUAT_L] = noise.r1_diag[10:14]
    p0[BIAS_U] = cfg.bias_p0
    p0[BIAS_L] = cfg.bias_p0
    P = np.diag(p0)

    V_u = np.zeros(3)
    V_l = np.zeros(3)

    diag = RunDiagnostics()
    states = np.zeros((n, N_STATE))
    states[0] = x
    gate_u_log = np.zeros(n, dtype=bool)
    gate_l_log = np.zeros(n, dtype=bool)
    gates_fired = 0

    def track_update(P_before, P_after, gated: bool):
        if not gated:
            tol = 1e-9 * max(1.0, np.trace(P_before))
            if np.trace(P_after) > np.trace(P_before) + tol:
                diag.trace_violations += 1

    def track_state():
        diag.max_quat_norm_error = max(
            diag.max_quat_norm_error,
            abs(quat_norm(x[QUAT_U]) - 1.0),
            abs(quat_norm(x[QUAT_L]) - 1.0),
        )

    for k in range(1, n):
        dt = t[k] - t[k - 1]
        su, sl = imu_upper[k], imu_lower[k]

        x, P, eigmin = predict(x, P, dt, cfg)
        diag.min_cov_eigenvalue = min(diag.min_cov_eigenvalue, eigmin)

        gate_u = acceleration_gate(su, cfg.g, noise.accel_threshold)
        gate_l = acceleration_gate(sl, cfg.g, noise.accel_threshold)
        gate_u_log[k] = gate_u
        gate_l_log[k] = gate_l
        gates_fired += int(gate_u) + int(gate_l)

        if cfg.enable_rate_orientation_update:
            q_prev_u = renormalize(states[k - 1][QUAT_U])
            q_prev_l = renormalize(states[k - 1][QUAT_L])
            rate_u = quat_norm(quat_rate_from_gyro(q_prev_u, su.gyro))
            rate_l = quat_norm(quat_rate_from_gyro(q_prev_l, sl.gyro))
            q_gd_u = gradient_descent_orientation(q_prev_u, su, cfg.fields, rate_u, dt, cfg.alpha)
            q_gd_l = gradient_descent_orientation(q_prev_l, sl, cfg.fields, rate_l, dt, cfg.alpha)
            y1 = np.concatenate(
                [
                    su.gyro,
                    align_double_cover(q_gd_u, x[QUAT_U]),
                    sl.gyro,
                    align_double_cover(q_gd_l, x[QUAT_L]),
                ]
            )
            h1, H1 = rate_orientation_measurement(x, cfg.bias_sign)
            r1 = noise.r1_diag.copy()
            if gate_u:
                r1[0:7] = noise.gate_inflation
            if gate_l:
                r1[7:14] = noise.gate_inflation
            P_before = P
            x, P, applied = kalman_update(
                x, P, y1, h1, H1, np.diag(r1), cond_limit=cfg.innovation_cond_limit
            )
            if applied:
                diag.updates_applied += 1
                track_update(P_before, P, gate_u or gate_l)
            else:
                diag.updates_skipped += 1
            diag.min_cov_eigenvalue = min(
                diag.min_cov_eigenvalue, _check_covariance(P, "rate/orientation update")
            )

        # auxiliary velocities for the knee constraint
        V_u = propagate_imu_velocity(V_u, x[QUAT_U], su.accel, dt, cfg.g)
        V_l = propagate_imu_velocity(V_l, x[QUAT_L], sl.accel, dt, cfg.g)

        def knee_constraint_update(x, P):
            h2 = knee_velocity_mismatch(x, V_u, V_l, leg)
            H2 = fd_jacobian(
                lambda xx: knee_velocity_mismatch(xx, V_u, V_l, leg),
                x,
                3,
                _COLS_MEAS2,
                cfg.fd_step,
            )
            P_before = P
            x, P, applied = kalman_update(
                x, P, np.zeros(3), h2, H2, np.diag(noise.r2_diag), cond_limit=cfg.innovation_cond_limit
            )
            if applied:
                diag.updates_applied += 1
                track_update(P_before, P, False)
            else:
                diag.updates_skipped += 1
            diag.min_cov_eigenvalue = min(
                diag.min_cov_eigenvalue, _check_covariance(P, "knee constraint update")
            )
            return x, P

        def segment_vector_update(x, P):
            j = cam_at_step[k]
            upper_ok = camera.valid["hip"][j] and camera.valid["knee"][j]
            lower_ok = camera.valid["knee"][j] and camera.valid["ankle"][j]
            if not (upper_ok or lower_ok):
                return x, P
            y3 = np.zeros(6)
            if upper_ok:
                y3[0:3] = camera.positions["knee"][j] - camera.positions["hip"][j]
            if lower_ok:
                y3[3:6] = camera.positions["ankle"][j] - camera.positions["knee"][j]
            h3 = segment_vectors_camera(x, camera.rotation, leg)
            H3 = fd_jacobian(
                lambda xx: segment_vectors_camera(xx, camera.rotation, leg),
                x,
                6,
                _COLS_MEAS3,
                cfg.fd_step,
            )
            r3 = noise.r3_diag.copy()
            if not upper_ok:
                r3[0:3] = noise.gate_inflation
                y3[0:3] = h3[0:3]
            if not lower_ok:
                r3[3:6] = noise.gate_inflation
                y3[3:6] = h3[3:6]
            P_before = P
            x, P, applied = kalman_update(
                x, P, y3, h3, H3, np.diag(r3), cond_limit=cfg.innovation_cond_limit
            )
            if applied:
                diag.updates_applied += 1
                track_update(P_before, P, not (upper_ok and lower_ok))
            else:
                diag.updates_skipped += 1
            diag.min_cov_eigenvalue = min(
                diag.min_cov_eigenvalue, _check_covariance(P, "segment vector update")
            )
            return x, P

        do_knee = cfg.enable_knee_constraint_update
        do_camera = camera is not None and cfg.enable_segment_vector_update and k in cam_at_step
        order = (("camera", do_camera), ("knee", do_knee)) if cfg.swap_update_order else (
            ("knee", do_knee),
            ("camera", do_camera),
        )
        for name, enabled in order:
            if not enabled:
                continue
            x, P = knee_constraint_update(x, P) if name == "knee" else segment_vector_update(x, P)

        # re-anchor the velocity integrators from the positioning track
        if k in anchor_vel_at_step:
            v_hip = anchor_vel_at_step[k]
            q_u = renormalize(x[QUAT_U])
            q_l = renormalize(x[QUAT_L])
            arm_hip_to_imu = np.array([leg.r_u - leg.l_u, 0.0, 0.0])
            V_u = v_hip + rotate_vector(q_u, np.cross(x[OMEGA_U], arm_hip_to_imu))
            v_knee = v_hip + rotate_vector(q_u, np.cross(x[OMEGA_U], np.array([-leg.l_u, 0.0, 0.0])))
            V_l = v_knee + rotate_vector(q_l, np.cross(x[OMEGA_L], np.array([-leg.r_l, 0.0, 0.0])))

        states[k] = x
        track_state()

    diag.gate_fraction = gates_fired / (2.0 * (n - 1))

    # joint positions: hip from the positioning track, knee/ankle by the
    # segment vectors through the estimated orientations
    hip = hip_anchor.interpolated(t)
    knee = np.zeros((n, 3))
    ankle = np.zeros((n, 3))
    for k in range(n):
        q_u = renormalize(states[k][QUAT_U])
        q_l = renormalize(states[k][QUAT_L])
        knee[k] = hip[k] + rotate_vector(q_u, np.array([-leg.l_u, 0.0, 0.0]))
        ankle[k] = knee[k] + rotate_vector(q_l, np.array([-leg.l_l, 0.0, 0.0]))

    return FilterRun(
        t=t,
        states=states,
        hip=hip,
        knee=knee,
        ankle=ankle,
        gate_u=gate_u_log,
        gate_l=gate_l_log,
        diagnostics=diag,
    )
