"""Standalone IMU orientation machinery.

Gyro quaternion kinematics, first-order gyro-bias dynamics, and the
gradient-descent accelerometer/magnetometer correction that supplies a
drift-free orientation measurement to the fusion filter.

Accelerometer convention: the synthetic accelerometer reads the gravity
direction with positive sign when static, i.e. ``a_m = R(q)ᵀ (a_lin + g_ned)``
with ``g_ned = (0, 0, +g)``.  This makes the velocity propagation
``V̇ = R(q) a_m - g_ned`` exact and keeps the static reading magnitude at g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quat import quat_multiply, quat_norm, renormalize

GRAVITY = 9.81


@dataclass(frozen=True)
class ImuSample:
    """One timestamped IMU reading in the sensor frame.

    gyro rad/s, accel m/s² (see module docstring for the sign convention),
    mag normalized field direction.
    """

    t: float
    gyro: np.ndarray
    accel: np.ndarray
    mag: np.ndarray

    def __post_init__(self):
        for name in ("gyro", "accel", "mag"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.isfinite(v).all():
                raise ValueError(f"{name} must be three finite components")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class GyroBiasModel:
    """First-order bias dynamics ḃ = -T b + T w, T = diag(1/tau)."""

    tau: np.ndarray = field(default_factory=lambda: np.full(3, 100.0))
    w_cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.shape != (3,) or np.any(tau <= 0):
            raise ValueError("bias time constants must be three positive values")
        w = np.asarray(self.w_cov, dtype=float)
        if w.shape != (3, 3) or not np.allclose(w, w.T, atol=1e-12):
            raise ValueError("w_cov must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(w)) < -1e-12:
            raise ValueError("w_cov must be positive semidefinite")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "w_cov", w)

    @property
    def T(self) -> np.ndarray:
        return np.diag(1.0 / self.tau)


@dataclass(frozen=True)
class EarthFields:
    """Reference gravity and magnetic field directions in NED."""

    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, GRAVITY]))
    mag_field: np.ndarray = field(
        default_factory=lambda: np.array([0.5, 0.0, np.sqrt(3.0) / 2.0])
    )

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=float)
        m = np.asarray(self.mag_field, dtype=float)
        if abs(np.linalg.norm(m) - 1.0) > 1e-9:
            raise ValueError("mag_field must be unit length")
        gn = np.linalg.norm(g)
        if gn < 1e-9 or np.linalg.norm(np.cross(g / gn, m)) < 1e-6:
            raise ValueError("gravity and mag_field must be non-parallel (two-vector attitude)")
        object.__setattr__(self, "gravity", g)
        object.__setattr__(self, "mag_field", m)

    @classmethod
    def with_dip(cls, dip_deg: float, g: float = GRAVITY) -> "EarthFields":
        dip = np.radians(dip_deg)
        return cls(
            gravity=np.array([0.0, 0.0, g]),
            mag_field=np.array([np.cos(dip), 0.0, np.sin(dip)]),
        )

    def gravity_direction(self) -> np.ndarray:
        return self.gravity / np.linalg.norm(self.gravity)

    def reduced_mag_reference(self) -> np.ndarray:
        """Two-component (horizontal, 0, vertical) mag reference.

        Collapsing east/north into a single horizontal component removes
        declination sensitivity: heading is measured against the horizontal
        field direction, wherever it points.
        """
        m = self.mag_field
        h = float(np.hypot(m[0], m[1]))
        out = np.array([h, 0.0, m[2]])
        return out / np.linalg.norm(out)


def quat_rate_from_gyro(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Quaternion rate ½ q ⊗ (0, ω) for sensor-frame angular velocity ω."""
    if abs(quat_norm(q) - 1.0) > 1e-6:
        raise ValueError("quat_rate_from_gyro requires a unit quaternion")
    return 0.5 * quat_multiply(q, np.array([0.0, omega[0], omega[1], omega[2]]))


def bias_rate(b: np.ndarray, model: GyroBiasModel, w: np.ndarray) -> np.ndarray:
    """Bias derivative -T b + T w."""
    inv_tau = 1.0 / model.tau
    return inv_tau * (np.asarray(w, dtype=float) - np.asarray(b, dtype=float))


def _rotated_ref_jacobian(q: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Jacobian of the vector part of q* ⊗ (0,d) ⊗ q with respect to q (3x4)."""
    w, x, y, z = q
    dx, dy, dz = d
    return 2.0 * np.array(
        [
            [dy * z - dz * y, dy * y + dz * z, -2 * dx * y + dy * x - dz * w, -2 * dx * z + dy * w + dz * x],
            [dz * x - dx * z, dx * y - 2 * dy * x + dz * w, dx * x + dz * z, -dx * w - 2 * dy * z + dz * y],
            [dx * y - dy * x, dx * z - dy * w - 2 * dz * x, dx * w + dy * z - 2 * dz * y, dx * x + dy * y],
        ]
    )


def _rotate_by_conjugate(q: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Vector part of q* ⊗ (0,d) ⊗ q (navigation vector seen in the sensor frame)."""
    w, x, y, z = q
    dx, dy, dz = d
    tx = 2.0 * (z * dy - y * dz)
    ty = 2.0 * (x * dz - z * dx)
    tz = 2.0 * (y * dx - x * dy)
    return np.array(
        [
            dx + w * tx + z * ty - y * tz,
            dy + w * ty + x * tz - z * tx,
            dz + w * tz + y * tx - x * ty,
        ]
    )


def field_objective(
    q: np.ndarray, accel: np.ndarray, mag: np.ndarray, fields: EarthFields
) -> np.ndarray:
    """Stacked gravity and magnetic alignment error (6,).

    Both measured vectors are normalized; the objective is the mismatch
    between each navigation reference seen through q and its sensor-frame
    measurement.
    """
    an = np.linalg.norm(accel)
    mn = np.linalg.norm(mag)
    if an < 1e-12 or mn < 1e-12:
        raise ValueError("accel and mag must be non-zero for the field objective")
    a_hat = np.asarray(accel, dtype=float) / an
    m_hat = np.asarray(mag, dtype=float) / mn
    f_g = _rotate_by_conjugate(q, fields.gravity_direction()) - a_hat
    f_b = _rotate_by_conjugate(q, fields.reduced_mag_reference()) - m_hat
    return np.concatenate([f_g, f_b])


def field_objective_jacobian(q: np.ndarray, fields: EarthFields) -> np.ndarray:
    """Analytic Jacobian (6x4) of field_objective with respect to q."""
    return np.vstack(
        [
            _rotated_ref_jacobian(q, fields.gravity_direction()),
            _rotated_ref_jacobian(q, fields.reduced_mag_reference()),
        ]
    )


def gradient_step(
    q_prev: np.ndarray,
    accel: np.ndarray,
    mag: np.ndarray,
    fields: EarthFields,
    mu: float,
) -> np.ndarray:
    """One normalized-gradient descent step of size mu on the field objective."""
    f = field_objective(q_prev, accel, mag, fields)
    grad = field_objective_jacobian(q_prev, fields).T @ f
    gn = np.linalg.norm(grad)
    if gn < 1e-12:
        return np.asarray(q_prev, dtype=float)
    return renormalize(q_prev - mu * grad / gn)


def gradient_descent_orientation(
    q_prev: np.ndarray,
    sample: ImuSample,
    fields: EarthFields,
    gyro_rate_norm: float,
    dt: float,
    alpha: float = 5.0,
) -> np.ndarray:
    """Drift-free orientation measurement from one accel/mag sample.

    The step size alpha * gyro_rate_norm * dt tracks the physical rate of
    orientation change, so the correction cannot overshoot the motion it is
    correcting; alpha > 1 covers sensor noise headroom.
    """
    if alpha <= 1.0:
        raise ValueError("alpha must exceed 1")
    mu = alpha * gyro_rate_norm * dt
    return gradient_step(q_prev, sample.accel, sample.mag, fields, mu)


def solve_static_orientation(
    accel: np.ndarray,
    mag: np.ndarray,
    fields: EarthFields,
    q0: np.ndarray | None = None,
    max_iter: int = 500,
    tol: float = 1e-12,
) -> np.ndarray:
    """Iterate the gradient correction to convergence for a static posture.

    Used to seed filters before any gyro information exists.  Step size
    adapts: grow on improvement, halve on overshoot.
    """
    q = np.array([1.0, 0.0, 0.0, 0.0]) if q0 is None else renormalize(q0)
    mu = 0.2
    f = field_objective(q, accel, mag, fields)
    cost = float(f @ f)
    for _ in range(max_iter):
        grad = field_objective_jacobian(q, fields).T @ f
        gn = np.linalg.norm(grad)
        if gn < tol or mu < 1e-12:
            break
        cand = renormalize(q - mu * grad / gn)
        f_cand = field_objective(cand, accel, mag, fields)
        cost_cand = float(f_cand @ f_cand)
        if cost_cand < cost:
            q, f, cost = cand, f_cand, cost_cand
            mu = min(mu * 1.2, 0.2)
        else:
            mu *= 0.5
    return q


def acceleration_gate(sample: ImuSample, g: float = GRAVITY, threshold: float = 0.2) -> bool:
    """True when motion acceleration contaminates the gravity measurement.

    Literal rule: gate fires iff ``||accel|| - g > threshold``.  As written
    this does not fire in free fall (||a|| << g); kept literal on purpose,
    see README notes.
    """
    return float(np.linalg.norm(sample.accel)) - g > threshold
