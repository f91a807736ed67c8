"""Quaternion and 3-vector algebra shared by every module in the toolkit.

Conventions, fixed repo-wide:

- Quaternions are numpy arrays ``[w, x, y, z]`` (scalar first), Hamilton
  product, right-handed.
- An orientation quaternion ``q`` maps sensor-frame vectors into the
  navigation frame: ``v_nav = q ⊗ (0, v) ⊗ q*``.  The inverse mapping is
  the conjugate.
- The navigation frame is NED: x north, y east, z down.  Gravity is
  ``(0, 0, +g)``.  Angles are radians everywhere; degrees appear only at
  CLI boundaries.
- ``normalize`` canonicalizes the sign so ``w >= 0``; ``q`` and ``-q``
  encode the same rotation (double cover), canonicalization makes equality
  tests deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

DEGENERATE_NORM = 1e-12


class FrameMismatchError(ValueError):
    """Raised when composing frame rotations whose chain does not connect."""


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b.  Accepts non-unit inputs; norm is multiplicative."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_norm(q: np.ndarray) -> float:
    return float(np.sqrt(np.dot(q, q)))


def normalize(q: np.ndarray) -> np.ndarray:
    """Scale to unit norm and canonicalize the sign (w >= 0).

    Raises
    ------
    ValueError
        If the norm is below 1e-12; a degenerate quaternion at this point
        means an upstream filter diverged.
    """
    n = quat_norm(q)
    if n < DEGENERATE_NORM:
        raise ValueError(f"degenerate quaternion norm {n:.3e}")
    out = np.asarray(q, dtype=float) / n
    if out[0] < 0.0:
        out = -out
    return out


def renormalize(q: np.ndarray) -> np.ndarray:
    """Unit-norm rescale without sign canonicalization.

    Filter-internal: state quaternions must stay continuous across steps,
    so the w >= 0 flip is not applied here.
    """
    n = quat_norm(q)
    if n < DEGENERATE_NORM:
        raise ValueError(f"degenerate quaternion norm {n:.3e}")
    return np.asarray(q, dtype=float) / n


def rotate_vector(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate v by q: vector part of q ⊗ (0, v) ⊗ q*.

    q must be unit within 1e-6; a non-unit q here means an unnormalized
    state leaked out of a filter.
    """
    n = quat_norm(q)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"rotate_vector requires a unit quaternion, got norm {n:.9f}")
    w, x, y, z = q
    vx, vy, vz = v
    # Expanded q ⊗ (0,v) ⊗ q*; cross products written out to stay cheap.
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array(
        [
            vx + w * tx + y * tz - z * ty,
            vy + w * ty + z * tx - x * tz,
            vz + w * tz + x * ty - y * tx,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix R with R @ v == rotate_vector(q, v)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's branch selection)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < DEGENERATE_NORM:
        raise ValueError("axis must be non-zero")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle (radians) between two orientations, double-cover aware."""
    dot = min(1.0, abs(float(np.dot(normalize(a), normalize(b)))))
    return 2.0 * float(np.arccos(dot))


@dataclass(frozen=True)
class FrameRotation:
    """Rotation taking vectors expressed in ``from_frame`` into ``to_frame``."""

    from_frame: str
    to_frame: str
    q: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return rotate_vector(self.q, v)

    def inverse(self) -> "FrameRotation":
        return FrameRotation(self.to_frame, self.from_frame, quat_conjugate(self.q))


def compose_frames(outer: FrameRotation, inner: FrameRotation) -> FrameRotation:
    """Chain two frame rotations: (outer ∘ inner) maps inner.from_frame to outer.to_frame."""
    if outer.from_frame != inner.to_frame:
        raise FrameMismatchError(
            f"cannot chain {inner.from_frame}->{inner.to_frame} into "
            f"{outer.from_frame}->{outer.to_frame}"
        )
    q = normalize(quat_multiply(outer.q, inner.q))
    return FrameRotation(inner.from_frame, outer.to_frame, q)
