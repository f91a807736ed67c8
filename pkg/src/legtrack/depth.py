"""Joint depth from marker geometry, fused per joint by a small Kalman filter.

Two pinhole inversions estimate camera-axis distance: marker pixel area
against known marker side, and inter-marker pixel distance against known
segment length.  The distance-based stream drives the filter's prediction
(its frame-to-frame increment is the system model input); the area-based
stream is the measurement.  Back-projection turns pixel + fused depth into
camera-frame 3D positions.

Both estimators assume the camera optical axis is perpendicular to the leg
plane; out-of-plane lean biases the distance-based depth high and no tilt
compensation is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vision import JOINTS, MarkerObservation


class InvalidObservationError(ValueError):
    """Raised for geometrically impossible marker observations."""


@dataclass(frozen=True)
class CameraModel:
    focal_px: float = 600.0
    width: int = 640
    height: int = 480
    marker_side_m: float = 0.05
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")
        if self.marker_side_m <= 0:
            raise ValueError("marker_side_m must be positive")
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)


@dataclass(frozen=True)
class DepthEstimate:
    z: float
    var: float
    source: str  # area | distance | fused

    def __post_init__(self):
        if self.z <= 0 or self.var <= 0:
            raise ValueError("depth estimates must have positive z and var")


def depth_from_area(area_px: float, cam: CameraModel, min_area: float = 1.0) -> DepthEstimate:
    """Depth from apparent marker area: z = focal * side / sqrt(area).

    Variance from first-order propagation of a half-pixel side uncertainty.
    """
    if area_px < min_area:
        raise InvalidObservationError(f"marker area {area_px} below minimum {min_area}")
    side_px = float(np.sqrt(area_px))
    z = cam.focal_px * cam.marker_side_m / side_px
    sigma = z / side_px * 0.5
    return DepthEstimate(z, sigma * sigma, "area")


def depth_from_distance(
    pixel_a, pixel_b, real_dist_m: float, cam: CameraModel
) -> DepthEstimate:
    """Depth from inter-marker pixel distance against the real segment length."""
    d = float(np.hypot(pixel_a[0] - pixel_b[0], pixel_a[1] - pixel_b[1]))
    if d <= 1.0:
        raise InvalidObservationError(f"degenerate pixel distance {d:.3f}")
    if real_dist_m <= 0:
        raise InvalidObservationError("real distance must be positive")
    z = cam.focal_px * real_dist_m / d
    sigma = z / d * np.sqrt(0.5)  # half-pixel jitter on each endpoint
    return DepthEstimate(z, sigma * sigma, "distance")


def backproject(pixel, z: float, cam: CameraModel) -> np.ndarray:
    """Pixel + depth to camera-frame meters (+Z along the optical axis)."""
    if z <= 0:
        raise InvalidObservationError("depth must be positive")
    u, v = pixel
    return np.array([(u - cam.cx) * z / cam.focal_px, (v - cam.cy) * z / cam.focal_px, z])


def project(point_c: np.ndarray, cam: CameraModel) -> tuple:
    """Camera-frame meters to pixel coordinates; inverse of backproject."""
    X, Y, Z = point_c
    if Z <= 0:
        raise InvalidObservationError("point behind the camera")
    return (cam.cx + cam.focal_px * X / Z, cam.cy + cam.focal_px * Y / Z)


class DepthFuser:
    """Per-joint depth filter.

    The distance-based stream plays the system-model role: each frame its
    estimation noise is carried as a fresh nuisance state next to the depth,
    and the reported distance value constrains depth-plus-noise exactly.
    Equivalently the prediction follows the distance increments, but the
    differenced noise stays consistently weighted instead of being treated
    as white (which would pin the fused error to the distance source's own
    floor).  The area-based stream is the measurement proper.

    State: [depth z, current distance-noise n]; the depth itself random-walks
    with motion_var_per_frame.
    """

    def __init__(self, motion_var_per_frame: float = 4e-6):
        self.q_motion = motion_var_per_frame
        self.m: np.ndarray | None = None  # [z, n]
        self.P: np.ndarray | None = None

    @property
    def initialized(self) -> bool:
        return self.m is not None

    def _update(self, y: float, H: np.ndarray, r: float):
        s = float(H @ self.P @ H) + r
        K = (self.P @ H) / s
        self.m = self.m + K * (y - float(H @ self.m))
        self.P = self.P - np.outer(K, H @ self.P)
        self.P = 0.5 * (self.P + self.P.T)

    def step(
        self, distance: DepthEstimate | None, area: DepthEstimate | None
    ) -> tuple[DepthEstimate | None, bool]:
        """Advance one frame; returns (fused estimate, any-source-valid flag)."""
        if not self.initialized:
            if distance is not None:
                # depth error (+n) and noise-state error (-n) anti-correlate
                self.m = np.array([distance.z, 0.0])
                self.P = np.array(
                    [[distance.var, -distance.var], [-distance.var, distance.var]]
                )
            elif area is not None:
                self.m = np.array([area.z, 0.0])
                self.P = np.diag([area.var, 0.0])
            else:
                return None, False
            if area is not None:
                self._update(area.z, np.array([1.0, 0.0]), area.var)
            return DepthEstimate(float(self.m[0]), float(self.P[0, 0]), "fused"), True

        # time update: depth random-walks, stale distance noise is dropped
        self.m[1] = 0.0
        self.P[0, 0] += self.q_motion
        self.P[0, 1] = self.P[1, 0] = 0.0
        self.P[1, 1] = 0.0
        if distance is not None:
            self.P[1, 1] = distance.var
            self._update(distance.z, np.array([1.0, 1.0]), 0.0)
        if area is not None:
            self._update(area.z, np.array([1.0, 0.0]), area.var)
        valid = distance is not None or area is not None
        z = float(self.m[0])
        var = float(self.P[0, 0])
        if z <= 0:
            # depth cannot be negative; a collapsed estimate means garbage input
            raise InvalidObservationError("fused depth collapsed to non-positive value")
        return DepthEstimate(z, var, "fused"), valid


@dataclass(frozen=True)
class Joint3D:
    t: float
    joint: str
    position: np.ndarray  # camera frame, meters
    valid: bool


def fuse_joint_depths(
    frames: list[list[MarkerObservation]],
    cam: CameraModel,
    upper_length_m: float,
    lower_length_m: float,
    min_area: float = 9.0,
    motion_var_per_frame: float = 4e-6,
) -> list[list[Joint3D]]:
    """Per-frame camera-frame 3D joint positions from marker observations.

    Hip depth uses the hip-knee pixel distance, ankle the knee-ankle one,
    knee the mean of both; each joint's own marker area feeds its area
    estimate.  A joint's 3D output is valid only when its own pixel is.
    """
    fusers = {j: DepthFuser(motion_var_per_frame) for j in JOINTS}
    segment = {"hip": ("knee", upper_length_m), "ankle": ("knee", lower_length_m)}
    out: list[list[Joint3D]] = []
    for obs in frames:
        by_joint = {o.joint: o for o in obs}
        t = obs[0].t
        dist_est: dict[str, DepthEstimate | None] = {}
        for j in ("hip", "ankle"):
            other, length = segment[j]
            a, b = by_joint[j], by_joint[other]
            if a.valid and b.valid:
                try:
                    dist_est[j] = depth_from_distance(a.pixel, b.pixel, length, cam)
                except InvalidObservationError:
                    dist_est[j] = None
            else:
                dist_est[j] = None
        hk, ka = dist_est["hip"], dist_est["ankle"]
        if hk is not None and ka is not None:
            dist_est["knee"] = DepthEstimate(
                0.5 * (hk.z + ka.z), 0.25 * (hk.var + ka.var), "distance"
            )
        else:
            dist_est["knee"] = hk if hk is not None else ka

        row = []
        for j in JOINTS:
            o = by_joint[j]
            area_est = None
            if o.valid and o.area_px >= min_area:
                area_est = depth_from_area(o.area_px, cam, min_area)
            fused, src_valid = fusers[j].step(dist_est[j], area_est)
            if fused is not None and o.valid:
                pos = backproject(o.pixel, fused.z, cam)
                row.append(Joint3D(t, j, pos, src_valid))
            elif fused is not None:
                # depth carried by prediction but no pixel to anchor it
                row.append(Joint3D(t, j, np.array([0.0, 0.0, fused.z]), False))
            else:
                row.append(Joint3D(t, j, np.zeros(3), False))
        out.append(row)
    return out
