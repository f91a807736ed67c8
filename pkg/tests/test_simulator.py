import numpy as np
import pytest

from legtrack.depth import CameraModel
from legtrack.ekf import LegModel, knee_velocity_mismatch
from legtrack.imu import EarthFields
from legtrack.quat import quat_conjugate, quat_multiply, quat_norm
from legtrack.simulator import (
    GaitProfile,
    SensorNoiseSpec,
    generate_truth,
    side_view_camera,
    synthesize_imu,
    synthesize_markers,
)
from legtrack.vision import detect_frame, read_ppm, frame_path

from oracles import rk4_quat_step

LEG = LegModel(l_u=0.4, l_l=0.4, r_u=0.2, r_l=0.2)
FIELDS = EarthFields.with_dip(60.0)


class TestGenerateTruth:
    def test_static_profile_is_constant(self):
        truth = generate_truth(GaitProfile.preset("static"), 100.0, LEG)
        assert np.ptp(truth.hip, axis=0).max() < 1e-12
        assert np.ptp(truth.knee, axis=0).max() < 1e-12
        assert np.abs(truth.omega_u).max() < 1e-12
        assert np.ptp(truth.q_u, axis=0).max() < 1e-12

    def test_rigid_link_lengths(self):
        truth = generate_truth(GaitProfile.preset("walk", duration_s=10.0), 100.0, LEG)
        d_uk = np.linalg.norm(truth.knee - truth.hip, axis=1)
        d_ka = np.linalg.norm(truth.ankle - truth.knee, axis=1)
        np.testing.assert_allclose(d_uk, LEG.l_u, atol=1e-12)
        np.testing.assert_allclose(d_ka, LEG.l_l, atol=1e-12)

    def test_analytic_rate_matches_quaternion_difference(self):
        truth = generate_truth(GaitProfile.preset("walk", duration_s=2.0), 1000.0, LEG)
        h = truth.t[1] - truth.t[0]
        worst = 0.0
        for k in range(1, len(truth.t) - 1, 7):
            dq = (truth.q_u[k + 1] - truth.q_u[k - 1]) / (2.0 * h)
            omega_quat = 2.0 * quat_multiply(quat_conjugate(truth.q_u[k]), dq)
            worst = max(worst, np.abs(omega_quat[1:] - truth.omega_u[k]).max())
        assert worst < 1e-4

    def test_knee_constraint_holds_on_truth(self):
        truth = generate_truth(GaitProfile.preset("walk", duration_s=8.0), 100.0, LEG)
        worst = 0.0
        for k in range(0, len(truth.t), 13):
            x = np.zeros(20)
            x[0:3] = truth.omega_u[k]
            x[6:10] = truth.q_u[k]
            x[10:13] = truth.omega_l[k]
            x[16:20] = truth.q_l[k]
            resid = knee_velocity_mismatch(x, truth.v_imu_u[k], truth.v_imu_l[k], LEG)
            worst = max(worst, float(np.linalg.norm(resid)))
        assert worst < 1e-6

    def test_quaternions_unit(self):
        truth = generate_truth(GaitProfile.preset("run_in_place", duration_s=5.0), 100.0, LEG)
        for q in truth.q_u[::17]:
            assert abs(quat_norm(q) - 1.0) < 1e-12


class TestSynthesizeImu:
    def test_static_zero_noise(self):
        truth = generate_truth(GaitProfile.preset("static"), 100.0, LEG)
        rng = np.random.default_rng(0)
        upper, lower = synthesize_imu(truth, SensorNoiseSpec.noise_free(), FIELDS, rng)
        for s in (upper[50], lower[200]):
            assert np.linalg.norm(s.gyro) < 1e-12
            assert abs(np.linalg.norm(s.accel) - 9.81) < 1e-9
            assert abs(np.linalg.norm(s.mag) - 1.0) < 1e-12

    def test_zero_noise_gyro_round_trip(self):
        # integrating the synthesized gyro must recover the truth orientation
        truth = generate_truth(GaitProfile.preset("walk", duration_s=10.0), 100.0, LEG)
        rng = np.random.default_rng(1)
        upper, _ = synthesize_imu(truth, SensorNoiseSpec.noise_free(), FIELDS, rng)
        q = truth.q_u[0].copy()
        dt = truth.t[1] - truth.t[0]
        for k in range(len(truth.t) - 1):
            w0 = upper[k].gyro
            w1 = upper[k + 1].gyro
            q = rk4_quat_step(q, lambda tt, a=w0, b=w1: a + (b - a) * tt / dt, 0.0, dt)
            q = q / np.linalg.norm(q)
        dot = min(1.0, abs(float(np.dot(q, truth.q_u[-1]))))
        err_deg = np.degrees(2.0 * np.arccos(dot))
        assert err_deg < 0.1

    def test_gate_regimes(self):
        rng = np.random.default_rng(2)
        for kind, check in (("walk", lambda f: f < 0.30), ("run_in_place", lambda f: f > 0.60)):
            truth = generate_truth(GaitProfile.preset(kind), 100.0, LEG)
            upper, lower = synthesize_imu(truth, SensorNoiseSpec(), FIELDS, rng)
            fired = 0
            total = 0
            for stream in (upper, lower):
                for s in stream:
                    fired += int(np.linalg.norm(s.accel) - 9.81 > 0.2)
                    total += 1
            assert check(fired / total), f"{kind}: gate fraction {fired / total:.2f}"

    def test_deterministic_given_seed(self):
        truth = generate_truth(GaitProfile.preset("walk", duration_s=3.0), 100.0, LEG)
        a, _ = synthesize_imu(truth, SensorNoiseSpec(), FIELDS, np.random.default_rng(7))
        b, _ = synthesize_imu(truth, SensorNoiseSpec(), FIELDS, np.random.default_rng(7))
        for sa, sb in zip(a[::50], b[::50]):
            np.testing.assert_array_equal(sa.gyro, sb.gyro)
            np.testing.assert_array_equal(sa.accel, sb.accel)


class TestSynthesizeMarkers:
    CAM = CameraModel()

    def test_pinhole_example(self):
        # hip placed on the optical axis at exactly 2 m depth
        rot, pos = side_view_camera(distance_east_m=2.0, height_m=0.85)
        profile = GaitProfile.preset("static", duration_s=2.0)
        truth = generate_truth(profile, 100.0, LEG)
        rng = np.random.default_rng(3)
        t_cam, frames = synthesize_markers(
            truth, self.CAM, rot, pos, SensorNoiseSpec.noise_free(), rng
        )
        hip = frames[0][0]
        assert hip.joint == "hip"
        assert hip.pixel[0] == pytest.approx(320.0, abs=1e-9)
        assert hip.pixel[1] == pytest.approx(240.0, abs=1e-9)
        assert hip.area_px == pytest.approx(225.0, abs=1e-6)

    def test_no_dropout_all_valid(self):
        rot, pos = side_view_camera()
        truth = generate_truth(GaitProfile.preset("walk", duration_s=5.0), 100.0, LEG)
        rng = np.random.default_rng(4)
        _, frames = synthesize_markers(truth, self.CAM, rot, pos, SensorNoiseSpec.noise_free(), rng)
        assert all(o.valid for frame in frames for o in frame)

    def test_dropout_fraction(self):
        rot, pos = side_view_camera()
        truth = generate_truth(GaitProfile.preset("walk", duration_s=30.0), 100.0, LEG)
        spec = SensorNoiseSpec(marker_dropout_prob=0.2)
        rng = np.random.default_rng(5)
        _, frames = synthesize_markers(truth, self.CAM, rot, pos, spec, rng)
        invalid = sum(not o.valid for frame in frames for o in frame)
        total = sum(len(frame) for frame in frames)
        assert 0.12 < invalid / total < 0.28

    def test_frames_mode_matches_blob_mode(self, tmp_path):
        rot, pos = side_view_camera()
        truth = generate_truth(GaitProfile.preset("walk", duration_s=1.0), 100.0, LEG)
        spec = SensorNoiseSpec.noise_free()
        _, blob_frames = synthesize_markers(
            truth, self.CAM, rot, pos, spec, np.random.default_rng(6)
        )
        _, _ = synthesize_markers(
            truth,
            self.CAM,
            rot,
            pos,
            spec,
            np.random.default_rng(6),
            mode="frames",
            frames_dir=tmp_path,
        )
        prev = None
        for j in range(5):
            img = read_ppm(frame_path(tmp_path, j))
            obs = detect_frame(img, (0, 200, 0), t=blob_frames[j][0].t, prev=prev)
            prev = obs
            for o_vision, o_blob in zip(obs, blob_frames[j]):
                assert o_vision.valid
                assert abs(o_vision.pixel[0] - o_blob.pixel[0]) < 0.5
                assert abs(o_vision.pixel[1] - o_blob.pixel[1]) < 0.5
