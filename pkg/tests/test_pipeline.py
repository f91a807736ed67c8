import numpy as np
import pytest

from legtrack.cli import main as cli_main
from legtrack.csvio import EstimateTrack, read_estimate_csv, read_marker_csv
from legtrack.depth import Joint3D
from legtrack.pipeline import (
    ConfigError,
    config_from_dict,
    dump_toml,
    effective_dict,
    evaluate_tracks,
    interpolate_missing,
    load_config,
    run_tracking,
    simulate,
)
from legtrack.simulator import GaitProfile, generate_truth
from legtrack.ekf import LegModel

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict({})
        assert cfg.scenario == "walk"
        assert cfg.sensor_noise.marker_dropout_prob == 0.03  # walk preset
        assert cfg.filter.noise.r2_diag[0] == 1e-4

    def test_scenario_presets(self):
        cfg = config_from_dict({"run": {"scenario": "run_in_place"}})
        assert cfg.gait.kind == "run_in_place"
        assert cfg.gait.duration_s == 25.0
        assert cfg.sensor_noise.marker_dropout_prob == 0.05

    def test_gait_override(self):
        cfg = config_from_dict({"gait": {"duration_s": 5.0}})
        assert cfg.gait.duration_s == 5.0
        assert cfg.gait.kind == "walk"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"nonsense": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"run": {"sceario": "walk"}})
        with pytest.raises(ConfigError):
            config_from_dict({"gait": {"hip_amplitude": 10}})

    def test_filter_arrays(self):
        cfg = config_from_dict({"filter": {"r2_diag": [1e-3, 1e-3, 1e-3]}})
        np.testing.assert_allclose(cfg.filter.noise.r2_diag, 1e-3)
        with pytest.raises(ConfigError):
            config_from_dict({"filter": {"r2_diag": [1e-3]}})

    def test_round_trip(self, tmp_path):
        cfg = config_from_dict({"run": {"seed": 99}, "gait": {"duration_s": 4.0}})
        text = dump_toml(effective_dict(cfg))
        path = tmp_path / "cfg.toml"
        path.write_text(text)
        cfg2 = load_config(path)
        assert effective_dict(cfg2) == effective_dict(cfg)
        # and the dump itself is valid TOML
        tomllib.loads(text)


def j3(t, joint, xyz, valid=True):
    return Joint3D(t, joint, np.asarray(xyz, dtype=float), valid)


class TestInterpolateMissing:
    def test_paper_rule_knee_missing(self):
        frame = [
            j3(0.0, "hip", [0.1, -0.2, 2.4]),
            j3(0.0, "knee", [0.0, 0.0, 0.0], valid=False),
            j3(0.0, "ankle", [0.12, 0.3, 2.6]),
        ]
        out = interpolate_missing([frame], "zero_fill")[0]
        knee = out[1]
        assert not knee.valid
        np.testing.assert_allclose(knee.position, [0.0, 0.0, 2.5])

    def test_paper_rule_all_missing(self):
        frame = [j3(0.0, j, [1.0, 1.0, 2.0], valid=False) for j in ("hip", "knee", "ankle")]
        out = interpolate_missing([frame], "zero_fill")[0]
        for joint in out:
            np.testing.assert_allclose(joint.position, [0.0, 0.0, 0.0])

    def test_all_valid_identity(self):
        frame = [
            j3(0.0, "hip", [0.1, -0.2, 2.4]),
            j3(0.0, "knee", [0.1, 0.1, 2.5]),
            j3(0.0, "ankle", [0.12, 0.3, 2.6]),
        ]
        out = interpolate_missing([frame], "zero_fill")[0]
        for a, b in zip(out, frame):
            np.testing.assert_array_equal(a.position, b.position)
            assert a.valid == b.valid

    def test_linear_policy(self):
        frames = [
            [j3(0.0, "hip", [0, 0, 2.0]), j3(0.0, "knee", [0, 0, 2.0]), j3(0.0, "ankle", [0, 0, 2.0])],
            [
                j3(1.0, "hip", [0, 0, 2.2]),
                j3(1.0, "knee", [9, 9, 9], valid=False),
                j3(1.0, "ankle", [0, 0, 2.2]),
            ],
            [j3(2.0, "hip", [0, 0, 2.4]), j3(2.0, "knee", [0, 0, 2.4]), j3(2.0, "ankle", [0, 0, 2.4])],
        ]
        out = interpolate_missing(frames, "linear")
        np.testing.assert_allclose(out[1][1].position, [0, 0, 2.2])
        assert not out[1][1].valid  # fill bookkeeping retained

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            interpolate_missing([], "quadratic")


def truth_as_estimate(truth, offset=np.zeros(3)):
    n = len(truth.t)
    quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
    z3 = np.zeros((n, 3))
    flags = np.zeros(n, dtype=bool)
    return EstimateTrack(
        t=truth.t.copy(),
        q_u=quat.copy(),
        q_l=quat.copy(),
        bias_u=z3.copy(),
        bias_l=z3.copy(),
        hip=truth.hip + offset,
        knee=truth.knee + offset,
        ankle=truth.ankle + offset,
        gate_u=flags.copy(),
        gate_l=flags.copy(),
    )


class TestEvaluate:
    TRUTH = generate_truth(GaitProfile.preset("walk", duration_s=5.0), 100.0, LegModel())

    def test_exact_estimate_zero_rmse(self):
        rep = evaluate_tracks(truth_as_estimate(self.TRUTH), self.TRUTH, "fused")
        assert rep.overall["euclid"] == 0.0
        for joint in rep.per_joint.values():
            assert joint["euclid"] == 0.0

    def test_constant_offset(self):
        rep = evaluate_tracks(
            truth_as_estimate(self.TRUTH, offset=np.array([0.01, 0.0, 0.0])), self.TRUTH
        )
        assert rep.overall["x"] == pytest.approx(1.0, abs=1e-9)
        assert rep.overall["y"] == pytest.approx(0.0, abs=1e-9)
        assert rep.overall["euclid"] == pytest.approx(1.0, abs=1e-9)

    def test_euclid_dominates_axes(self):
        rng = np.random.default_rng(70)
        est = truth_as_estimate(self.TRUTH)
        est.hip += rng.normal(scale=0.01, size=est.hip.shape)
        est.knee += rng.normal(scale=0.02, size=est.knee.shape)
        rep = evaluate_tracks(est, self.TRUTH)
        for row in list(rep.per_joint.values()) + [rep.overall]:
            assert row["euclid"] >= max(row["x"], row["y"], row["z"]) - 1e-12

    def test_span_mismatch_rejected(self):
        est = truth_as_estimate(self.TRUTH)
        short = EstimateTrack(
            t=est.t[:300],
            q_u=est.q_u[:300],
            q_l=est.q_l[:300],
            bias_u=est.bias_u[:300],
            bias_l=est.bias_l[:300],
            hip=est.hip[:300],
            knee=est.knee[:300],
            ankle=est.ankle[:300],
            gate_u=est.gate_u[:300],
            gate_l=est.gate_l[:300],
        )
        with pytest.raises(ValueError):
            evaluate_tracks(short, self.TRUTH)


SMALL_DOC = {
    "run": {"seed": 3},
    "gait": {"duration_s": 4.0},
}


class TestStages:
    def test_simulate_writes_products(self, tmp_path):
        cfg = config_from_dict(SMALL_DOC)
        simulate(cfg, tmp_path)
        for name in ("imu_upper.csv", "imu_lower.csv", "markers.csv", "truth.csv", "effective_config.toml"):
            assert (tmp_path / name).exists(), name

    def test_track_variants_share_inputs(self, tmp_path):
        cfg = config_from_dict(SMALL_DOC)
        simulate(cfg, tmp_path)
        imu_lines = (tmp_path / "imu_upper.csv").read_bytes()
        ests = {v: run_tracking(cfg, tmp_path, v) for v in ("fused", "imu-only", "camera-only")}
        assert (tmp_path / "imu_upper.csv").read_bytes() == imu_lines  # inputs untouched
        n = len(ests["fused"].t)
        assert all(len(e.t) == n for e in ests.values())

    def test_frames_mode_round_trip(self, tmp_path):
        doc = {
            "run": {"seed": 3},
            "gait": {"duration_s": 1.5},
            "pipeline": {"camera_mode": "frames"},
            "sensor_noise": {"marker_dropout_prob": 0.0, "pixel_jitter_sigma": 0.0},
        }
        cfg = config_from_dict(doc)
        simulate(cfg, tmp_path)
        assert (tmp_path / "frames").is_dir()
        est = run_tracking(cfg, tmp_path, "camera-only")
        assert (tmp_path / "markers.csv").exists()
        markers = read_marker_csv(tmp_path / "markers.csv")
        assert all(o.valid for frame in markers for o in frame)


class TestCli:
    def test_simulate_track_evaluate(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text('[run]\nseed = 5\n[gait]\nduration_s = 4.0\n')
        data = tmp_path / "data"
        assert cli_main(["simulate", "--config", str(cfg_path), "--out", str(data)]) == 0
        assert cli_main(["track", "--config", str(cfg_path), "--data", str(data), "--fused"]) == 0
        est_path = data / "estimate_fused.csv"
        assert est_path.exists()
        est = read_estimate_csv(est_path)
        n_imu = sum(1 for ln in (data / "imu_upper.csv").read_text().splitlines()[2:] if ln)
        assert len(est.t) == n_imu
        assert (
            cli_main(
                [
                    "evaluate",
                    "--est",
                    str(est_path),
                    "--truth",
                    str(data / "truth.csv"),
                    "--out-prefix",
                    str(tmp_path / "report"),
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "Euclidean" in out
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "report.csv").exists()

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[run]\nscenario = 'moonwalk'\n")
        assert cli_main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2

    def test_io_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text("[run]\nseed = 5\n")
        rc = cli_main(["track", "--config", str(cfg_path), "--data", str(tmp_path / "nope"), "--fused"])
        assert rc == 3
