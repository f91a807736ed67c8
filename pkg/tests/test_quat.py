import numpy as np
import pytest

from legtrack.quat import (
    IDENTITY,
    FrameMismatchError,
    FrameRotation,
    compose_frames,
    normalize,
    quat_angle,
    quat_conjugate,
    quat_from_axis_angle,
    quat_from_matrix,
    quat_multiply,
    quat_to_matrix,
    rotate_vector,
)

from oracles import random_unit_quat, rotation_matrix

QI = np.array([0.0, 1.0, 0.0, 0.0])
QJ = np.array([0.0, 0.0, 1.0, 0.0])
QK = np.array([0.0, 0.0, 0.0, 1.0])


class TestMultiply:
    def test_identity(self):
        rng = np.random.default_rng(1)
        q = random_unit_quat(rng)
        np.testing.assert_allclose(quat_multiply(IDENTITY, q), q, atol=1e-15)

    def test_basis_algebra(self):
        np.testing.assert_allclose(quat_multiply(QI, QJ), QK, atol=1e-15)

    def test_noncommutative_witness(self):
        np.testing.assert_allclose(quat_multiply(QI, QJ), -quat_multiply(QJ, QI), atol=1e-15)

    def test_norm_multiplicative(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = rng.normal(size=4) * 3.0
            b = rng.normal(size=4) * 3.0
            ab = quat_multiply(a, b)
            assert abs(np.linalg.norm(ab) - np.linalg.norm(a) * np.linalg.norm(b)) < 1e-12 * max(
                1.0, np.linalg.norm(a) * np.linalg.norm(b)
            )

    def test_matches_rotation_matrix_composition(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a = random_unit_quat(rng)
            b = random_unit_quat(rng)
            R_prod = rotation_matrix(quat_multiply(a, b))
            R_ref = rotation_matrix(a) @ rotation_matrix(b)
            np.testing.assert_allclose(R_prod, R_ref, atol=1e-10)

    def test_associativity(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b, c = (random_unit_quat(rng) for _ in range(3))
            lhs = quat_multiply(quat_multiply(a, b), c)
            rhs = quat_multiply(a, quat_multiply(b, c))
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestRotateVector:
    def test_identity(self):
        v = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(rotate_vector(IDENTITY, v), v, atol=1e-15)

    def test_quarter_turn_about_z(self):
        q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
        np.testing.assert_allclose(
            rotate_vector(q, np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-12
        )

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            q = random_unit_quat(rng)
            v = rng.normal(size=3) * 2.0
            np.testing.assert_allclose(rotate_vector(q, v), rotation_matrix(q) @ v, atol=1e-10)

    def test_preserves_norm(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            q = random_unit_quat(rng)
            v = rng.normal(size=3)
            assert abs(np.linalg.norm(rotate_vector(q, v)) - np.linalg.norm(v)) < 1e-10

    def test_double_cover(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            q = random_unit_quat(rng)
            v = rng.normal(size=3)
            np.testing.assert_allclose(rotate_vector(q, v), rotate_vector(-q, v), atol=1e-12)

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            rotate_vector(np.array([1.0, 0.1, 0.0, 0.0]), np.zeros(3))


class TestNormalize:
    def test_simple_scale(self):
        np.testing.assert_allclose(
            normalize(np.array([2.0, 0.0, 0.0, 0.0])), IDENTITY, atol=1e-15
        )

    def test_unit_unchanged(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            q = random_unit_quat(rng)
            if q[0] < 0:
                q = -q
            np.testing.assert_allclose(normalize(q), q, atol=1e-15)

    def test_random_properties(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            q = rng.normal(size=4) * 5.0
            if np.linalg.norm(q) < 1e-6:
                continue
            n = normalize(q)
            assert abs(np.linalg.norm(n) - 1.0) < 1e-15
            # direction preserved: vector parts stay parallel
            assert np.linalg.norm(np.cross(n[1:], q[1:] / np.linalg.norm(q))) < 1e-12
            assert n[0] >= 0.0

    def test_degenerate_raises(self):
        with pytest.raises(ValueError):
            normalize(np.array([1e-13, 0.0, 0.0, 0.0]))


class TestFrames:
    @staticmethod
    def _frame(rng, a, b):
        return FrameRotation(a, b, random_unit_quat(rng))

    def test_identity_outer(self):
        rng = np.random.default_rng(10)
        inner = FrameRotation("sensor", "ned", random_unit_quat(rng))
        outer = FrameRotation("ned", "vicon", IDENTITY.copy())
        out = compose_frames(outer, inner)
        assert out.from_frame == "sensor" and out.to_frame == "vicon"
        assert quat_angle(out.q, inner.q) < 1e-12

    def test_inverse_composes_to_identity(self):
        rng = np.random.default_rng(11)
        fr = FrameRotation("a", "b", random_unit_quat(rng))
        out = compose_frames(fr.inverse(), fr)
        assert quat_angle(out.q, IDENTITY) < 1e-9

    def test_chain_matches_matrix_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            f1 = self._frame(rng, "a", "b")
            f2 = self._frame(rng, "b", "c")
            f3 = self._frame(rng, "c", "d")
            chained = compose_frames(f3, compose_frames(f2, f1))
            R_ref = rotation_matrix(f3.q) @ rotation_matrix(f2.q) @ rotation_matrix(f1.q)
            np.testing.assert_allclose(rotation_matrix(chained.q), R_ref, atol=1e-9)

    def test_mismatch_raises(self):
        rng = np.random.default_rng(13)
        with pytest.raises(FrameMismatchError):
            compose_frames(self._frame(rng, "x", "y"), self._frame(rng, "a", "b"))


class TestMatrixConversions:
    def test_round_trip(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            q = random_unit_quat(rng)
            if q[0] < 0:
                q = -q
            q2 = quat_from_matrix(quat_to_matrix(q))
            np.testing.assert_allclose(q2, q, atol=1e-9)

    def test_to_matrix_matches_oracle(self):
        rng = np.random.default_rng(15)
        for _ in range(200):
            q = random_unit_quat(rng)
            np.testing.assert_allclose(quat_to_matrix(q), rotation_matrix(q), atol=1e-12)

    def test_conjugate_inverts(self):
        rng = np.random.default_rng(16)
        q = random_unit_quat(rng)
        np.testing.assert_allclose(
            quat_multiply(q, quat_conjugate(q)), IDENTITY, atol=1e-9
        )
