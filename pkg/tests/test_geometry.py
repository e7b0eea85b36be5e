import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm, logm
from scipy.spatial.transform import Rotation

from wacal.geometry import (
    REORTHO_PERIOD,
    Pose,
    hat,
    nearest_rotation,
    normalize_rays,
    pose_apply,
    pose_compose,
    pose_inverse,
    pose_log,
    pose_retract,
    so3_exp,
    so3_log,
)

vec3 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3).map(np.array)
small_rot = st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3).map(np.array)


def random_pose(rng):
    return Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3))


class TestPoseApply:
    def test_identity(self):
        assert np.array_equal(pose_apply(Pose.identity(), np.array([1.0, 2.0, 3.0])), [1, 2, 3])

    def test_pure_translation(self):
        p = Pose(np.eye(3), [0, 0, 1])
        assert np.array_equal(pose_apply(p, np.zeros(3)), [0, 0, 1])

    def test_quarter_turn_about_z(self):
        p = Pose(so3_exp(np.array([0, 0, np.pi / 2])), np.zeros(3))
        assert np.allclose(pose_apply(p, np.array([1.0, 0, 0])), [0, 1, 0], atol=1e-12)

    def test_stack_matches_single(self, rng):
        p = random_pose(rng)
        X = rng.normal(size=(5, 3))
        assert np.allclose(pose_apply(p, X), [pose_apply(p, x) for x in X], atol=1e-15)


class TestSO3:
    @given(vec3)
    def test_exp_matches_matrix_exponential(self, w):
        assert np.allclose(so3_exp(w), expm(hat(w)), atol=1e-12)

    @given(small_rot)
    def test_log_inverts_exp(self, w):
        if np.linalg.norm(w) >= np.pi - 1e-6:
            return
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-10)

    def test_log_matches_matrix_logarithm(self, rng):
        for _ in range(20):
            R = Rotation.random(random_state=rng).as_matrix()
            L = np.real(logm(R))
            w = np.array([L[2, 1], L[0, 2], L[1, 0]])
            assert np.allclose(so3_log(R), w, atol=1e-9)

    def test_log_near_pi(self):
        w = np.array([0.0, 0.0, np.pi - 1e-9])
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-6)

    def test_tiny_angle_branch(self):
        w = np.array([1e-9, -2e-9, 3e-9])
        assert np.allclose(so3_exp(w), expm(hat(w)), atol=1e-17)
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-20)

    def test_nearest_rotation_of_noisy_matrix(self, rng):
        R = Rotation.random(random_state=rng).as_matrix()
        M = R + 1e-3 * rng.normal(size=(3, 3))
        Q = nearest_rotation(M)
        assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(Q), 1.0)
        assert np.abs(Q - R).max() < 1e-2

    def test_nearest_rotation_of_near_singular_matrix(self):
        M = np.array([[1.0, 0, 0], [0, 1e-14, 0], [0, 0, -1.0]])
        Q = nearest_rotation(M)
        assert np.abs(Q.T @ Q - np.eye(3)).max() < 1e-10
        assert abs(np.linalg.det(Q) - 1) < 1e-10


class TestRetract:
    def test_zero_increment(self, rng):
        p = random_pose(rng)
        assert pose_retract(p, np.zeros(6)) == p

    def test_quarter_turn(self):
        p = pose_retract(Pose.identity(), np.array([0, 0, np.pi / 2, 0, 0, 0]))
        assert np.allclose(p.rotation, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)

    @given(small_rot, vec3)
    def test_log_recovers_increment(self, w, v):
        if np.linalg.norm(w) >= np.pi - 1e-6:
            return
        d = np.concatenate([w, v])
        assert np.allclose(pose_log(pose_retract(Pose.identity(), d)), d, atol=1e-9)

    def test_left_composition(self, rng):
        p = random_pose(rng)
        d = rng.normal(size=6) * 0.3
        q = pose_retract(p, d)
        expected = pose_compose(Pose(so3_exp(d[:3]), d[3:]), p)
        assert np.allclose(q.matrix(), expected.matrix(), atol=1e-14)

    def test_camera_frame_derivative(self, rng):
        # d/d delta of retract(p, delta) x at 0 is [-[x_c]x | I]
        p = random_pose(rng)
        x = rng.normal(size=3)
        xc = pose_apply(p, x)
        J = np.hstack([-hat(xc), np.eye(3)])
        h = 1e-6
        fd = np.column_stack([
            (pose_apply(pose_retract(p, h * e), x) - pose_apply(pose_retract(p, -h * e), x)) / (2 * h)
            for e in np.eye(6)
        ])
        assert np.allclose(fd, J, atol=1e-8)

    def test_orthonormal_after_many_retractions(self):
        rng = np.random.default_rng(7)
        p = Pose.identity()
        deltas = rng.normal(size=(10_000, 6)) * 0.3
        for d in deltas:
            p = pose_retract(p, d)
        R = p.rotation
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-10
        assert abs(np.linalg.det(R) - 1) < 1e-10

    def test_reorthonormalization_period(self):
        p = Pose.identity()
        for _ in range(REORTHO_PERIOD - 1):
            p = pose_retract(p, np.full(6, 0.01))
        assert p.drift_count == REORTHO_PERIOD - 1
        assert pose_retract(p, np.full(6, 0.01)).drift_count == 0

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            pose_retract(Pose.identity(), np.zeros(5))


class TestInverseCompose:
    def test_identity_inverse(self):
        assert pose_inverse(Pose.identity()) == Pose.identity()

    def test_translation_inverse(self):
        q = pose_inverse(Pose(np.eye(3), [1.0, -2.0, 3.0]))
        assert np.array_equal(q.translation, [-1, 2, -3])

    def test_round_trip_points(self, rng):
        p = random_pose(rng)
        X = rng.normal(size=(100, 3))
        assert np.abs(pose_apply(pose_inverse(p), pose_apply(p, X)) - X).max() < 1e-10

    def test_compose_applies_right_first(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        X = rng.normal(size=(10, 3))
        assert np.abs(pose_apply(pose_compose(a, b), X) - pose_apply(a, pose_apply(b, X))).max() < 1e-10


class TestPoseValue:
    def test_serialization_round_trip(self, rng):
        p = random_pose(rng)
        values = p.to_list()
        assert len(values) == 12
        assert values[:3] == list(p.rotation[0])
        assert Pose.from_list(values) == p

    def test_from_list_rejects_bad_length(self):
        with pytest.raises(ValueError):
            Pose.from_list([0.0] * 11)

    def test_arrays_are_read_only(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0

    def test_normalize_rays(self, rng):
        v = normalize_rays(rng.normal(size=(50, 3)))
        assert np.allclose(np.linalg.norm(v, axis=1), 1, atol=1e-12)
