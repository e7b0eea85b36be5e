import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SAMPLES, WIDE_SAMPLER, scene
from wacal.geometry import pose_apply
from wacal.models import CameraSpec, project
from wacal.simulate import (
    RNG_ID,
    PoseSampler,
    SamplingError,
    SimConfig,
    TruthRecord,
    make_streams,
    sample_poses,
    synthesize_observations,
)
from wacal.targets import make_target


class TestPoseSampler:
    def test_same_seed_same_poses(self, grid):
        spec = SAMPLES["RadTan"]
        a = sample_poses(spec, grid, SimConfig(seed=3, frames=10))
        b = sample_poses(spec, grid, SimConfig(seed=3, frames=10))
        assert all(p == q for p, q in zip(a, b))

    def test_different_seed_different_poses(self, grid):
        spec = SAMPLES["RadTan"]
        a = sample_poses(spec, grid, SimConfig(seed=3, frames=5))
        b = sample_poses(spec, grid, SimConfig(seed=4, frames=5))
        assert not any(p == q for p, q in zip(a, b))

    def test_frontal_at_fixed_distance(self, grid):
        cfg = SimConfig(frames=8, pose_sampler=PoseSampler((0.5, 0.5), 0.0, 0.0))
        for pose in sample_poses(SAMPLES["KB8"], grid, cfg):
            # optical axis parallel to the target normal
            assert np.allclose(np.abs(pose.rotation[2]), [0, 0, 1], atol=1e-12)
            # the camera center, not the look-at point, sits 0.5 m from the center
            C = -pose.rotation.T @ pose.translation
            assert np.isclose(np.linalg.norm(C - grid.center), 0.5, atol=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=20)
    def test_constraints_hold(self, seed):
        grid = make_target("AprilGrid", 6, 6, 0.088, 0.3)
        spec = SAMPLES["RadTan"]
        sampler = PoseSampler((0.7, 1.2), 30.0, 0.6)
        for pose in sample_poses(spec, grid, SimConfig(frames=5, seed=seed, pose_sampler=sampler)):
            C = -pose.rotation.T @ pose.translation
            assert 0.7 - 1e-12 <= np.linalg.norm(C - grid.center) <= 1.2 + 1e-12
            axis = pose.rotation[2]
            assert np.degrees(np.arccos(abs(axis[2]))) <= 30 + 1e-9
            res = project(spec, pose_apply(pose, grid.points))
            inside = res.valid & np.all((res.pixel >= 0) & (res.pixel < [1600, 1200]), axis=1)
            assert inside.mean() >= 0.6

    def test_infeasible_config(self, grid):
        cfg = SimConfig(frames=3, pose_sampler=PoseSampler((0.02, 0.03), 0.0, 1.0))
        with pytest.raises(SamplingError):
            sample_poses(SAMPLES["RadTan"], grid, cfg)

    def test_bad_sampler_values(self):
        with pytest.raises(ValueError):
            PoseSampler((1.0, 0.5))
        with pytest.raises(ValueError):
            PoseSampler(max_tilt=90)


class TestSynthesize:
    def test_determinism(self):
        a, ta, _ = scene(SAMPLES["KB8"], frames=10, seed=7)
        b, tb, _ = scene(SAMPLES["KB8"], frames=10, seed=7)
        assert a == b
        assert ta.to_dict() == tb.to_dict()
        assert ta.generator == RNG_ID

    def test_noise_statistics(self, grid):
        spec = SAMPLES["RadTan"]
        poses = sample_poses(spec, grid, SimConfig(frames=40, seed=11))
        clean, _ = synthesize_observations(spec, grid, poses, SimConfig(noise_sigma=0, frames=40, seed=11))
        noisy, _ = synthesize_observations(spec, grid, poses, SimConfig(noise_sigma=0.7, frames=40, seed=11))
        d = np.concatenate([n.pixels - c.pixels for n, c in zip(noisy, clean)])
        assert d.shape[0] > 2000
        assert 0.68 <= d.std() <= 0.72
        assert abs(d.mean()) < 0.05
        # noise is independent between neighbouring coordinates
        flat = d.ravel()
        lag1 = np.corrcoef(flat[:-1], flat[1:])[0, 1]
        assert abs(lag1) < 0.05

    def test_noise_stream_per_frame(self, grid):
        # dropping earlier frames does not change a later frame's noise
        spec = SAMPLES["RadTan"]
        poses = sample_poses(spec, grid, SimConfig(frames=6, seed=2))
        cfg = SimConfig(frames=6, seed=2)
        full, _ = synthesize_observations(spec, grid, poses, cfg)
        _, noise = make_streams(2, 6)
        f = full.frames[5]
        clean, _ = synthesize_observations(spec, grid, poses, SimConfig(noise_sigma=0, frames=6, seed=2))
        expect = clean.frames[5].pixels + noise[5].normal(0, 0.7, size=f.pixels.shape)
        assert np.array_equal(f.pixels, expect)

    def test_only_valid_in_image_corners(self):
        obs, truth, grid = scene(SAMPLES["KB8"], frames=10, sigma=0.0, sampler=WIDE_SAMPLER)
        for f in obs:
            res = project(truth.spec, pose_apply(truth.poses[f.frame_id], grid.points[f.ids]))
            assert res.valid.all()
            assert np.array_equal(res.pixel, f.pixels)
            assert np.all((f.pixels >= 0) & (f.pixels < [1600, 1200]))

    def test_kb8_sees_points_behind_the_camera_plane(self):
        obs, truth, grid = scene(SAMPLES["KB8"], frames=40, sampler=WIDE_SAMPLER)
        behind = 0
        for f in obs:
            Xc = pose_apply(truth.poses[f.frame_id], grid.points[f.ids])
            behind += np.any(Xc[:, 2] <= 0)
        assert behind >= 1

    def test_drop_or_raise_sparse_frame(self, grid):
        from wacal.geometry import Pose
        away = Pose(np.diag([1.0, -1.0, -1.0]), [0, 0, -1.0])
        poses = sample_poses(SAMPLES["RadTan"], grid, SimConfig(frames=3)) + [away]
        obs, truth = synthesize_observations(SAMPLES["RadTan"], grid, poses, SimConfig(frames=4))
        assert obs.frame_ids() == [0, 1, 2]
        assert 3 in truth.poses
        with pytest.raises(ValueError):
            synthesize_observations(SAMPLES["RadTan"], grid, poses, SimConfig(frames=4, drop_invalid=False))

    def test_circle_bias_shifts_centers(self):
        spec = SAMPLES["RadTan"]
        grid = make_target("CircleGridAsym", 8, 11, 0.04)
        cfg = SimConfig(noise_sigma=0, frames=4, seed=1, circle_bias=True)
        poses = sample_poses(spec, grid, cfg)
        biased, _ = synthesize_observations(spec, grid, poses, cfg)
        plain, _ = synthesize_observations(spec, grid, poses, SimConfig(noise_sigma=0, frames=4, seed=1))
        shift = np.concatenate([
            b.pixels - p.pixels[np.searchsorted(p.ids, b.ids)] for b, p in zip(biased, plain)
        ])
        assert 1e-4 < np.abs(shift).max() < 5

    def test_config_round_trip(self):
        cfg = SimConfig(noise_sigma=0.3, frames=12, seed=5, pose_sampler=PoseSampler((0.2, 0.4), 60, 0.5))
        assert SimConfig.from_dict(cfg.to_dict()) == cfg

    def test_truth_round_trip(self):
        _, truth, _ = scene(SAMPLES["EUCM"], frames=4, seed=1)
        back = TruthRecord.from_dict(truth.to_dict())
        assert back.spec == truth.spec and all(back.poses[i] == truth.poses[i] for i in truth.poses)


class TestInvalidTruth:
    def test_folding_kb8_rejected(self, grid):
        # d(theta) turns back near 138 degrees, below the default theta_max of pi
        bad = CameraSpec("KB8", [411, 410, 803, 598, 0.02, -0.004, 0.001, -0.0002], 1600, 1200)
        with pytest.raises(ValueError, match="not a valid KB8"):
            sample_poses(bad, grid, SimConfig(frames=3))
        with pytest.raises(ValueError, match="not a valid KB8"):
            synthesize_observations(bad, grid, [], SimConfig(frames=3))
