import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from wacal.targets import TARGET_KINDS, TargetLayout, make_target

dims = st.integers(2, 12)
spacing = st.floats(0.005, 0.2)


def build(kind, rows, cols, s):
    return make_target(kind, rows, cols, s, 0.3 if kind == "AprilGrid" else None)


class TestExamples:
    def test_checkerboard_8x11(self):
        assert len(make_target("Checkerboard", 8, 11, 0.03)) == 70

    def test_aprilgrid_7x10(self):
        t = make_target("AprilGrid", 7, 10, 0.04, 0.3)
        assert len(t) == 280
        assert np.allclose(t.points[:4, :2], [[0, 0], [0.04, 0], [0.04, 0.04], [0, 0.04]], atol=1e-15)

    def test_aprilgrid_second_tag_after_gap(self):
        t = make_target("AprilGrid", 7, 10, 0.04, 0.3)
        assert np.allclose(t.points[4, :2], [0.052, 0], atol=1e-15)
        # first tag of row 1 is id 4 * cols
        assert np.allclose(t.points[40, :2], [0, 0.052], atol=1e-15)

    def test_asymmetric_circle_grid(self):
        t = make_target("CircleGridAsym", 8, 11, 0.02)
        assert len(t) == 88
        row0, row1 = t.points[:11], t.points[11:22]
        assert np.allclose(row1[:, 0] - row0[:, 0], 0.01, atol=1e-15)

    def test_symmetric_circle_grid(self):
        assert len(make_target("CircleGridSym", 4, 11, 0.02)) == 44


class TestErrors:
    @pytest.mark.parametrize("rows,cols", [(1, 5), (5, 0), (-3, 4)])
    def test_bad_dims(self, rows, cols):
        with pytest.raises(ValueError):
            make_target("Checkerboard", rows, cols, 0.03)

    def test_bad_spacing(self):
        with pytest.raises(ValueError):
            make_target("Checkerboard", 5, 5, 0.0)

    def test_aprilgrid_needs_ratio(self):
        with pytest.raises(ValueError):
            make_target("AprilGrid", 5, 5, 0.04)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_target("Deltille", 5, 5, 0.04)

    def test_kind_alias(self):
        assert make_target("aprilgrid", 2, 2, 0.04, 0.3).kind == "AprilGrid"


class TestProperties:
    @given(st.sampled_from(TARGET_KINDS), dims, dims, spacing)
    def test_dense_ids_and_planar(self, kind, rows, cols, s):
        t = build(kind, rows, cols, s)
        assert np.array_equal(t.ids, np.arange(len(t)))
        assert np.all(t.points[:, 2] == 0)

    @given(dims, dims)
    def test_counts(self, rows, cols):
        assert len(make_target("AprilGrid", rows, cols, 0.04, 0.3)) == 4 * rows * cols
        assert len(make_target("Checkerboard", rows, cols, 0.04)) == (rows - 1) * (cols - 1)

    @given(st.sampled_from(["Checkerboard", "CircleGridSym"]), dims, dims, spacing)
    def test_regular_grid_distances(self, kind, rows, cols, s):
        t = build(kind, rows, cols, s)
        if len(t) < 2:
            return
        d = pdist(t.points)
        assert abs(d.min() - s) < 1e-12
        # every pairwise distance is s * sqrt(i^2 + j^2) for integers i, j
        k2 = (d / s) ** 2
        assert np.abs(k2 - np.round(k2)).max() < 1e-9

    @given(dims, dims, spacing, st.floats(0.05, 0.95))
    def test_aprilgrid_tag_geometry(self, rows, cols, s, ratio):
        t = make_target("AprilGrid", rows, cols, s, ratio)
        tags = t.points.reshape(-1, 4, 3)
        sides = np.linalg.norm(np.roll(tags, -1, axis=1) - tags, axis=2)
        assert np.abs(sides - s).max() < 1e-12
        pitch = np.diff(tags[:cols, 0, 0])
        assert np.abs(pitch - s * (1 + ratio)).max() < 1e-12

    @given(st.sampled_from(TARGET_KINDS), dims, dims, spacing)
    def test_json_round_trip(self, kind, rows, cols, s):
        t = build(kind, rows, cols, s)
        back = TargetLayout.from_dict(t.to_dict())
        assert back.kind == t.kind and np.array_equal(back.points, t.points)

    def test_points_list_export(self):
        t = make_target("Checkerboard", 3, 3, 0.05)
        assert t.points_list()[3] == [3, 0.05, 0.05, 0.0]
