import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from silhouette3d.camera import Viewpoint, rotation_from_viewpoint
from silhouette3d.metrics import (
    MetricError,
    PointCloud,
    angular_distance,
    cloud_density,
    directed_distances,
    pointcloud_to_voxels,
    summarize_pose_errors,
    symmetric_hausdorff,
    voxel_iou,
    voxels_to_pointcloud,
)
from silhouette3d.voxel import GridError

from oracles import random_view

binary_grids = arrays(np.float64, (4, 4, 4), elements=st.sampled_from([0.0, 1.0]))
clouds = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(3)), elements=st.floats(-2, 2))


def brute_directed(a, b):
    return np.array([min(np.linalg.norm(p - q) for q in b) for p in a])


def brute_density(pts, sample):
    out = []
    for i in sample:
        out.append(min(np.linalg.norm(pts[i] - pts[j]) for j in range(len(pts)) if j != i))
    return float(np.mean(out))


def cube(lo, size=8, res=32):
    g = np.zeros((res,) * 3)
    g[lo[1]:lo[1] + size, lo[0]:lo[0] + size, lo[2]:lo[2] + size] = 1.0
    return g


class TestIoU:
    def test_examples(self, rng):
        a = cube((4, 4, 4))
        assert voxel_iou(a, a) == 1.0
        assert voxel_iou(a, cube((20, 20, 20))) == 0.0
        assert voxel_iou(a, cube((8, 4, 4))) == pytest.approx(1 / 3)

    def test_empty_conventions(self):
        z = np.zeros((3, 3, 3))
        assert voxel_iou(z, z) == 1.0
        assert voxel_iou(z, np.ones((3, 3, 3))) == 0.0

    def test_dims_mismatch(self):
        with pytest.raises(GridError):
            voxel_iou(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))

    @given(binary_grids, binary_grids)
    def test_symmetric_and_one_iff_equal(self, a, b):
        assert voxel_iou(a, b) == voxel_iou(b, a)
        assert (voxel_iou(a, b) == 1.0) == bool(np.array_equal(a, b))


class TestAngularDistance:
    def test_examples(self):
        assert angular_distance(Viewpoint(30, 10), Viewpoint(30, 10)) == 0.0
        assert angular_distance(Viewpoint(30, 0), Viewpoint(50, 0)) == pytest.approx(20, abs=1e-12)

    def test_matches_axis_angle_oracle(self, rng):
        for axis in ("paper", "conventional"):
            for _ in range(200):
                a, b = random_view(rng), random_view(rng)
                rel = rotation_from_viewpoint(a, axis) @ rotation_from_viewpoint(b, axis).T
                expected = math.degrees(Rotation.from_matrix(rel).magnitude())
                assert angular_distance(a, b, axis) == pytest.approx(expected, abs=1e-10)

    @given(st.floats(0, 360), st.floats(0, 40), st.floats(0, 360), st.floats(0, 40))
    def test_properties(self, a1, e1, a2, e2):
        a, b = Viewpoint(a1, e1), Viewpoint(a2, e2)
        d = angular_distance(a, b)
        assert 0.0 <= d <= 180.0
        assert d == pytest.approx(angular_distance(b, a), abs=1e-9)

    def test_azimuth_near_half_turn(self):
        assert angular_distance(Viewpoint(0, 0), Viewpoint(180, 0)) == pytest.approx(180, abs=1e-12)
        assert angular_distance(Viewpoint(0, 0), Viewpoint(1e-7, 0)) == pytest.approx(1e-7, rel=1e-6)


class TestPoseSummary:
    def test_all_exact(self):
        v = Viewpoint(10, 10)
        s = summarize_pose_errors([(v, v)] * 3)
        assert s.median_error_deg == 0.0 and s.acc_pi_6 == 1.0

    def test_example_errors(self):
        pairs = [(Viewpoint(e, 0), Viewpoint(0, 0)) for e in (10, 20, 40)]
        s = summarize_pose_errors(pairs)
        assert s.median_error_deg == pytest.approx(20)
        assert s.acc_pi_6 == pytest.approx(2 / 3)

    def test_even_count_uses_lower_middle(self):
        pairs = [(Viewpoint(e, 0), Viewpoint(0, 0)) for e in (40, 10, 30, 20)]
        assert summarize_pose_errors(pairs).median_error_deg == pytest.approx(20)

    def test_matches_sort_oracle(self, rng):
        pairs = [(random_view(rng), random_view(rng)) for _ in range(100)]
        errs = sorted(math.degrees(Rotation.from_matrix(
            rotation_from_viewpoint(p) @ rotation_from_viewpoint(t).T).magnitude()) for p, t in pairs)
        s = summarize_pose_errors(pairs)
        assert s.median_error_deg == pytest.approx(errs[49], abs=1e-10)
        assert s.acc_pi_6 == sum(e < 30 for e in errs) / 100
        assert s.acc_pi_6 == sum(e < 30 for e in s.per_instance_errors) / 100

    def test_empty(self):
        with pytest.raises(MetricError):
            summarize_pose_errors([])


class TestPointClouds:
    def test_single_voxel(self):
        g = np.zeros((32, 32, 32))
        g[16, 16, 16] = 1.0
        np.testing.assert_allclose(voxels_to_pointcloud(g).points, [[0.015625] * 3])

    def test_counts(self, rng):
        assert len(voxels_to_pointcloud(np.ones((32, 32, 32)))) == 32768
        g = (rng.uniform(size=(10, 10, 10)) < 0.3).astype(float)
        assert len(voxels_to_pointcloud(g, scale=2.0)) == int(g.sum())

    def test_scale(self):
        g = np.zeros((4, 4, 4))
        g[0, 0, 0] = 1.0
        np.testing.assert_allclose(voxels_to_pointcloud(g, scale=100).points, [[-37.5] * 3])

    def test_empty_grid(self):
        with pytest.raises(MetricError):
            voxels_to_pointcloud(np.zeros((2, 2, 2)))

    @given(binary_grids, st.floats(0.1, 50))
    def test_revoxelization_round_trip(self, g, scale):
        if not g.any():
            return
        back = pointcloud_to_voxels(voxels_to_pointcloud(g, scale), g.shape, scale)
        np.testing.assert_array_equal(back.values, g)


class TestDensity:
    def test_examples(self):
        assert cloud_density(PointCloud([[0, 0, 0], [1, 0, 0]])) == 1.0
        lattice = np.stack(np.meshgrid(*[np.arange(5.0)] * 3, indexing="ij"), -1).reshape(-1, 3)
        assert cloud_density(PointCloud(lattice), 3) == pytest.approx(1.0)

    def test_matches_exhaustive_oracle(self, rng):
        pts = rng.normal(size=(83, 3))
        sample = np.random.default_rng(7).choice(83, size=9, replace=False)
        assert cloud_density(PointCloud(pts), 7) == pytest.approx(brute_density(pts, sample), rel=1e-12)

    def test_rigid_invariance(self, rng):
        pts = rng.normal(size=(120, 3))
        moved = pts @ Rotation.random(random_state=5).as_matrix().T + rng.normal(size=3)
        assert cloud_density(PointCloud(pts), 11) == pytest.approx(cloud_density(PointCloud(moved), 11), rel=1e-9)

    def test_too_few_points(self):
        with pytest.raises(MetricError):
            cloud_density(PointCloud([[0, 0, 0]]))


class TestHausdorff:
    def test_identical(self, rng):
        a = PointCloud(rng.normal(size=(20, 3)))
        assert symmetric_hausdorff(a, a) == 0.0
        assert symmetric_hausdorff(a, a, "classic") == 0.0

    def test_closed_form(self):
        a, b = PointCloud([[0, 0, 0]]), PointCloud([[1, 0, 0], [2, 0, 0]])
        assert symmetric_hausdorff(a, b) == pytest.approx(1.25)
        assert symmetric_hausdorff(a, b, "classic") == pytest.approx(1.5)

    def test_matches_brute_force(self, rng):
        a, b = rng.normal(size=(40, 3)), rng.normal(size=(27, 3)) + 0.3
        ab, ba = brute_directed(a, b), brute_directed(b, a)
        np.testing.assert_allclose(directed_distances(PointCloud(a), PointCloud(b)), ab, rtol=1e-12)
        assert symmetric_hausdorff(PointCloud(a), PointCloud(b)) == pytest.approx((ab.mean() + ba.mean()) / 2, rel=1e-12)
        assert symmetric_hausdorff(PointCloud(a), PointCloud(b), "classic") == pytest.approx(
            (ab.max() + ba.max()) / 2, rel=1e-12)

    @settings(max_examples=50)
    @given(clouds, clouds)
    def test_symmetric_and_classic_dominates(self, a, b):
        a, b = PointCloud(a), PointCloud(b)
        for mode in ("paper-averaged", "classic"):
            assert symmetric_hausdorff(a, b, mode) == pytest.approx(symmetric_hausdorff(b, a, mode), abs=1e-12)
        assert symmetric_hausdorff(a, b, "classic") >= symmetric_hausdorff(a, b) - 1e-12

    def test_errors(self):
        a = PointCloud([[0, 0, 0]])
        with pytest.raises(MetricError):
            symmetric_hausdorff(a, PointCloud(np.zeros((0, 3))))
        with pytest.raises(MetricError):
            symmetric_hausdorff(a, PointCloud([[1, 0, 0]], unit="mm"))
        with pytest.raises(MetricError):
            symmetric_hausdorff(a, a, mode="max")
        with pytest.raises(MetricError):
            PointCloud([[np.inf, 0, 0]])
