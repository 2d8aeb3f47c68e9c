"""Transforms, sampling, and neighbor queries against brute-force oracles."""

import numpy as np
import pytest

from spherereg.geometry import (HashGrid, Patch, PointCloud, RigidTransform,
                                apply_transform, compose, invert,
                                load_transform, radius_neighbors,
                                random_downsample, random_rotation,
                                save_transform)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_transform(rng):
    return RigidTransform(random_rotation(rng), rng.normal(size=3))


class TestRigidTransform:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_identity_application(self):
        cloud = PointCloud(np.random.default_rng(0).random((20, 3)))
        out = apply_transform(cloud, RigidTransform.identity())
        np.testing.assert_array_equal(out.points, cloud.points)

    def test_quarter_turn(self):
        t = RigidTransform(rot_z(np.pi / 2), np.zeros(3))
        np.testing.assert_allclose(t.transform_points([[1.0, 0.0, 0.0]]),
                                   [[0.0, 1.0, 0.0]], atol=1e-15)

    def test_compose_identity(self):
        t = random_transform(np.random.default_rng(1))
        left = compose(RigidTransform.identity(), t)
        np.testing.assert_array_equal(left.rotation, t.rotation)
        np.testing.assert_array_equal(left.translation, t.translation)

    def test_invert_identity(self):
        inv = invert(RigidTransform.identity())
        np.testing.assert_array_equal(inv.matrix(), np.eye(4))

    def test_roundtrip_within_1e12(self):
        rng = np.random.default_rng(2)
        pts = rng.random((50, 3)) * 10
        for _ in range(20):
            t = random_transform(rng)
            back = invert(t).transform_points(t.transform_points(pts))
            assert np.abs(back - pts).max() < 1e-12

    def test_compose_matches_sequential_application(self):
        rng = np.random.default_rng(3)
        t1, t2 = random_transform(rng), random_transform(rng)
        pts = rng.random((30, 3))
        np.testing.assert_allclose(
            compose(t1, t2).transform_points(pts),
            t1.transform_points(t2.transform_points(pts)), atol=1e-12)

    def test_preserves_pairwise_distances(self):
        rng = np.random.default_rng(4)
        pts = rng.random((40, 3)) * 5
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        for _ in range(10):
            cloud = apply_transform(PointCloud(pts), random_transform(rng))
            d1 = np.linalg.norm(cloud.points[:, None] - cloud.points[None], axis=2)
            rel = np.abs(d1 - d0) / np.maximum(d0, 1e-12)
            np.fill_diagonal(rel, 0.0)
            assert rel.max() < 1e-9


class TestTransformFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        t = random_transform(np.random.default_rng(5))
        path = tmp_path / "t.txt"
        save_transform(t, path)
        back = load_transform(path)
        np.testing.assert_array_equal(back.rotation, t.rotation)
        np.testing.assert_array_equal(back.translation, t.translation)

    def test_wrong_token_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2 3\n")
        from spherereg.errors import ParseError
        with pytest.raises(ParseError):
            load_transform(path)


class TestDownsample:
    def test_full_count_is_permutation(self):
        pts = np.random.default_rng(6).random((10, 3))
        out = random_downsample(PointCloud(pts), 10, seed=123)
        assert sorted(map(tuple, out.points)) == sorted(map(tuple, pts))

    def test_seed_determinism(self):
        cloud = PointCloud(np.random.default_rng(7).random((100, 3)))
        a = random_downsample(cloud, 40, seed=9)
        b = random_downsample(cloud, 40, seed=9)
        np.testing.assert_array_equal(a.points, b.points)

    def test_5000_of_10000(self):
        cloud = PointCloud(np.random.default_rng(8).random((10000, 3)))
        out = random_downsample(cloud, 5000, seed=0)
        assert len(out) == 5000
        assert len(set(map(tuple, out.points))) == 5000

    def test_count_too_large(self):
        cloud = PointCloud(np.random.default_rng(9).random((5, 3)))
        with pytest.raises(ValueError):
            random_downsample(cloud, 6, seed=0)


class TestRadiusNeighbors:
    def test_far_center_empty(self):
        cloud = PointCloud(np.random.default_rng(10).random((50, 3)))
        patch = radius_neighbors(cloud, np.array([100.0, 100.0, 100.0]), 0.5)
        assert len(patch) == 0

    def test_unit_cube_corners(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1)
                            for z in (0, 1)], dtype=float)
        patch = radius_neighbors(PointCloud(corners), np.zeros(3), 1.1)
        got = sorted(map(tuple, patch.neighbors))
        assert got == [(0.0, 0.0, 1.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0)]

    def test_patch_radius_recorded(self):
        cloud = PointCloud(np.random.default_rng(11).random((200, 3)) * 0.5)
        patch = radius_neighbors(cloud, cloud.points[0], 0.3)
        assert patch.radius == 0.3
        assert np.all(np.linalg.norm(patch.neighbors - patch.center, axis=1)
                      <= 0.3 + 1e-9)

    def test_matches_linear_scan_on_random_clouds(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            pts = rng.random((rng.integers(5, 60), 3)) * rng.uniform(0.5, 3.0)
            center = rng.random(3)
            radius = rng.uniform(0.05, 0.8)
            patch = radius_neighbors(PointCloud(pts), center, radius)
            dist = np.linalg.norm(pts - center, axis=1)
            expected = pts[(dist <= radius) & (dist > 0.0)]
            assert sorted(map(tuple, patch.neighbors)) \
                == sorted(map(tuple, expected))

    def test_grid_rejects_oversized_radius(self):
        grid = HashGrid(np.random.default_rng(13).random((10, 3)), 0.2)
        with pytest.raises(ValueError):
            grid.query_ball(np.zeros(3), 0.5)


class TestContainers:
    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, 0.0, np.nan]]))

    def test_points_immutable(self):
        cloud = PointCloud(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 1.0

    def test_patch_rejects_out_of_radius_neighbor(self):
        with pytest.raises(ValueError):
            Patch(np.zeros(3), np.array([[2.0, 0.0, 0.0]]), radius=1.0)
