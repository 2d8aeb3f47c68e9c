"""Corruption models: bounds, counts, determinism, analytic moments."""

import numpy as np
import pytest
from scipy import stats

from spherereg.errors import ConfigError
from spherereg.geometry import PointCloud
from spherereg.noisegen import (NoiseSpec, apply_noise, gaussian_clipped,
                                parse_noise_spec, range_noise,
                                replace_outliers, uniform_noise)


def clipped_normal_std(sigma, clip):
    """Std of a normal censored (not truncated) at +-clip."""
    alpha = clip / sigma
    second = ((2 * stats.norm.cdf(alpha) - 1)
              - 2 * alpha * stats.norm.pdf(alpha)
              + 2 * alpha ** 2 * stats.norm.sf(alpha))
    return sigma * np.sqrt(second)


def big_cloud(n, seed=0):
    return PointCloud(np.random.default_rng(seed).random((n, 3)) * 3)


class TestGaussianClipped:
    def test_vanishing_sigma_moves_nothing_measurable(self):
        cloud = big_cloud(500)
        noisy = gaussian_clipped(cloud, sigma=1e-12, clip=1e-12, seed=1)
        assert np.abs(noisy.points - cloud.points).max() < 1e-9

    def test_every_component_within_clip(self):
        cloud = big_cloud(20000)
        noisy = gaussian_clipped(cloud, sigma=0.05, clip=0.05, seed=2)
        # recovering the displacement from the sum reintroduces one rounding
        assert np.abs(noisy.points - cloud.points).max() <= 0.05 + 1e-12

    def test_empirical_std_matches_censored_normal(self):
        cloud = big_cloud(333334, seed=3)  # 1e6 coordinate samples
        noisy = gaussian_clipped(cloud, sigma=0.05, clip=0.05, seed=4)
        delta = (noisy.points - cloud.points).ravel()
        want = clipped_normal_std(0.05, 0.05)
        assert abs(delta.std() - want) / want < 0.02

    def test_seed_determinism(self):
        cloud = big_cloud(100)
        a = gaussian_clipped(cloud, seed=9)
        b = gaussian_clipped(cloud, seed=9)
        np.testing.assert_array_equal(a.points, b.points)

    def test_point_count_preserved(self):
        cloud = big_cloud(123)
        assert len(gaussian_clipped(cloud, seed=0)) == 123


class TestUniform:
    def test_bounds_respected(self):
        cloud = big_cloud(50000)
        noisy = uniform_noise(cloud, half_width=0.05, seed=5)
        delta = noisy.points - cloud.points
        assert np.abs(delta).max() <= 0.05

    def test_mean_displacement_near_zero(self):
        cloud = big_cloud(333334, seed=6)
        noisy = uniform_noise(cloud, half_width=0.05, seed=7)
        delta = (noisy.points - cloud.points).ravel()
        sigma = 0.05 / np.sqrt(3.0)
        assert abs(delta.mean()) < 3.0 * sigma / np.sqrt(delta.size)

    def test_seed_determinism(self):
        cloud = big_cloud(64)
        np.testing.assert_array_equal(uniform_noise(cloud, seed=1).points,
                                      uniform_noise(cloud, seed=1).points)


class TestReplaceOutliers:
    def test_replacement_count_exact(self):
        cloud = big_cloud(1000)
        for fraction in (0.03, 0.05, 0.07, 0.09):
            noisy = replace_outliers(cloud, fraction=fraction, seed=8)
            changed = np.any(noisy.points != cloud.points, axis=1).sum()
            assert changed == int(np.floor(fraction * 1000))

    def test_untouched_points_bit_equal(self):
        cloud = big_cloud(500, seed=9)
        noisy = replace_outliers(cloud, fraction=0.05, sigma=0.5, seed=10)
        same = np.all(noisy.points == cloud.points, axis=1)
        assert same.sum() == 500 - 25
        np.testing.assert_array_equal(noisy.points[same], cloud.points[same])

    def test_replacements_centered_on_centroid(self):
        cloud = big_cloud(200000, seed=11)
        noisy = replace_outliers(cloud, fraction=0.5, sigma=0.5, seed=12)
        changed = np.any(noisy.points != cloud.points, axis=1)
        offsets = noisy.points[changed] - cloud.points.mean(axis=0)
        assert np.abs(offsets.mean(axis=0)).max() < 0.01
        assert abs(offsets.std() - 0.5) < 0.01


class TestRangeNoise:
    def test_displacement_along_ray(self):
        cloud = big_cloud(300, seed=13)
        origin = np.array([-1.0, -1.0, -1.0])
        noisy = range_noise(cloud, origin=origin, sigma=0.05, seed=14)
        rays = cloud.points - origin
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        moved = noisy.points - origin
        moved_unit = moved / np.linalg.norm(moved, axis=1, keepdims=True)
        assert np.abs(np.cross(moved_unit, rays)).max() < 1e-9

    def test_origin_coincident_point_unchanged(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        noisy = range_noise(PointCloud(pts), origin=np.zeros(3), sigma=0.05,
                            seed=15)
        np.testing.assert_array_equal(noisy.points[0], pts[0])
        assert noisy.points[1, 0] != 1.0

    def test_radial_displacement_matches_censored_normal(self):
        cloud = big_cloud(1000000, seed=16)
        origin = np.array([10.0, 0.0, 0.0])
        noisy = range_noise(cloud, origin=origin, sigma=0.05, seed=17)
        signed = (np.linalg.norm(noisy.points - origin, axis=1)
                  - np.linalg.norm(cloud.points - origin, axis=1))
        assert np.abs(signed).max() <= 0.15 + 1e-12  # 3 sigma clip
        want = clipped_normal_std(0.05, 0.15)
        assert abs(signed.std() - want) / want < 0.02

    def test_default_origin_is_sensor_origin(self):
        pts = np.random.default_rng(18).random((50, 3)) + 2.0
        cloud = PointCloud(pts, sensor_origin=np.array([0.5, 0.5, 0.5]))
        noisy = range_noise(cloud, sigma=0.05, seed=19)
        rays = pts - cloud.sensor_origin
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        moved = noisy.points - cloud.sensor_origin
        moved /= np.linalg.norm(moved, axis=1, keepdims=True)
        assert np.abs(np.cross(moved, rays)).max() < 1e-9


class TestNoiseSpec:
    def test_parse_full_spec(self):
        spec = parse_noise_spec("kind=gaussian_clipped,sigma=0.05,clip=0.05,seed=7")
        assert spec == NoiseSpec(kind="gaussian_clipped", sigma=0.05,
                                 clip=0.05, seed=7)

    def test_parse_rejects_unknown_kind(self):
        with pytest.raises(ConfigError):
            parse_noise_spec("kind=salt_and_pepper")

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_noise_spec("kind=uniform,spread=1")

    def test_apply_dispatch(self):
        cloud = big_cloud(40)
        for kind in ("gaussian_clipped", "uniform", "replace_outliers",
                     "range_noise"):
            noisy = apply_noise(cloud, NoiseSpec(kind=kind, seed=3))
            assert len(noisy) == 40

    def test_invalid_fraction(self):
        with pytest.raises(ConfigError):
            NoiseSpec(kind="replace_outliers", fraction=1.5)
