"""Seeded downsampling."""

import numpy as np

from .cloud import PointCloud


def random_downsample(cloud: PointCloud, count: int, seed: int) -> PointCloud:
    """Uniform sample of ``count`` distinct points, reproducible from ``seed``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count > len(cloud):
        raise ValueError(f"cannot sample {count} points from a cloud of {len(cloud)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(cloud), size=count, replace=False)
    return PointCloud(cloud.points[idx], cloud.sensor_origin)


def downsample_indices(n: int, count: int, seed: int) -> np.ndarray:
    """Index form of random_downsample, for callers that track provenance."""
    if count > n:
        raise ValueError(f"cannot sample {count} points from a cloud of {n}")
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=count, replace=False)
