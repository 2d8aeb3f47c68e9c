"""Point-cloud corruption models for robustness benchmarking.

Four generators: clipped Gaussian jitter, uniform jitter, outlier
replacement, and range (along-ray) noise. Each is deterministic for a
given seed and preserves the point count; replace_outliers touches exactly
floor(fraction * n) points and leaves the rest bit-identical.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import PointCloud

NOISE_KINDS = ("gaussian_clipped", "uniform", "replace_outliers", "range_noise")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    sigma: float = 0.05
    clip: float = 0.05
    half_width: float = 0.05
    fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind '{self.kind}', "
                              f"expected one of {NOISE_KINDS}")
        if self.sigma <= 0 or self.clip <= 0 or self.half_width <= 0:
            raise ConfigError("noise scales must be positive")
        if not 0.0 < self.fraction < 1.0:
            raise ConfigError("fraction must be in (0, 1)")


def parse_noise_spec(text: str) -> NoiseSpec:
    """Parse 'kind=gaussian_clipped,sigma=0.05,clip=0.05,seed=7' style strings."""
    fields = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"bad noise spec item '{item}', expected key=value")
        key, _, value = item.partition("=")
        fields[key.strip()] = value.strip()
    if "kind" not in fields:
        raise ConfigError("noise spec must name a kind")
    kwargs = {"kind": fields.pop("kind")}
    converters = {"sigma": float, "clip": float, "half_width": float,
                  "fraction": float, "seed": int}
    for key, value in fields.items():
        if key not in converters:
            raise ConfigError(f"unknown noise spec key '{key}'")
        try:
            kwargs[key] = converters[key](value)
        except ValueError:
            raise ConfigError(f"bad value for '{key}': '{value}'") from None
    return NoiseSpec(**kwargs)


def gaussian_clipped(cloud: PointCloud, sigma: float = 0.05,
                     clip: float = 0.05, seed: int = 0) -> PointCloud:
    """Per-coordinate normal jitter with each component clamped to +-clip."""
    rng = np.random.default_rng(seed)
    delta = np.clip(rng.normal(0.0, sigma, (len(cloud), 3)), -clip, clip)
    return PointCloud(cloud.points + delta, cloud.sensor_origin)


def uniform_noise(cloud: PointCloud, half_width: float = 0.05,
                  seed: int = 0) -> PointCloud:
    """Per-coordinate jitter uniform on [-half_width, half_width]."""
    rng = np.random.default_rng(seed)
    delta = rng.uniform(-half_width, half_width, (len(cloud), 3))
    return PointCloud(cloud.points + delta, cloud.sensor_origin)


def replace_outliers(cloud: PointCloud, fraction: float = 0.05,
                     sigma: float = 0.5, seed: int = 0) -> PointCloud:
    """Replace floor(fraction * n) random points with N(0, sigma^2) triples.

    Replacement coordinates are drawn around the cloud centroid so the
    outliers land inside the fragment regardless of its world position.
    """
    rng = np.random.default_rng(seed)
    n = len(cloud)
    count = int(np.floor(fraction * n))
    points = cloud.points.copy()
    if count:
        idx = rng.choice(n, size=count, replace=False)
        centroid = cloud.points.mean(axis=0)
        points[idx] = centroid + rng.normal(0.0, sigma, (count, 3))
    return PointCloud(points, cloud.sensor_origin)


def range_noise(cloud: PointCloud, origin=None, sigma: float = 0.05,
                seed: int = 0) -> PointCloud:
    """Displace each point along its ray from the sensor origin.

    Approximates depth-channel noise without the original depth maps: the
    perturbation is N(0, sigma^2) clipped to +-3 sigma along the unit ray
    direction. A point coinciding with the origin is left unchanged.
    """
    rng = np.random.default_rng(seed)
    origin = cloud.sensor_origin if origin is None else np.asarray(origin, float)
    rays = cloud.points - origin
    lengths = np.linalg.norm(rays, axis=1)
    safe = np.where(lengths > 0.0, lengths, 1.0)
    units = rays / safe[:, None]
    units[lengths == 0.0] = 0.0
    delta = np.clip(rng.normal(0.0, sigma, len(cloud)), -3.0 * sigma, 3.0 * sigma)
    return PointCloud(cloud.points + units * delta[:, None], cloud.sensor_origin)


def apply_noise(cloud: PointCloud, spec: NoiseSpec) -> PointCloud:
    if spec.kind == "gaussian_clipped":
        return gaussian_clipped(cloud, spec.sigma, spec.clip, spec.seed)
    if spec.kind == "uniform":
        return uniform_noise(cloud, spec.half_width, spec.seed)
    if spec.kind == "replace_outliers":
        return replace_outliers(cloud, spec.fraction, spec.sigma, spec.seed)
    return range_noise(cloud, None, spec.sigma, spec.seed)
