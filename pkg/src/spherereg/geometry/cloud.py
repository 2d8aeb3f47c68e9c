"""Immutable point-cloud and patch containers."""

from dataclasses import dataclass, field

import numpy as np


def _as_points(values, name):
    pts = np.asarray(values, dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite coordinates")
    pts = np.ascontiguousarray(pts)
    pts.flags.writeable = False
    return pts


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points plus the sensor origin they were scanned from.

    Immutable after construction; safe to share across threads.
    """

    points: np.ndarray
    sensor_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points, "points"))
        origin = np.asarray(self.sensor_origin, dtype=np.float64)
        if origin.shape != (3,):
            raise ValueError(f"sensor_origin must have shape (3,), got {origin.shape}")
        if not np.all(np.isfinite(origin)):
            raise ValueError("sensor_origin contains non-finite coordinates")
        origin.flags.writeable = False
        object.__setattr__(self, "sensor_origin", origin)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Patch:
    """Neighborhood of a superpoint: all cloud points within ``radius`` of ``center``.

    The superpoint itself is not part of ``neighbors``.
    """

    center: np.ndarray
    neighbors: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (3,):
            raise ValueError(f"center must have shape (3,), got {center.shape}")
        center.flags.writeable = False
        object.__setattr__(self, "center", center)
        neighbors = _as_points(self.neighbors, "neighbors")
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if len(neighbors):
            dist = np.linalg.norm(neighbors - center, axis=1)
            if dist.max() > self.radius + 1e-9:
                raise ValueError(
                    f"neighbor at distance {dist.max():.6g} exceeds radius {self.radius:.6g}"
                )

    def __len__(self):
        return self.neighbors.shape[0]
