"""Fixed-radius neighbor queries backed by a uniform hash grid."""

import numpy as np
from scipy.spatial import cKDTree

from .cloud import Patch, PointCloud

_CELL_OFFSETS = np.array([(i, j, k)
                          for i in (-1, 0, 1)
                          for j in (-1, 0, 1)
                          for k in (-1, 0, 1)])


class HashGrid:
    """Uniform hash grid with cell size equal to the query radius.

    For a query radius r <= cell size, candidates are confined to the 27
    cells around the query point, so results are exact. Construction is
    single-threaded; concurrent queries on a built grid are safe.
    """

    def __init__(self, points, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.points = np.asarray(points, dtype=np.float64)
        self.cell_size = float(cell_size)
        self._cells = {}
        keys = np.floor(self.points / self.cell_size).astype(np.int64)
        for idx, key in enumerate(map(tuple, keys)):
            self._cells.setdefault(key, []).append(idx)
        self._cells = {k: np.array(v, dtype=np.int64) for k, v in self._cells.items()}

    def query_ball(self, center, radius: float) -> np.ndarray:
        """Indices (ascending) of points with ||p - center|| <= radius, zero-distance points excluded."""
        if radius > self.cell_size + 1e-12:
            raise ValueError(f"radius {radius} exceeds grid cell size {self.cell_size}")
        center = np.asarray(center, dtype=np.float64)
        base = np.floor(center / self.cell_size).astype(np.int64)
        chunks = []
        for off in _CELL_OFFSETS:
            hit = self._cells.get(tuple(base + off))
            if hit is not None:
                chunks.append(hit)
        if not chunks:
            return np.empty(0, dtype=np.int64)
        candidates = np.sort(np.concatenate(chunks))
        d2 = np.sum((self.points[candidates] - center) ** 2, axis=1)
        keep = (d2 <= radius * radius) & (d2 > 0.0)
        return candidates[keep]


def radius_neighbors(cloud: PointCloud, center, radius: float) -> Patch:
    """Patch of all cloud points within ``radius`` of ``center``.

    The center itself (any point at distance exactly zero) is excluded; it
    carries no directional information for the local frame or histogram.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    grid = HashGrid(cloud.points, radius)
    idx = grid.query_ball(center, radius)
    return Patch(center=center, neighbors=cloud.points[idx], radius=radius)


def nearest_neighbors(points, queries):
    """For each query, index of and distance to the closest of ``points``."""
    tree = cKDTree(np.asarray(points, dtype=np.float64))
    dist, idx = tree.query(np.asarray(queries, dtype=np.float64), k=1)
    return np.asarray(idx, dtype=np.int64), np.asarray(dist, dtype=np.float64)
