"""Spherical voxel encoding of local patches.

A patch expressed in its local frame is binned over a ball partitioned
uniformly in (radius, elevation, azimuth). Hard voxelization counts points
per voxel; interpolated voxelization splits each point's unit vote linearly
across the two nearest bin centerlines per dimension (up to 2x2x2 voxels),
which keeps the histogram stable when points jitter across bin boundaries.
Multiscale fusion stacks grids built at three nested radii as channels.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OutOfRangeError, ParseError
from .geometry import Patch

GRID_MAGIC = b"SVOX"


@dataclass(frozen=True)
class VoxelParams:
    """Bin counts per dimension and the outer radius of the ball."""

    radial_bins: int
    elevation_bins: int
    azimuth_bins: int
    radius: float

    def __post_init__(self):
        if min(self.radial_bins, self.elevation_bins, self.azimuth_bins) < 1:
            raise ConfigError("bin counts must be >= 1")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")

    @property
    def radial_width(self):
        return self.radius / self.radial_bins

    @property
    def elevation_width(self):
        return np.pi / self.elevation_bins

    @property
    def azimuth_width(self):
        return 2.0 * np.pi / self.azimuth_bins

    def edges(self, dim):
        if dim == "radial":
            return np.linspace(0.0, self.radius, self.radial_bins + 1)
        if dim == "elevation":
            return np.linspace(0.0, np.pi, self.elevation_bins + 1)
        if dim == "azimuth":
            return np.linspace(0.0, 2.0 * np.pi, self.azimuth_bins + 1)
        raise ValueError(f"unknown dimension '{dim}'")

    def shape(self):
        return (self.radial_bins, self.elevation_bins, self.azimuth_bins)


@dataclass(frozen=True)
class SphericalCoord:
    r: float
    theta: float
    phi: float


@dataclass(frozen=True)
class FeatureGrid:
    """Vote histogram with shape (channels, radial, elevation, azimuth).

    ``dropped`` counts input points outside the outermost radius. ``params``
    holds one VoxelParams per channel, or None for grids read back from a
    debug dump (the dump stores dimensions only).
    """

    values: np.ndarray
    params: tuple = None
    dropped: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 4:
            raise ValueError(f"grid values must be 4-d, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or values.min() < 0.0:
            raise ValueError("grid values must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class AxisWeights:
    """Non-zero interpolation weights of one point along one dimension."""

    radial: tuple
    elevation: tuple
    azimuth: tuple


def spherical_coords(p) -> SphericalCoord:
    """(r, theta, phi) with theta in [0, pi], phi in [0, 2*pi).

    theta is 0 at the +z pole; phi measures from +x toward +y. Degenerate
    directions map to zero angles (theta=0 when r=0, phi=0 on the z-axis).
    """
    r, theta, phi = _spherical_arrays(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return SphericalCoord(float(r[0]), float(theta[0]), float(phi[0]))


def _spherical_arrays(points):
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    r = np.sqrt(x * x + y * y + z * z)
    safe = np.where(r > 0.0, r, 1.0)
    theta = np.arccos(np.clip(z / safe, -1.0, 1.0))
    theta = np.where(r > 0.0, theta, 0.0)
    phi = np.arctan2(y, x)
    phi = np.where(phi < 0.0, phi + 2.0 * np.pi, phi)
    phi = np.where(phi >= 2.0 * np.pi, 0.0, phi)  # rounding can push -eps onto 2*pi
    return r, theta, phi


def _canonical_order(points):
    # Fixed summation order: votes accumulate in lexicographic point order,
    # making the grid bit-identical under input permutation.
    return points[np.lexsort((points[:, 2], points[:, 1], points[:, 0]))]


def _bin_indices(values, edges):
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.minimum(idx, len(edges) - 2)  # top edge closes the last bin


def voxelize_hard(patch: Patch, params: VoxelParams) -> FeatureGrid:
    """One full vote per point into the single voxel containing it.

    Bins are half-open on the upper side except the outermost, which also
    takes r = R and theta = pi. Points beyond R are dropped and counted.
    """
    points = _canonical_order(patch.neighbors - patch.center)
    r, theta, phi = _spherical_arrays(points)
    inside = r <= params.radius
    dropped = int(np.count_nonzero(~inside))
    n = _bin_indices(r[inside], params.edges("radial"))
    m = _bin_indices(theta[inside], params.edges("elevation"))
    k = _bin_indices(phi[inside], params.edges("azimuth"))
    grid = np.zeros(params.shape())
    np.add.at(grid, (n, m, k), 1.0)
    return FeatureGrid(grid[None], params=(params,), dropped=dropped)


def _axis_weights(values, width, count, kind, wrap=True):
    """Two-nearest-centerline linear weights along one dimension.

    Returns (i0, w0, i1, w1); an index of -1 marks a vote that falls outside
    the dimension and carries no weight. The radial axis clamps to weight 1
    inside the first half-bin, the elevation axis clamps inside both polar
    half-bins, and the azimuth axis wraps across the 0/2pi seam unless
    wrap=False selects the non-wrapping rule.
    """
    c = values / width - 0.5
    i0 = np.floor(c).astype(np.int64)
    w1 = c - i0
    w0 = 1.0 - w1
    i1 = i0 + 1
    if kind == "azimuth":
        if wrap:
            i0 %= count
            i1 %= count
        else:
            w0 = np.where(i0 < 0, 0.0, w0)
            i0 = np.where(i0 < 0, -1, i0)
            w1 = np.where(i1 >= count, 0.0, w1)
            i1 = np.where(i1 >= count, -1, i1)
        return i0, w0, i1, w1
    if kind == "radial":
        clamp_low = values < 0.5 * width
        clamp_high = np.zeros_like(clamp_low)
    elif kind == "elevation":
        clamp_low = values < 0.5 * width
        clamp_high = values > (count - 0.5) * width
    else:
        raise ValueError(f"unknown axis kind '{kind}'")
    i0 = np.where(clamp_low, 0, np.where(clamp_high, count - 1, i0))
    w0 = np.where(clamp_low | clamp_high, 1.0, w0)
    i1 = np.where(clamp_low | clamp_high, -1, i1)
    w1 = np.where(clamp_low | clamp_high, 0.0, w1)
    # the literal outer-edge rule: votes past the last centerline are lost
    w1 = np.where(i1 >= count, 0.0, w1)
    i1 = np.where(i1 >= count, -1, i1)
    return i0, w0, i1, w1


def interp_weights(coord: SphericalCoord, params: VoxelParams,
                   wrap_azimuth: bool = True) -> AxisWeights:
    """Per-dimension (bin index, weight) pairs with weight > 0 for one point.

    Bin indices are zero-based. Raises OutOfRangeError when r > R.
    """
    if coord.r > params.radius:
        raise OutOfRangeError(f"r = {coord.r:.6g} exceeds radius {params.radius:.6g}")

    def collect(value, width, count, kind):
        i0, w0, i1, w1 = _axis_weights(np.array([value]), width, count, kind,
                                       wrap=wrap_azimuth)
        pairs = {}
        for idx, w in ((int(i0[0]), float(w0[0])), (int(i1[0]), float(w1[0]))):
            if idx >= 0 and w > 0.0:
                pairs[idx] = pairs.get(idx, 0.0) + w  # K=1 wrap folds onto one bin
        return tuple(sorted(pairs.items()))

    return AxisWeights(
        radial=collect(coord.r, params.radial_width, params.radial_bins, "radial"),
        elevation=collect(coord.theta, params.elevation_width,
                          params.elevation_bins, "elevation"),
        azimuth=collect(coord.phi, params.azimuth_width, params.azimuth_bins,
                        "azimuth"),
    )


def voxelize_interp(patch: Patch, params: VoxelParams,
                    wrap_azimuth: bool = True) -> FeatureGrid:
    """Interpolated voxelization: each point votes into up to 2x2x2 voxels.

    The vote into a voxel is the product of the per-dimension weights, so a
    point on all three centerlines contributes exactly 1 to one voxel.
    """
    points = _canonical_order(patch.neighbors - patch.center)
    r, theta, phi = _spherical_arrays(points)
    inside = r <= params.radius
    dropped = int(np.count_nonzero(~inside))
    r, theta, phi = r[inside], theta[inside], phi[inside]

    rad = _axis_weights(r, params.radial_width, params.radial_bins, "radial")
    ele = _axis_weights(theta, params.elevation_width, params.elevation_bins,
                        "elevation")
    azi = _axis_weights(phi, params.azimuth_width, params.azimuth_bins,
                        "azimuth", wrap=wrap_azimuth)

    nbins_m, nbins_k = params.elevation_bins, params.azimuth_bins
    flat = np.zeros(params.radial_bins * nbins_m * nbins_k)
    for ir, wr in ((rad[0], rad[1]), (rad[2], rad[3])):
        for ie, we in ((ele[0], ele[1]), (ele[2], ele[3])):
            for ia, wa in ((azi[0], azi[1]), (azi[2], azi[3])):
                w = wr * we * wa
                ok = (ir >= 0) & (ie >= 0) & (ia >= 0) & (w > 0.0)
                if np.any(ok):
                    dest = (ir[ok] * nbins_m + ie[ok]) * nbins_k + ia[ok]
                    np.add.at(flat, dest, w[ok])
    grid = flat.reshape(params.shape())
    return FeatureGrid(grid[None], params=(params,), dropped=dropped)


def msf_fuse(patch: Patch, params: VoxelParams,
             radius_fractions=(1.0 / 3.0, 2.0 / 3.0, 1.0),
             wrap_azimuth: bool = True) -> FeatureGrid:
    """Three nested interpolated voxelizations stacked on the channel axis.

    Each scale uses outer radius fraction * R with radial_bins / 3 shells,
    so an (N, M, K) configuration fuses to shape (3, N/3, M, K).
    """
    if params.radial_bins % 3 != 0:
        raise ConfigError(f"radial_bins must be divisible by 3 for fusion, "
                          f"got {params.radial_bins}")
    fractions = tuple(float(f) for f in radius_fractions)
    if len(fractions) != 3 or any(b <= a for a, b in zip(fractions, fractions[1:])) \
            or fractions[-1] != 1.0:
        raise ConfigError("radius_fractions must be 3 strictly increasing values "
                          "ending at 1")
    scales = tuple(VoxelParams(params.radial_bins // 3, params.elevation_bins,
                               params.azimuth_bins, f * params.radius)
                   for f in fractions)
    grids = [voxelize_interp(patch, p, wrap_azimuth=wrap_azimuth) for p in scales]
    values = np.concatenate([g.values for g in grids], axis=0)
    return FeatureGrid(values, params=scales, dropped=grids[-1].dropped)


def save_grid(grid: FeatureGrid, path) -> None:
    """Debug dump: magic, u32 dims (C, N, M, K), float32 values in C order."""
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<4I", *grid.values.shape))
        fh.write(grid.values.astype("<f4").tobytes(order="C"))


def load_grid(path) -> FeatureGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != GRID_MAGIC:
        raise ParseError("bad grid magic", path=path, offset=0)
    if len(data) < 20:
        raise ParseError("truncated grid header", path=path, offset=len(data))
    shape = struct.unpack("<4I", data[4:20])
    expected = 20 + 4 * int(np.prod(shape))
    if len(data) < expected:
        raise ParseError(f"truncated grid payload: need {expected} bytes",
                         path=path, offset=len(data))
    values = np.frombuffer(data, dtype="<f4", count=int(np.prod(shape)),
                           offset=20).astype(np.float64).reshape(shape)
    return FeatureGrid(values, params=None, dropped=0)
