"""Repeatable local reference frames from distance-weighted covariance.

A patch is re-expressed in a frame whose z-axis is the eigenvector of the
smallest eigenvalue of the weighted covariance (surface-normal convention),
with axis directions disambiguated from the point distribution so the same
surface yields the same frame regardless of the pose it was scanned in.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrameError, DegeneratePatchError
from .geometry import Patch

EIGEN_TIE_TOL = 1e-9


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal right-handed basis; rows of ``axes`` are x, y, z."""

    axes: np.ndarray
    origin: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=np.float64)
        origin = np.asarray(self.origin, dtype=np.float64)
        if axes.shape != (3, 3) or origin.shape != (3,):
            raise ValueError("axes must be 3x3 and origin a 3-vector")
        if np.abs(axes @ axes.T - np.eye(3)).max() > 1e-9:
            raise ValueError("axes are not orthonormal")
        if np.linalg.det(axes) < 0:
            raise ValueError("axes must be right-handed")
        axes.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def identity(cls, origin, fallback=False):
        return cls(np.eye(3), origin, fallback=fallback)


def _weights(patch: Patch):
    diffs = patch.neighbors - patch.center
    dist = np.linalg.norm(diffs, axis=1)
    w = patch.radius - dist
    total = w.sum()
    if total <= 0.0:
        raise DegeneratePatchError("covariance weights sum to zero "
                                   "(all neighbors at the patch radius)")
    return diffs, w / total


def weighted_covariance(patch: Patch) -> np.ndarray:
    """Distance-weighted second-moment matrix of neighbor offsets.

    Each neighbor contributes (R - d) / sum(R - d) times the outer product
    of its offset from the patch center, so points near the center dominate
    and points at the rim contribute nothing.
    """
    if len(patch) < 3:
        raise DegeneratePatchError(f"need at least 3 neighbors, have {len(patch)}")
    diffs, w = _weights(patch)
    return (diffs * w[:, None]).T @ diffs


def majority_sign(vector, diffs) -> float:
    """+1 to keep, -1 to flip, per strict majority of non-negative dots.

    Ties (neither direction claims more than half the neighbors) keep the
    raw eigenvector sign.
    """
    dots = diffs @ vector
    n = len(dots)
    if np.count_nonzero(dots >= 0.0) * 2 > n:
        return 1.0
    if np.count_nonzero(dots <= 0.0) * 2 > n:
        return -1.0
    return 1.0


def build_lrf(patch: Patch, sign_rule=majority_sign) -> LocalFrame:
    """Construct the disambiguated local frame of a patch.

    z is the smallest-eigenvalue eigenvector of the weighted covariance,
    flipped toward the majority of the neighbors; x is the weighted neighbor
    centroid projected onto the plane normal to z (falling back to the
    largest-eigenvalue eigenvector when the projection vanishes); y = z × x.

    sign_rule(eigenvector, neighbor_offsets) -> +-1.0 is the axis
    disambiguation strategy; the default is the majority rule above.

    Raises DegenerateFrameError when the two smallest eigenvalues are too
    close for z to be stable.
    """
    m = weighted_covariance(patch)
    evals, evecs = np.linalg.eigh(m)  # ascending
    if evals[1] - evals[0] <= EIGEN_TIE_TOL * m.trace():
        raise DegenerateFrameError(
            f"eigenvalue near-tie ({evals[0]:.3e} vs {evals[1]:.3e}); "
            "patch has no stable normal direction")
    diffs, w = _weights(patch)
    z = evecs[:, 0] * sign_rule(evecs[:, 0], diffs)

    centroid = w @ diffs
    x = centroid - (centroid @ z) * z
    norm = np.linalg.norm(x)
    if norm < 1e-9 * patch.radius:
        x = evecs[:, 2] * sign_rule(evecs[:, 2], diffs)
    else:
        x = x / norm
    y = np.cross(z, x)
    return LocalFrame(np.stack([x, y, z]), patch.center)


def to_local(patch: Patch, frame: LocalFrame) -> Patch:
    """Re-express a patch in frame coordinates (distances to origin preserved)."""
    local = (patch.neighbors - frame.origin) @ frame.axes.T
    return Patch(center=np.zeros(3), neighbors=local, radius=patch.radius)
