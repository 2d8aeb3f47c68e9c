"""Synthetic correspondence-pair scenes for desk-scale training and benchmarks.

Scenes are clutters of sampled geometric primitives (planes, boxes,
cylinders). The source cloud is the scene itself; the target is a rigidly
moved overlapping subset plus a freshly sampled region, with optional
per-point Gaussian noise. Ground-truth correspondences are nearest-neighbor
pairs under the known transform.
"""

import os
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFrameError, DegeneratePatchError
from ..geometry import (HashGrid, Patch, PointCloud, RigidTransform,
                        load_point_cloud, load_transform, nearest_neighbors,
                        random_rotation, save_point_cloud, save_transform)
from ..lrf import build_lrf


@dataclass(frozen=True)
class ScenePair:
    """A registration problem with known ground truth."""

    source: PointCloud
    target: PointCloud
    transform: RigidTransform          # maps source points onto target points
    correspondences: np.ndarray        # (k, 2) indices into source, target
    overlap: float


class _Primitive:
    def __init__(self, kind, center, rotation, size):
        self.kind = kind
        self.center = center
        self.rotation = rotation
        self.size = size

    def area(self):
        if self.kind == "plane":
            lu, lv = self.size
            return lu * lv
        if self.kind == "box":
            a, b, c = self.size
            return 2.0 * (a * b + b * c + c * a)
        rho, h = self.size
        return 2.0 * np.pi * rho * h

    def sample(self, rng, n):
        if self.kind == "plane":
            lu, lv = self.size
            local = np.stack([rng.uniform(-lu / 2, lu / 2, n),
                              rng.uniform(-lv / 2, lv / 2, n),
                              np.zeros(n)], axis=1)
        elif self.kind == "box":
            a, b, c = self.size
            face_area = np.array([b * c, b * c, a * c, a * c, a * b, a * b])
            face = rng.choice(6, size=n, p=face_area / face_area.sum())
            u, v = rng.uniform(-0.5, 0.5, (2, n))
            local = np.empty((n, 3))
            axis = face // 2
            sign = np.where(face % 2 == 0, 0.5, -0.5)
            dims = np.array([a, b, c])
            for ax in range(3):
                sel = axis == ax
                other = [d for d in range(3) if d != ax]
                local[sel, ax] = sign[sel] * dims[ax]
                local[sel, other[0]] = u[sel] * dims[other[0]]
                local[sel, other[1]] = v[sel] * dims[other[1]]
        else:
            rho, h = self.size
            alpha = rng.uniform(0.0, 2.0 * np.pi, n)
            local = np.stack([rho * np.cos(alpha), rho * np.sin(alpha),
                              rng.uniform(-h / 2, h / 2, n)], axis=1)
        return local @ self.rotation.T + self.center


def _scene_primitives(rng, scale):
    kinds = ["plane", "box", "box", "cylinder", "cylinder"]
    prims = []
    for _ in range(int(rng.integers(5, 8))):
        kind = kinds[rng.integers(0, len(kinds))]
        if kind == "plane":
            size = tuple(rng.uniform(0.8, 1.8, 2) * scale / 3.0)
        elif kind == "box":
            size = tuple(rng.uniform(0.4, 1.1, 3) * scale / 3.0)
        else:
            size = (rng.uniform(0.2, 0.5) * scale / 3.0,
                    rng.uniform(0.8, 1.8) * scale / 3.0)
        center = rng.uniform(-scale / 2.2, scale / 2.2, 3)
        prims.append(_Primitive(kind, center, random_rotation(rng), size))
    return prims


def _sample_scene(rng, prims, n):
    areas = np.array([p.area() for p in prims])
    counts = np.floor(areas / areas.sum() * n).astype(int)
    counts[int(np.argmax(areas))] += n - counts.sum()
    parts = [p.sample(rng, c) for p, c in zip(prims, counts) if c > 0]
    return np.concatenate(parts, axis=0)


def synth_pair_dataset(seed: int, scene_count: int, points_per_scene: int,
                       noise_sigma: float, overlap_fraction: float,
                       tau1: float = 0.1, scene_scale: float = 3.0):
    """Deterministic list of ScenePairs; see the module docstring.

    overlap_fraction is the share of source points that reappear (moved,
    possibly noised) in the target. With zero noise and full overlap the
    correspondence list is the identity pairing.
    """
    if not 0.0 < overlap_fraction <= 1.0:
        raise ValueError("overlap_fraction must be in (0, 1]")
    pairs = []
    for index in range(scene_count):
        rng = np.random.default_rng([seed, index])
        prims = _scene_primitives(rng, scene_scale)

        # Source and target are opposite crops of the scene along a random
        # direction, sized so both hold ~points_per_scene points and share
        # overlap_fraction of the source; the shared band reuses the source
        # samples, the rest of the target is freshly sampled surface.
        own = 1.0 / (2.0 - overlap_fraction)
        n_all = int(round(points_per_scene / own))
        scene_pts = _sample_scene(rng, prims, n_all)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        proj = scene_pts @ direction
        cut_hi = np.quantile(proj, own)
        cut_lo = np.quantile(proj, own * (1.0 - overlap_fraction))
        keep_p = proj <= cut_hi
        source_pts = scene_pts[keep_p]
        shared = scene_pts[keep_p & (proj >= cut_lo)]

        second = _sample_scene(rng, prims, n_all)
        fresh = second[second @ direction > cut_hi]
        target_scene = np.concatenate([shared, fresh], axis=0)

        t_gt = RigidTransform(random_rotation(rng),
                              rng.uniform(-scene_scale / 3, scene_scale / 3, 3))
        target_pts = t_gt.transform_points(target_scene)
        if noise_sigma > 0.0:
            target_pts = target_pts + rng.normal(0.0, noise_sigma,
                                                 target_pts.shape)

        source = PointCloud(source_pts)
        target = PointCloud(target_pts)
        idx, dist = nearest_neighbors(target.points,
                                      t_gt.transform_points(source.points))
        keep = dist <= tau1
        corr = np.stack([np.nonzero(keep)[0], idx[keep]], axis=1)
        pairs.append(ScenePair(source, target, t_gt, corr,
                               float(overlap_fraction)))
    return pairs


def save_scene_dir(pairs, directory) -> None:
    """Persist scene pairs as <id>.source.ply / <id>.target.ply / <id>.gt.txt."""
    os.makedirs(directory, exist_ok=True)
    for i, pair in enumerate(pairs):
        stem = os.path.join(directory, f"pair{i:04d}")
        save_point_cloud(pair.source, stem + ".source.ply")
        save_point_cloud(pair.target, stem + ".target.ply")
        save_transform(pair.transform, stem + ".gt.txt")


def load_scene_dir(directory, tau1: float = 0.1):
    """Rebuild ScenePairs from a directory written by save_scene_dir.

    Correspondences are recomputed as nearest neighbors under the stored
    ground truth; the overlap field is the matched share of the source.
    """
    stems = sorted(name[:-7] for name in os.listdir(directory)
                   if name.endswith(".gt.txt"))
    if not stems:
        raise FileNotFoundError(f"no *.gt.txt files in {directory}")
    pairs = []
    for stem in stems:
        base = os.path.join(directory, stem)
        source = load_point_cloud(base + ".source.ply")
        target = load_point_cloud(base + ".target.ply")
        t_gt = load_transform(base + ".gt.txt")
        idx, dist = nearest_neighbors(target.points,
                                      t_gt.transform_points(source.points))
        keep = dist <= tau1
        corr = np.stack([np.nonzero(keep)[0], idx[keep]], axis=1)
        pairs.append(ScenePair(source, target, t_gt, corr,
                               float(np.mean(keep))))
    return pairs


def rotate_patch(patch: Patch, rotation, translation=None) -> Patch:
    """Rigidly move a whole patch (center and neighbors together)."""
    rotation = np.asarray(rotation, dtype=np.float64)
    translation = np.zeros(3) if translation is None else np.asarray(translation)
    return Patch(center=rotation @ patch.center + translation,
                 neighbors=patch.neighbors @ rotation.T + translation,
                 radius=patch.radius)


def random_surface_patch(seed: int, n_points: int = 160,
                         radius: float = 0.3) -> Patch:
    """Curved synthetic patch with a stable, unambiguous local frame.

    Points sample a randomly oriented elliptic paraboloid cap through the
    patch center, so the covariance eigenvalues are well separated and the
    surface bulges to one side of its tangent plane.
    """
    rng = np.random.default_rng(seed)
    ca = rng.uniform(0.6, 1.6) / radius
    cb = rng.uniform(0.2, 0.5) / radius
    cross = rng.uniform(-0.2, 0.2) / radius
    pts = []
    while len(pts) < n_points:
        u, v = rng.uniform(-0.9 * radius, 0.9 * radius, 2)
        z = ca * u * u + cb * v * v + cross * u * v
        p = np.array([u, v, z])
        if 1e-6 < np.linalg.norm(p) <= 0.98 * radius:
            pts.append(p)
    pts = np.array(pts)
    rot = random_rotation(rng)
    center = rng.uniform(-1.0, 1.0, 3)
    return Patch(center=center, neighbors=pts @ rot.T + center, radius=radius)


def extract_patch_pairs(pair: ScenePair, radius: float, count: int, seed: int,
                        min_points: int = 12, frame_agreement: float = 0.8,
                        count_ratio: float = 0.7):
    """Corresponding patch pairs suitable for metric learning.

    Candidates are drawn from the ground-truth correspondence list; a pair
    is kept when both patches have at least min_points neighbors and
    comparable point counts (patches straddling the fragment boundary see
    different surface support on each side), both local frames build
    without degeneracy, and the two frame normals agree under the
    ground-truth rotation (dot product above frame_agreement). The filter
    needs the ground truth and is only for training-set curation.
    """
    rng = np.random.default_rng(seed)
    grid_p = HashGrid(pair.source.points, radius)
    grid_q = HashGrid(pair.target.points, radius)
    order = rng.permutation(len(pair.correspondences))
    patches_p, patches_q = [], []
    for row in order:
        if len(patches_p) >= count:
            break
        i, j = pair.correspondences[row]
        center_p = pair.source.points[i]
        center_q = pair.target.points[j]
        idx_p = grid_p.query_ball(center_p, radius)
        idx_q = grid_q.query_ball(center_q, radius)
        if len(idx_p) < min_points or len(idx_q) < min_points:
            continue
        if min(len(idx_p), len(idx_q)) < count_ratio * max(len(idx_p),
                                                           len(idx_q)):
            continue
        patch_p = Patch(center_p, pair.source.points[idx_p], radius)
        patch_q = Patch(center_q, pair.target.points[idx_q], radius)
        try:
            frame_p = build_lrf(patch_p)
            frame_q = build_lrf(patch_q)
        except (DegeneratePatchError, DegenerateFrameError):
            continue
        z_moved = pair.transform.rotation @ frame_p.axes[2]
        if z_moved @ frame_q.axes[2] < frame_agreement:
            continue
        patches_p.append(patch_p)
        patches_q.append(patch_q)
    return patches_p, patches_q
