"""Feature matching, least-squares rigid fit, and RANSAC estimation.

RANSAC draws its minimal sample for iteration i from a counter-based hash
of (seed, i), so a run is bit-reproducible regardless of how iterations are
chunked or parallelized, and extending the budget keeps the shared prefix
of hypotheses identical.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import RegistrationError
from .geometry import RigidTransform

RANSAC_ITERATIONS = 50000


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched keypoint pairs with their descriptor distances."""

    source_points: np.ndarray
    target_points: np.ndarray
    source_indices: np.ndarray
    target_indices: np.ndarray
    feature_distances: np.ndarray

    def __post_init__(self):
        n = len(self.source_indices)
        for name in ("source_points", "target_points", "target_indices",
                     "feature_distances"):
            if len(getattr(self, name)) != n:
                raise ValueError("correspondence arrays must share length")
        if n and self.feature_distances.min() < 0.0:
            raise ValueError("feature distances must be non-negative")

    def __len__(self):
        return len(self.source_indices)


@dataclass(frozen=True)
class RansacResult:
    transform: RigidTransform
    inlier_indices: np.ndarray
    inlier_count: int
    iterations: int
    seed: int
    best_iteration: int


def _distance_matrix(a, b):
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(d2, 0.0))


def match_features(desc_p, points_p, desc_q, points_q,
                   mode: str = "nn") -> CorrespondenceSet:
    """Pair keypoints by Euclidean descriptor distance.

    'nn' pairs every source keypoint with its nearest target descriptor;
    'mutual' keeps only pairs that are each other's nearest. Ties resolve
    to the lowest index.
    """
    desc_p, desc_q = np.asarray(desc_p), np.asarray(desc_q)
    if len(desc_p) == 0 or len(desc_q) == 0:
        raise ValueError("cannot match empty descriptor sets")
    if mode not in ("nn", "mutual"):
        raise ValueError(f"unknown match mode '{mode}'")
    dist = _distance_matrix(desc_p, desc_q)
    fwd = dist.argmin(axis=1)
    src = np.arange(len(desc_p))
    if mode == "mutual":
        back = dist.argmin(axis=0)
        keep = back[fwd] == src
        src = src[keep]
    tgt = fwd[src]
    return CorrespondenceSet(
        source_points=np.asarray(points_p)[src],
        target_points=np.asarray(points_q)[tgt],
        source_indices=src.astype(np.int64),
        target_indices=tgt.astype(np.int64),
        feature_distances=dist[src, tgt],
    )


def kabsch(src, dst) -> RigidTransform:
    """Rigid transform minimizing sum ||R src_i + t - dst_i||^2.

    Centroid subtraction, SVD of the 3x3 cross-covariance, and a reflection
    correction so the rotation is always proper (det +1).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError(f"point sets must share shape (k, 3), got "
                         f"{src.shape} vs {dst.shape}")
    if len(src) < 3:
        raise RegistrationError(f"need at least 3 point pairs, have {len(src)}")
    src_c = src - src.mean(axis=0)
    dst_c = dst - dst.mean(axis=0)
    h = src_c.T @ dst_c
    u, s, vt = np.linalg.svd(h)
    scale = max(s[0], 1e-300)
    if s[1] / scale < 1e-9:
        raise RegistrationError("degenerate correspondence geometry "
                                "(points nearly collinear)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = dst.mean(axis=0) - rot @ src.mean(axis=0)
    return RigidTransform(rot, t)


def _mix64(x):
    """SplitMix64 finalizer; uniform 64-bit hash, vectorized."""
    x = np.asarray(x, dtype=np.uint64).copy()
    x += np.uint64(0x9E3779B97F4A7C15)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def _sample_triples(seed, start, count, n):
    """Distinct index triples for iterations [start, start+count).

    Triple i depends only on (seed, i): three hashed draws, re-hashed with a
    bumped attempt counter until all three indices differ.
    """
    iters = np.arange(start, start + count, dtype=np.uint64)
    base = _mix64(np.uint64(seed) ^ _mix64(iters))
    triples = np.empty((count, 3), dtype=np.int64)
    attempt = np.zeros(count, dtype=np.uint64)
    pending = np.arange(count)
    while len(pending):
        for slot in range(3):
            h = _mix64(base[pending] + np.uint64(3) * attempt[pending]
                       + np.uint64(slot + 1))
            triples[pending, slot] = (h % np.uint64(n)).astype(np.int64)
        t = triples[pending]
        bad = (t[:, 0] == t[:, 1]) | (t[:, 0] == t[:, 2]) | (t[:, 1] == t[:, 2])
        attempt[pending[bad]] += np.uint64(1)
        pending = pending[bad]
    return triples


def _batch_kabsch(src_triples, dst_triples):
    """Proper rotations/translations for a stack of 3-point samples.

    Returns (rotations, translations, valid) with degenerate (collinear)
    samples flagged invalid instead of raising.
    """
    src_mean = src_triples.mean(axis=1, keepdims=True)
    dst_mean = dst_triples.mean(axis=1, keepdims=True)
    h = np.einsum("bij,bik->bjk", src_triples - src_mean, dst_triples - dst_mean)
    u, s, vt = np.linalg.svd(h)
    valid = s[:, 1] > 1e-9 * np.maximum(s[:, 0], 1e-300)
    flip = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    flip = np.where(flip == 0.0, 1.0, flip)
    vt_adj = vt.copy()
    vt_adj[:, 2, :] *= flip[:, None]
    rot = np.einsum("bji,bkj->bik", vt_adj, u)  # V' U^T batched
    tra = dst_mean[:, 0, :] - np.einsum("bij,bj->bi", rot, src_mean[:, 0, :])
    return rot, tra, valid


def ransac(corr: CorrespondenceSet, iterations: int = RANSAC_ITERATIONS,
           inlier_threshold: float = 0.1, seed: int = 0,
           chunk_size: int = 512,
           early_exit_inlier_fraction: float = None) -> RansacResult:
    """Max-consensus rigid fit over 3-point hypotheses, refit on the winners.

    The budget is fixed (no confidence-based stop) unless
    early_exit_inlier_fraction is set, in which case the run stops after the
    chunk containing the first hypothesis reaching that inlier share.
    """
    if len(corr) < 3:
        raise RegistrationError(f"RANSAC needs at least 3 correspondences, "
                                f"have {len(corr)}")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    src = corr.source_points
    dst = corr.target_points
    thr2 = float(inlier_threshold) ** 2
    best = (-1, -1)  # (inlier count, -iteration) lexicographic max
    best_mask = None
    done = 0
    while done < iterations:
        count = min(chunk_size, iterations - done)
        triples = _sample_triples(seed, done, count, len(corr))
        rot, tra, valid = _batch_kabsch(src[triples], dst[triples])
        moved = np.einsum("bij,nj->bni", rot, src) + tra[:, None, :]
        err2 = ((moved - dst[None]) ** 2).sum(axis=2)
        inliers = (err2 <= thr2).sum(axis=1)
        inliers[~valid] = -1
        top = int(inliers.argmax())  # first index on ties: lower iteration
        if inliers[top] > best[0]:
            best = (int(inliers[top]), done + top)
            best_mask = err2[top] <= thr2
        done += count
        if (early_exit_inlier_fraction is not None and
                best[0] >= early_exit_inlier_fraction * len(corr)):
            break
    if best[0] < 3:
        raise RegistrationError("no valid RANSAC hypothesis "
                                "(all samples degenerate)")
    inlier_idx = np.nonzero(best_mask)[0]
    transform = kabsch(src[inlier_idx], dst[inlier_idx])
    return RansacResult(transform=transform,
                        inlier_indices=inlier_idx,
                        inlier_count=int(best[0]),
                        iterations=done,
                        seed=seed,
                        best_iteration=best[1])


def save_correspondences(corr: CorrespondenceSet, path) -> None:
    """CSV dump: src_x,src_y,src_z,dst_x,dst_y,dst_z,feat_dist."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src_x", "src_y", "src_z",
                         "dst_x", "dst_y", "dst_z", "feat_dist"])
        for s, d, f in zip(corr.source_points, corr.target_points,
                           corr.feature_distances):
            writer.writerow([f"{v:.17g}" for v in (*s, *d, f)])


def load_correspondences(path) -> CorrespondenceSet:
    with open(path, "r", newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:7] != ["src_x", "src_y", "src_z",
                                  "dst_x", "dst_y", "dst_z", "feat_dist"]:
        raise ValueError(f"{path}: not a correspondence dump")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    data = data.reshape(-1, 7)
    n = len(data)
    return CorrespondenceSet(source_points=data[:, 0:3],
                             target_points=data[:, 3:6],
                             source_indices=np.arange(n, dtype=np.int64),
                             target_indices=np.arange(n, dtype=np.int64),
                             feature_distances=data[:, 6])
