"""Correspondence and registration quality metrics, plus report files.

Threshold conventions (inequalities are strict, matching the definitions):
an aligned pair is an inlier when its distance is < tau1; a cloud pair
passes feature matching when IR > tau2; registration succeeds when the
RMSE of ground-truth correspondences under the estimate is < tau3; a
transform is a success when RTE < sr_rte and RRE < sr_rre.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, RigidTransform, nearest_neighbors
from .registration import CorrespondenceSet


@dataclass(frozen=True)
class Thresholds:
    tau1: float = 0.1
    tau2: float = 0.05
    tau3: float = 0.2
    sr_rte: float = 2.0
    sr_rre: float = np.deg2rad(5.0)

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3", "sr_rte", "sr_rre"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def as_dict(self):
        return {"tau1": self.tau1, "tau2": self.tau2, "tau3": self.tau3,
                "sr_rte": self.sr_rte, "sr_rre_deg": float(np.rad2deg(self.sr_rre))}


@dataclass(frozen=True)
class PairEvaluation:
    pair_id: str
    inlier_ratio: float
    rmse: float
    rre: float  # radians
    rte: float
    fmr_pass: bool
    rr_pass: bool
    sr_pass: bool


def gt_correspondences(source: PointCloud, target: PointCloud,
                       t_gt: RigidTransform, tau1: float) -> CorrespondenceSet:
    """Nearest-neighbor pairs under the ground truth, within tau1."""
    if len(source) == 0 or len(target) == 0:
        empty = np.empty((0, 3))
        none = np.empty(0, dtype=np.int64)
        return CorrespondenceSet(empty, empty, none, none, np.empty(0))
    moved = t_gt.transform_points(source.points)
    idx, dist = nearest_neighbors(target.points, moved)
    keep = dist <= tau1
    src = np.nonzero(keep)[0]
    return CorrespondenceSet(source_points=source.points[src],
                             target_points=target.points[idx[keep]],
                             source_indices=src,
                             target_indices=idx[keep],
                             feature_distances=np.zeros(len(src)))


def inlier_ratio(corr: CorrespondenceSet, t_gt: RigidTransform,
                 tau1: float) -> float:
    """Share of correspondences within tau1 after ground-truth alignment."""
    if len(corr) == 0:
        return 0.0
    moved = t_gt.transform_points(corr.source_points)
    dist = np.linalg.norm(moved - corr.target_points, axis=1)
    return float(np.mean(dist < tau1))


def fmr(pair_inlier_ratios, tau2: float) -> float:
    """Share of cloud pairs whose inlier ratio exceeds tau2 (strictly)."""
    values = np.asarray(pair_inlier_ratios, dtype=np.float64)
    if values.size == 0:
        raise ValueError("FMR of an empty pair list is undefined")
    return float(np.mean(values > tau2))


def rmse(gt_corr: CorrespondenceSet, t_est: RigidTransform) -> float:
    """Root-mean-square residual of the estimate over ground-truth pairs."""
    if len(gt_corr) == 0:
        raise ValueError("RMSE over an empty correspondence set is undefined")
    moved = t_est.transform_points(gt_corr.source_points)
    return float(np.sqrt(np.mean(((moved - gt_corr.target_points) ** 2).sum(axis=1))))


def rr(rmse_values, tau3: float) -> float:
    """Share of pairs whose RMSE is below tau3 (strictly)."""
    values = np.asarray(rmse_values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("RR of an empty pair list is undefined")
    return float(np.mean(values < tau3))


def rre(r_est, r_gt) -> float:
    """Geodesic angle between two rotations, in radians."""
    r_est = np.asarray(r_est, dtype=np.float64)
    r_gt = np.asarray(r_gt, dtype=np.float64)
    cos = (np.trace(r_est.T @ r_gt) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def rte(t_est, t_gt) -> float:
    """Euclidean distance between translation vectors."""
    return float(np.linalg.norm(np.asarray(t_est, dtype=np.float64)
                                - np.asarray(t_gt, dtype=np.float64)))


def success_rate(evaluations, sr_rte: float = 2.0,
                 sr_rre: float = np.deg2rad(5.0)) -> float:
    """Share of pairs with RTE < sr_rte and RRE < sr_rre (both strict)."""
    if not len(evaluations):
        raise ValueError("success rate of an empty pair list is undefined")
    hits = [float(e.rte < sr_rte and e.rre < sr_rre) for e in evaluations]
    return float(np.mean(hits))


def evaluate_pair(pair_id: str, predicted: CorrespondenceSet,
                  gt_corr: CorrespondenceSet, t_est: RigidTransform,
                  t_gt: RigidTransform, thresholds: Thresholds) -> PairEvaluation:
    ir_value = inlier_ratio(predicted, t_gt, thresholds.tau1)
    rmse_value = rmse(gt_corr, t_est) if len(gt_corr) else float("inf")
    rre_value = rre(t_est.rotation, t_gt.rotation)
    rte_value = rte(t_est.translation, t_gt.translation)
    return PairEvaluation(
        pair_id=pair_id,
        inlier_ratio=ir_value,
        rmse=rmse_value,
        rre=rre_value,
        rte=rte_value,
        fmr_pass=bool(ir_value > thresholds.tau2),
        rr_pass=bool(rmse_value < thresholds.tau3),
        sr_pass=bool(rte_value < thresholds.sr_rte
                     and rre_value < thresholds.sr_rre),
    )


def summarize(evaluations, thresholds: Thresholds) -> dict:
    irs = [e.inlier_ratio for e in evaluations]
    rmses = [e.rmse for e in evaluations]
    rres = np.rad2deg([e.rre for e in evaluations])
    rtes = [e.rte for e in evaluations]
    return {
        "thresholds": thresholds.as_dict(),
        "pairs": len(evaluations),
        "FMR": fmr(irs, thresholds.tau2),
        "RR": rr(rmses, thresholds.tau3),
        "SR": success_rate(evaluations, thresholds.sr_rte, thresholds.sr_rre),
        "mean_IR": float(np.mean(irs)),
        "std_IR": float(np.std(irs)),
        "mean_RMSE": float(np.mean(rmses)),
        "median_RRE_deg": float(np.median(rres)),
        "median_RTE": float(np.median(rtes)),
    }


def write_pair_csv(evaluations, thresholds: Thresholds, path) -> None:
    """Per-pair CSV; the leading comment line echoes every threshold."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write("# " + " ".join(f"{k}={v:.6g}"
                                 for k, v in thresholds.as_dict().items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["pair_id", "IR", "RMSE", "RRE_deg", "RTE",
                         "fmr_pass", "rr_pass"])
        for e in evaluations:
            writer.writerow([e.pair_id, f"{e.inlier_ratio:.17g}",
                             f"{e.rmse:.17g}", f"{np.rad2deg(e.rre):.17g}",
                             f"{e.rte:.17g}", int(e.fmr_pass), int(e.rr_pass)])


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
