"""Packaged benchmark suites: invariance, noise robustness, registration.

Each suite writes a CSV (plus a JSON summary and a PNG figure) into an
output directory and returns the summary dict. All randomness is derived
from the suite seed, so reruns reproduce every output byte.
"""

import csv
import os
from dataclasses import replace

import numpy as np

from .evalmetrics import (Thresholds, evaluate_pair, fmr, gt_correspondences,
                          inlier_ratio, rmse, summarize, write_pair_csv,
                          write_summary_json)
from .geometry import random_rotation
from .noisegen import gaussian_clipped
from .pipeline import (PipelineConfig, compute_patch_grid, describe_cloud,
                       random_weights)
from .plotting import (plot_invariance, plot_noise_sweep,
                       plot_registration_errors)
from .registration import match_features, ransac
from .scnn import forward, pad_spherical, pad_zero, weights_hash
from .scnn.layers import conv3d_forward
from .training.synth import random_surface_patch, rotate_patch, synth_pair_dataset

SUITES = ("invariance", "noise-robustness", "synthetic-registration")


def _write_csv(path, columns, rows, header_comment=None):
    with open(path, "w", newline="", encoding="ascii") as fh:
        if header_comment:
            fh.write("# " + header_comment + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def bench_invariance(out_dir, config: PipelineConfig = None, seed: int = 0,
                     n_patches: int = 30, n_rotations: int = 5) -> dict:
    """Descriptor invariance and layer equivariance on fresh random weights.

    The properties hold for any parameter values, so no trained weights are
    needed; the zero-padding ablation is run alongside to show the seam
    violation that spherical padding removes.
    """
    os.makedirs(out_dir, exist_ok=True)
    config = config or PipelineConfig()
    enc = config.encoder()
    weights = random_weights(config, seed)
    rng = np.random.default_rng(seed)

    rotation_errors = []
    shift_errors = []
    for i in range(n_patches):
        patch = random_surface_patch(seed * 100003 + i, radius=config.radius)
        grid, _ = compute_patch_grid(patch, enc)
        ref = forward(grid, weights)
        for j in range(n_rotations):
            moved = rotate_patch(patch, random_rotation(rng), rng.normal(size=3))
            grid_r, _ = compute_patch_grid(moved, enc)
            rotation_errors.append(float(np.linalg.norm(forward(grid_r, weights)
                                                        - ref)))
        shift = int(rng.integers(1, config.k))
        rolled = np.roll(grid.values, shift, axis=-1)
        shift_errors.append(float(np.linalg.norm(forward(rolled, weights) - ref)))

    # layer-level shift equivariance, spherical vs zero padding
    kern = rng.normal(size=(4, 2, 3, 3, 3))
    bias = rng.normal(size=4)
    x = rng.normal(size=(1, 2, 5, 6, config.k))
    s = int(rng.integers(1, config.k))
    conv_residual = {}
    for name, pad_fn in (("spherical", pad_spherical), ("zero", pad_zero)):
        a, _ = conv3d_forward(pad_fn(np.roll(x, s, axis=-1), 1), kern, bias)
        b, _ = conv3d_forward(pad_fn(x, 1), kern, bias)
        conv_residual[name] = float(np.abs(a - np.roll(b, s, axis=-1)).max())

    rows = ([("rotation", i, e) for i, e in enumerate(rotation_errors)]
            + [("azimuth_shift", i, e) for i, e in enumerate(shift_errors)])
    _write_csv(os.path.join(out_dir, "invariance.csv"),
               ["kind", "trial", "descriptor_l2_residual"], rows,
               header_comment=f"seed={seed} weights={weights_hash(weights)}")
    plot_invariance(rotation_errors, shift_errors,
                    os.path.join(out_dir, "invariance.png"))
    summary = {
        "seed": seed,
        "weights_hash": weights_hash(weights),
        "config": config.resolved(),
        "max_rotation_residual": max(rotation_errors),
        "max_shift_residual": max(shift_errors),
        "conv_shift_residual_spherical": conv_residual["spherical"],
        "conv_shift_residual_zero": conv_residual["zero"],
        "rotation_invariant": max(rotation_errors) <= 1e-3,
        "shift_invariant": max(shift_errors) <= 1e-6,
        "zero_padding_breaks_equivariance": conv_residual["zero"] > 1e-3,
    }
    write_summary_json(summary, os.path.join(out_dir, "invariance.json"))
    return summary


def _bench_pairs(seed, n_pairs, points, overlaps, sigma=0.0):
    pairs = []
    for i in range(n_pairs):
        pairs.extend(synth_pair_dataset(seed * 1009 + i, 1, points, sigma,
                                        overlaps[i % len(overlaps)]))
    return pairs


def _corrupt(pair, sigma, seed):
    if sigma <= 0.0:
        return pair
    return replace(pair,
                   source=gaussian_clipped(pair.source, sigma, sigma, seed * 2 + 1),
                   target=gaussian_clipped(pair.target, sigma, sigma, seed * 2 + 2))


def _pair_scores(pair, config, weights, thresholds, compute_rr,
                 ransac_iterations, seed):
    src = describe_cloud(pair.source, config, weights)
    tgt = describe_cloud(pair.target, config, weights)
    corr = match_features(src.descriptors, src.keypoints,
                          tgt.descriptors, tgt.keypoints,
                          mode=config.match_mode)
    ir_value = inlier_ratio(corr, pair.transform, thresholds.tau1)
    rmse_value = None
    if compute_rr:
        result = ransac(corr, iterations=ransac_iterations,
                        inlier_threshold=config.inlier_threshold, seed=seed)
        gt_corr = gt_correspondences(pair.source, pair.target, pair.transform,
                                     thresholds.tau1)
        rmse_value = rmse(gt_corr, result.transform)
    return ir_value, rmse_value


def bench_noise(out_dir, weights, config: PipelineConfig = None, seed: int = 0,
                sigmas=(0.0, 0.01, 0.03, 0.05, 0.07), n_pairs: int = 8,
                points: int = 5000, keypoints: int = 550,
                ransac_iterations: int = 2000,
                compare_sigma: float = 0.05, compare_seeds: int = 0) -> dict:
    """Noise sweep (FMR / IR / RR vs sigma) plus interpolation comparison.

    Scenes and keypoints are shared across sigma levels so the sweep
    isolates the effect of the corruption. With compare_seeds > 0, FMR of
    the interpolated and hard voxelizations is compared at compare_sigma
    over that many independently seeded benchmark sets; the hard side runs
    through the same (interpolation-trained) weights, so the comparison
    isolates the voxelization, not the training.
    """
    os.makedirs(out_dir, exist_ok=True)
    config = replace(config or PipelineConfig(), keypoints=keypoints)
    thresholds = Thresholds(tau1=config.tau1, tau2=config.tau2, tau3=config.tau3)
    overlaps = (0.45, 0.55, 0.65)
    pairs = _bench_pairs(seed, n_pairs, points, overlaps)

    sweep_rows = []
    for level, sigma in enumerate(sigmas):
        irs, rmses = [], []
        for i, pair in enumerate(pairs):
            noisy = _corrupt(pair, sigma, seed=seed * 7919 + level * 131 + i)
            ir_value, rmse_value = _pair_scores(
                noisy, config, weights, thresholds, compute_rr=True,
                ransac_iterations=ransac_iterations, seed=seed + i)
            irs.append(ir_value)
            rmses.append(rmse_value)
        sweep_rows.append({
            "noise_std": float(sigma),
            "FMR": fmr(irs, thresholds.tau2),
            "IR": float(np.mean(irs)),
            "RR": float(np.mean([r < thresholds.tau3 for r in rmses])),
        })
    _write_csv(os.path.join(out_dir, "noise_sweep.csv"),
               ["noise_std", "FMR", "IR", "RR"],
               [[f"{r['noise_std']:.17g}", f"{r['FMR']:.17g}",
                 f"{r['IR']:.17g}", f"{r['RR']:.17g}"] for r in sweep_rows],
               header_comment=(f"seed={seed} pairs={n_pairs} "
                               f"tau1={thresholds.tau1} tau2={thresholds.tau2} "
                               f"tau3={thresholds.tau3} "
                               f"weights={weights_hash(weights)}"))
    plot_noise_sweep(sweep_rows, os.path.join(out_dir, "noise_sweep.png"))

    comparison = []
    if compare_seeds > 0:
        hard_config = replace(config, interpolate=False)
        for trial in range(compare_seeds):
            trial_pairs = _bench_pairs(seed + 5000 + trial, n_pairs, points,
                                       overlaps)
            irs = {"interp": [], "hard": []}
            for i, pair in enumerate(trial_pairs):
                noisy = _corrupt(pair, compare_sigma,
                                 seed=seed * 31 + trial * 977 + i)
                for name, cfg in (("interp", config), ("hard", hard_config)):
                    ir_value, _ = _pair_scores(noisy, cfg, weights, thresholds,
                                               compute_rr=False,
                                               ransac_iterations=0, seed=0)
                    irs[name].append(ir_value)
            comparison.append({
                "trial": trial,
                "fmr_interp": fmr(irs["interp"], thresholds.tau2),
                "fmr_hard": fmr(irs["hard"], thresholds.tau2),
            })
        _write_csv(os.path.join(out_dir, "interp_vs_hard.csv"),
                   ["trial", "fmr_interp", "fmr_hard"],
                   [[c["trial"], f"{c['fmr_interp']:.17g}",
                     f"{c['fmr_hard']:.17g}"] for c in comparison],
                   header_comment=f"sigma={compare_sigma} pairs={n_pairs}")

    fmrs = [row["FMR"] for row in sweep_rows]
    summary = {
        "seed": seed,
        "weights_hash": weights_hash(weights),
        "config": config.resolved(),
        "thresholds": thresholds.as_dict(),
        "sweep": sweep_rows,
        "fmr_non_increasing": all(a >= b for a, b in zip(fmrs, fmrs[1:])),
        "interp_wins": sum(c["fmr_interp"] > c["fmr_hard"] for c in comparison),
        "comparison_trials": len(comparison),
    }
    write_summary_json(summary, os.path.join(out_dir, "noise_summary.json"))
    return summary


def bench_registration(out_dir, weights, config: PipelineConfig = None,
                       seed: int = 0, n_pairs: int = 20, points: int = 5000,
                       overlap: float = 0.7, sigma: float = 0.01,
                       ransac_iterations: int = 50000) -> dict:
    """Full describe-match-RANSAC loop over synthetic pairs with Noise 1."""
    os.makedirs(out_dir, exist_ok=True)
    config = config or PipelineConfig()
    thresholds = Thresholds(tau1=config.tau1, tau2=config.tau2,
                            tau3=config.tau3, sr_rte=config.sr_rte,
                            sr_rre=np.deg2rad(config.sr_rre_deg))
    pairs = _bench_pairs(seed, n_pairs, points, [overlap])
    evaluations = []
    for i, pair in enumerate(pairs):
        noisy = _corrupt(pair, sigma, seed=seed * 6151 + i)
        src = describe_cloud(noisy.source, config, weights)
        tgt = describe_cloud(noisy.target, config, weights)
        corr = match_features(src.descriptors, src.keypoints,
                              tgt.descriptors, tgt.keypoints,
                              mode=config.match_mode)
        result = ransac(corr, iterations=ransac_iterations,
                        inlier_threshold=config.inlier_threshold, seed=seed + i)
        gt_corr = gt_correspondences(noisy.source, noisy.target,
                                     noisy.transform, thresholds.tau1)
        evaluations.append(evaluate_pair(f"pair{i:04d}", corr, gt_corr,
                                         result.transform, noisy.transform,
                                         thresholds))
    write_pair_csv(evaluations, thresholds,
                   os.path.join(out_dir, "registration_pairs.csv"))
    plot_registration_errors(evaluations,
                             os.path.join(out_dir, "registration_errors.png"))
    summary = summarize(evaluations, thresholds)
    summary.update({
        "seed": seed,
        "weights_hash": weights_hash(weights),
        "config": config.resolved(),
        "ransac_iterations": ransac_iterations,
        "noise_sigma": sigma,
        "overlap": overlap,
    })
    write_summary_json(summary, os.path.join(out_dir, "registration_summary.json"))
    return summary
