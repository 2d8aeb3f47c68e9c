"""Batch command-line front end.

Commands: describe, register, evaluate, noise, train, bench. Every command
is deterministic given its configuration and seeds. Exit codes: 0 success,
1 pipeline failure (degenerate geometry, no valid RANSAC hypothesis),
2 usage or I/O error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .bench import SUITES, bench_invariance, bench_noise, bench_registration
from .errors import ConfigError, ParseError, SphereRegError
from .evalmetrics import (Thresholds, evaluate_pair, gt_correspondences,
                          summarize, write_pair_csv, write_summary_json)
from .geometry import load_point_cloud, load_transform, save_point_cloud, save_transform
from .noisegen import apply_noise, parse_noise_spec
from .pipeline import (PRESETS, build_config, describe_cloud, load_descriptors,
                       save_descriptors)
from .plotting import plot_registration_errors, plot_training_log
from .registration import (load_correspondences, match_features, ransac,
                           save_correspondences)
from .scnn import load_weights, save_weights, weights_hash
from .training import (TrainConfig, build_training_set, build_validation_set,
                       default_network, synth_pair_dataset, train,
                       write_training_log)
from .training.synth import load_scene_dir


def _add_config_flags(sub):
    sub.add_argument("--preset", choices=sorted(PRESETS),
                     help="named hyperparameter preset")
    sub.add_argument("--config", help="key = value configuration file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a single configuration key (repeatable)")
    sub.add_argument("--seed", type=int, help="pipeline seed override")
    sub.add_argument("--threads", type=int,
                     help="worker threads (or env SPHEREREG_THREADS; "
                          "0 = all cores)")


def _config_from_args(args, **extra):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got '{item}'")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    for key, value in extra.items():
        if value is not None:
            overrides[key] = value
    return build_config(args.preset, args.config, overrides)


def _parse_synth_spec(text):
    defaults = {"scenes": 10, "points": 4000, "sigma": 0.01,
                "overlap": 0.7, "seed": 10}
    converters = {"scenes": int, "points": int, "sigma": float,
                  "overlap": float, "seed": int}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"bad synth spec item '{item}'")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in converters:
            raise ConfigError(f"unknown synth spec key '{key}'")
        try:
            defaults[key] = converters[key](value.strip())
        except ValueError:
            raise ConfigError(f"bad value for '{key}': '{value}'") from None
    return defaults


def cmd_describe(args) -> int:
    config = _config_from_args(args, keypoints=args.keypoints)
    cloud = load_point_cloud(args.cloud, args.format)
    weights = load_weights(args.weights)
    result = describe_cloud(cloud, config, weights)
    save_descriptors(result, args.out, config, weights_hash(weights))
    print(f"{args.out}: {len(result.keypoints)} keypoints, "
          f"{result.fallback_frames} fallback frames, "
          f"{result.dropped_points} out-of-radius points")
    return 0


def cmd_register(args) -> int:
    kp_p, desc_p, header_p = load_descriptors(args.source)
    kp_q, desc_q, header_q = load_descriptors(args.target)
    corr = match_features(desc_p, kp_p, desc_q, kp_q, mode=args.mode)
    result = ransac(corr, iterations=args.iterations,
                    inlier_threshold=args.inlier_threshold, seed=args.seed)
    save_transform(result.transform, args.out_transform)
    if args.out_correspondences:
        save_correspondences(corr, args.out_correspondences)
    if args.out_report:
        report = {
            "source": {"path": args.source, "header": header_p},
            "target": {"path": args.target, "header": header_q},
            "match_mode": args.mode,
            "matches": len(corr),
            "ransac": {
                "iterations": result.iterations,
                "inlier_threshold": args.inlier_threshold,
                "seed": result.seed,
                "inlier_count": result.inlier_count,
                "best_iteration": result.best_iteration,
            },
        }
        with open(args.out_report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"{args.out_transform}: {result.inlier_count}/{len(corr)} inliers "
          f"in {result.iterations} iterations")
    return 0


def cmd_evaluate(args) -> int:
    thresholds = Thresholds(tau1=args.tau1, tau2=args.tau2, tau3=args.tau3,
                            sr_rte=args.sr_rte,
                            sr_rre=float(np.deg2rad(args.sr_rre_deg)))
    stems = sorted(name[:-7] for name in os.listdir(args.gt_dir)
                   if name.endswith(".gt.txt"))
    if not stems:
        raise FileNotFoundError(f"no *.gt.txt files in {args.gt_dir}")
    evaluations = []
    for stem in stems:
        gt_base = os.path.join(args.gt_dir, stem)
        t_gt = load_transform(gt_base + ".gt.txt")
        source = load_point_cloud(gt_base + ".source.ply")
        target = load_point_cloud(gt_base + ".target.ply")
        est_base = os.path.join(args.results_dir, stem)
        t_est = load_transform(est_base + ".est.txt")
        predicted = load_correspondences(est_base + ".corr.csv")
        gt_corr = gt_correspondences(source, target, t_gt, thresholds.tau1)
        evaluations.append(evaluate_pair(stem, predicted, gt_corr, t_est,
                                         t_gt, thresholds))
    os.makedirs(args.out_dir, exist_ok=True)
    write_pair_csv(evaluations, thresholds,
                   os.path.join(args.out_dir, "metrics.csv"))
    summary = summarize(evaluations, thresholds)
    summary["pair_ids"] = stems
    write_summary_json(summary, os.path.join(args.out_dir, "summary.json"))
    plot_registration_errors(evaluations,
                             os.path.join(args.out_dir, "metrics.png"))
    print(f"{args.out_dir}: {len(evaluations)} pairs, "
          f"FMR={summary['FMR']:.3f} RR={summary['RR']:.3f} "
          f"SR={summary['SR']:.3f}")
    return 0


def cmd_noise(args) -> int:
    spec = parse_noise_spec(args.spec)
    cloud = load_point_cloud(args.cloud, args.format)
    noisy = apply_noise(cloud, spec)
    save_point_cloud(noisy, args.out,
                     args.out_format or "ply-binary-le")
    print(f"{args.out}: {spec.kind} applied to {len(noisy)} points")
    return 0


def cmd_train(args) -> int:
    config = _config_from_args(args)
    encoder = config.encoder()
    if args.dataset_dir and args.synth:
        raise ConfigError("pass either --dataset-dir or --synth, not both")
    if args.dataset_dir:
        scenes = load_scene_dir(args.dataset_dir, tau1=config.tau1)
    elif args.synth:
        spec = _parse_synth_spec(args.synth)
        scenes = synth_pair_dataset(spec["seed"], spec["scenes"],
                                    spec["points"], spec["sigma"],
                                    spec["overlap"], tau1=config.tau1)
    else:
        raise ConfigError("training needs --dataset-dir or --synth")
    train_set = build_training_set(scenes, encoder, args.pairs_per_scene,
                                   seed=config.seed)
    val_scenes = None
    if args.val_synth:
        vspec = _parse_synth_spec(args.val_synth)
        raw = synth_pair_dataset(vspec["seed"], vspec["scenes"], vspec["points"],
                                 vspec["sigma"], vspec["overlap"],
                                 tau1=config.tau1)
        val_scenes = build_validation_set(raw, encoder, args.val_pairs_per_scene,
                                          seed=config.seed + 1)
    train_config = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                               epochs=args.epochs, margin_pos=args.margin_pos,
                               margin_neg=args.margin_neg, seed=config.seed,
                               tau1=config.tau1, tau2=config.tau2)
    weights = default_network(encoder, descriptor_dim=config.descriptor_dim,
                              seed=config.seed, arch=config.arch_config())
    result = train(train_config, train_set, weights, val_scenes=val_scenes,
                   checkpoint_every=args.checkpoint_every,
                   checkpoint_dir=args.checkpoint_dir)
    save_weights(result.weights, args.out_weights)
    if args.out_log:
        write_training_log(result.log, args.out_log)
    if args.out_plot:
        plot_training_log(result.log, args.out_plot)
    first, last = result.log[0], result.log[-1]
    print(f"{args.out_weights}: {len(train_set)} pairs, "
          f"loss {first.mean_loss:.4f} -> {last.mean_loss:.4f}, "
          f"weights {weights_hash(result.weights)[:12]}")
    return 0


def cmd_bench(args) -> int:
    config = _config_from_args(args)
    if args.suite == "invariance":
        summary = bench_invariance(args.out_dir, config, seed=args.bench_seed,
                                   n_patches=args.pairs)
        ok = (summary["rotation_invariant"] and summary["shift_invariant"]
              and summary["zero_padding_breaks_equivariance"])
        print(f"{args.out_dir}: rotation residual "
              f"{summary['max_rotation_residual']:.2e}, shift residual "
              f"{summary['max_shift_residual']:.2e} "
              f"[{'ok' if ok else 'FAIL'}]")
        return 0 if ok else 1
    if args.weights is None:
        raise ConfigError(f"suite '{args.suite}' requires --weights")
    weights = load_weights(args.weights)
    if args.suite == "noise-robustness":
        summary = bench_noise(args.out_dir, weights, config,
                              seed=args.bench_seed, n_pairs=args.pairs,
                              points=args.points,
                              ransac_iterations=args.ransac_iterations,
                              compare_seeds=args.compare_seeds)
        print(f"{args.out_dir}: FMR sweep "
              + " ".join(f"{row['FMR']:.2f}" for row in summary["sweep"])
              + f", monotone={summary['fmr_non_increasing']}")
        return 0
    summary = bench_registration(args.out_dir, weights, config,
                                 seed=args.bench_seed, n_pairs=args.pairs,
                                 points=args.points,
                                 ransac_iterations=args.ransac_iterations)
    print(f"{args.out_dir}: RR={summary['RR']:.3f} "
          f"medRRE={summary['median_RRE_deg']:.3f}deg "
          f"medRTE={summary['median_RTE']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spherereg",
        description="Spherical-voxel descriptors and point-cloud registration")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("describe", help="extract keypoint descriptors")
    _add_config_flags(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--format", choices=("ply-ascii", "ply-binary-le", "xyz-text"))
    p.add_argument("--weights", required=True)
    p.add_argument("--keypoints", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_describe)

    p = subs.add_parser("register", help="estimate a rigid transform")
    p.add_argument("--source", required=True, help="source descriptor file")
    p.add_argument("--target", required=True, help="target descriptor file")
    p.add_argument("--mode", choices=("nn", "mutual"), default="mutual")
    p.add_argument("--iterations", type=int, default=50000)
    p.add_argument("--inlier-threshold", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-transform", required=True)
    p.add_argument("--out-correspondences")
    p.add_argument("--out-report")
    p.set_defaults(func=cmd_register)

    p = subs.add_parser("evaluate", help="score estimates against ground truth")
    p.add_argument("--results-dir", required=True,
                   help="directory of <id>.est.txt and <id>.corr.csv")
    p.add_argument("--gt-dir", required=True,
                   help="directory of <id>.gt.txt, <id>.source.ply, "
                        "<id>.target.ply")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tau1", type=float, default=0.1)
    p.add_argument("--tau2", type=float, default=0.05)
    p.add_argument("--tau3", type=float, default=0.2)
    p.add_argument("--sr-rte", type=float, default=2.0)
    p.add_argument("--sr-rre-deg", type=float, default=5.0)
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("noise", help="corrupt a point cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--format", choices=("ply-ascii", "ply-binary-le", "xyz-text"))
    p.add_argument("--spec", required=True,
                   help="e.g. kind=gaussian_clipped,sigma=0.05,clip=0.05,seed=7")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format",
                   choices=("ply-ascii", "ply-binary-le", "xyz-text"))
    p.set_defaults(func=cmd_noise)

    p = subs.add_parser("train", help="train descriptor weights")
    _add_config_flags(p)
    p.add_argument("--synth",
                   help="synthetic dataset spec, e.g. "
                        "scenes=10,points=4000,sigma=0.01,overlap=0.7,seed=10")
    p.add_argument("--dataset-dir", help="directory written by save_scene_dir")
    p.add_argument("--val-synth", help="validation dataset spec")
    p.add_argument("--pairs-per-scene", type=int, default=200)
    p.add_argument("--val-pairs-per-scene", type=int, default=50)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--margin-pos", type=float, default=0.1)
    p.add_argument("--margin-neg", type=float, default=1.4)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--out-weights", required=True)
    p.add_argument("--out-log")
    p.add_argument("--out-plot")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("bench", help="run a packaged benchmark suite")
    _add_config_flags(p)
    p.add_argument("--suite", required=True, choices=SUITES)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--weights")
    p.add_argument("--bench-seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=8)
    p.add_argument("--points", type=int, default=5000)
    p.add_argument("--ransac-iterations", type=int, default=2000)
    p.add_argument("--compare-seeds", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SphereRegError as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
