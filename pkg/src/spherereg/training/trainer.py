"""Metric-learning loop over synthetic correspondence patches.

Patch grids are static, so they are voxelized once up front; an epoch is
then pure network work: batched forward on both sides of each pair, the
hardest-in-batch contrastive loss, analytic backward, one Adam step. The
learning rate halves every lr_halve_every epochs. Model selection keeps
the weights with the best validation feature-matching recall (later epoch
wins ties).
"""

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ..evalmetrics import fmr
from ..pipeline import EncoderConfig, descriptors_for_grids, grids_for_patches
from ..registration import match_features
from ..scnn import ArchConfig, NetworkWeights, backward_batch, forward_batch, init_weights
from ..scnn.weights_io import save_checkpoint
from .loss import contrastive_loss
from .optim import AdamState, adam_step
from .synth import extract_patch_pairs


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    lr_halve_every: int = 5
    batch_size: int = 64
    epochs: int = 30
    margin_pos: float = 0.1
    margin_neg: float = 1.4
    seed: int = 0
    tau1: float = 0.1
    tau2: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.margin_pos < self.margin_neg:
            raise ValueError("margins must satisfy 0 <= margin_pos < margin_neg")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 1 or self.lr_halve_every < 1:
            raise ValueError("epochs and lr_halve_every must be positive")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * 0.5 ** (epoch // self.lr_halve_every)


@dataclass
class PatchPairSet:
    """Pre-voxelized corresponding patch grids."""

    grids_p: np.ndarray
    grids_q: np.ndarray

    def __len__(self):
        return len(self.grids_p)


@dataclass
class ValidationScene:
    grids_p: np.ndarray
    grids_q: np.ndarray
    centers_p: np.ndarray
    centers_q: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    val_fmr: float
    wall_seconds: float


@dataclass
class TrainResult:
    weights: NetworkWeights       # best validation FMR (last weights if no val)
    final_weights: NetworkWeights
    log: list = field(default_factory=list)


def build_training_set(scenes, encoder: EncoderConfig, pairs_per_scene: int,
                       seed: int, min_points: int = 12) -> PatchPairSet:
    patches_p, patches_q = [], []
    for i, scene in enumerate(scenes):
        pp, qq = extract_patch_pairs(scene, encoder.params.radius,
                                     pairs_per_scene, seed=seed + 7919 * i,
                                     min_points=min_points)
        patches_p.extend(pp)
        patches_q.extend(qq)
    if not patches_p:
        raise ValueError("no usable patch pairs extracted from the dataset")
    grids_p, _, _ = grids_for_patches(patches_p, encoder)
    grids_q, _, _ = grids_for_patches(patches_q, encoder)
    return PatchPairSet(grids_p, grids_q)


def build_validation_set(scenes, encoder: EncoderConfig, pairs_per_scene: int,
                         seed: int, min_points: int = 12):
    out = []
    for i, scene in enumerate(scenes):
        pp, qq = extract_patch_pairs(scene, encoder.params.radius,
                                     pairs_per_scene, seed=seed + 104729 * i,
                                     min_points=min_points)
        if len(pp) < 2:
            continue
        grids_p, _, _ = grids_for_patches(pp, encoder)
        grids_q, _, _ = grids_for_patches(qq, encoder)
        out.append(ValidationScene(
            grids_p, grids_q,
            centers_p=np.stack([p.center for p in pp]),
            centers_q=np.stack([q.center for q in qq]),
            rotation=scene.transform.rotation,
            translation=scene.transform.translation))
    return out


def validation_fmr(weights: NetworkWeights, scenes, tau1: float,
                   tau2: float) -> float:
    """FMR over validation scenes: match patch descriptors, check the
    matched centers against the ground-truth motion."""
    if not scenes:
        return float("nan")
    ratios = []
    for scene in scenes:
        desc_p = descriptors_for_grids(scene.grids_p, weights)
        desc_q = descriptors_for_grids(scene.grids_q, weights)
        corr = match_features(desc_p, scene.centers_p, desc_q, scene.centers_q,
                              mode="nn")
        moved = corr.source_points @ scene.rotation.T + scene.translation
        dist = np.linalg.norm(moved - corr.target_points, axis=1)
        ratios.append(float(np.mean(dist < tau1)))
    return fmr(ratios, tau2)


def train(config: TrainConfig, dataset: PatchPairSet, weights: NetworkWeights,
          val_scenes=None, log_path=None, checkpoint_every: int = 0,
          checkpoint_dir=None) -> TrainResult:
    """Run the optimization; see the module docstring for the protocol."""
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    params = [p.copy() for p in weights.param_arrays()]
    weights = weights.with_params(params)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.seed)
    log = []
    best_fmr = -np.inf
    best_weights = weights
    for epoch in range(config.epochs):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        order = rng.permutation(len(dataset))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            chunk = order[lo:lo + config.batch_size]
            if len(chunk) < 2:
                continue  # a single pair has no in-batch negatives
            desc_p, cache_p = forward_batch(dataset.grids_p[chunk], weights,
                                            want_cache=True)
            desc_q, cache_q = forward_batch(dataset.grids_q[chunk], weights,
                                            want_cache=True)
            loss, grad_p, grad_q = contrastive_loss(
                desc_p, desc_q, config.margin_pos, config.margin_neg)
            gp, _ = backward_batch(cache_p, weights, grad_p)
            gq, _ = backward_batch(cache_q, weights, grad_q)
            grads = [a + b for a, b in zip(gp, gq)]
            params, state = adam_step(params, grads, state, lr)
            weights = weights.with_params(params)
            losses.append(loss)
        val = validation_fmr(weights, val_scenes, config.tau1, config.tau2) \
            if val_scenes else float("nan")
        log.append(EpochStats(epoch=epoch, lr=lr,
                              mean_loss=float(np.mean(losses)) if losses else 0.0,
                              val_fmr=val,
                              wall_seconds=time.perf_counter() - start))
        if val_scenes and val >= best_fmr:
            best_fmr = val
            best_weights = weights
        if checkpoint_every and checkpoint_dir is not None \
                and (epoch + 1) % checkpoint_every == 0:
            save_checkpoint(weights, state,
                            os.path.join(checkpoint_dir,
                                         f"checkpoint_epoch{epoch:03d}.snck"))
    if log_path is not None:
        write_training_log(log, log_path)
    return TrainResult(weights=best_weights if val_scenes else weights,
                       final_weights=weights, log=log)


def write_training_log(log, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "mean_loss", "val_FMR", "wall_seconds"])
        for row in log:
            writer.writerow([row.epoch, f"{row.lr:.17g}",
                             f"{row.mean_loss:.17g}", f"{row.val_fmr:.17g}",
                             f"{row.wall_seconds:.3f}"])


def default_network(encoder: EncoderConfig, descriptor_dim: int = 32,
                    seed: int = 0, arch: ArchConfig = None) -> NetworkWeights:
    if arch is None:
        arch = ArchConfig.desk(encoder.grid_shape(), descriptor_dim)
    return init_weights(seed, arch, encoder.grid_shape())
