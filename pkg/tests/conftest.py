"""Shared fixtures: the desk-scale training run used by the acceptance suite.

Training takes a few minutes, so it runs once per session and its products
(weights, log) feed every desk-scale criterion.
"""

import time
from dataclasses import dataclass

import pytest

from spherereg.pipeline import EncoderConfig, PipelineConfig
from spherereg.spherevox import VoxelParams
from spherereg.training import (TrainConfig, build_training_set,
                                build_validation_set, default_network,
                                synth_pair_dataset, train)

# Desk-scale configuration: scene scale 3 units, patch radius 0.6, a
# 9x8x12 voxel grid (radial bins comparable to the benchmark noise), and
# a 32-dim descriptor from the small two-layer network.
DESK = dict(n=9, m=8, k=12, radius=0.6, descriptor_dim=32)
DESK_TRAIN_SEEDS = dict(scenes=10, val=99, patches=1, val_patches=2,
                        network=5, loop=3)
DESK_TRAIN_SIGMA = 0.005
DESK_MARGIN_NEG = 0.95
DESK_MIN_PATCH_POINTS = 24


def desk_pipeline_config(**overrides) -> PipelineConfig:
    merged = dict(DESK)
    merged.update(overrides)
    return PipelineConfig(**merged)


@dataclass
class DeskRun:
    weights: object
    log: list
    encoder: EncoderConfig
    train_seconds: float


@pytest.fixture(scope="session")
def desk_run() -> DeskRun:
    """30-epoch training on ~2k synthetic patch pairs (the desk-scale run)."""
    start = time.perf_counter()
    encoder = EncoderConfig(VoxelParams(DESK["n"], DESK["m"], DESK["k"],
                                        DESK["radius"]))
    train_scenes = synth_pair_dataset(seed=DESK_TRAIN_SEEDS["scenes"],
                                      scene_count=10, points_per_scene=5000,
                                      noise_sigma=DESK_TRAIN_SIGMA,
                                      overlap_fraction=0.7)
    val_scenes = synth_pair_dataset(seed=DESK_TRAIN_SEEDS["val"],
                                    scene_count=4, points_per_scene=5000,
                                    noise_sigma=0.05, overlap_fraction=0.5)
    dataset = build_training_set(train_scenes, encoder, pairs_per_scene=200,
                                 seed=DESK_TRAIN_SEEDS["patches"],
                                 min_points=DESK_MIN_PATCH_POINTS)
    validation = build_validation_set(val_scenes, encoder, pairs_per_scene=50,
                                      seed=DESK_TRAIN_SEEDS["val_patches"])
    weights0 = default_network(encoder, descriptor_dim=DESK["descriptor_dim"],
                               seed=DESK_TRAIN_SEEDS["network"])
    config = TrainConfig(epochs=30, seed=DESK_TRAIN_SEEDS["loop"],
                         margin_neg=DESK_MARGIN_NEG)
    result = train(config, dataset, weights0, val_scenes=validation)
    return DeskRun(weights=result.weights, log=result.log, encoder=encoder,
                   train_seconds=time.perf_counter() - start)
