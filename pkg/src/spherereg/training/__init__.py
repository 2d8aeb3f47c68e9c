from .loss import contrastive_loss
from .optim import AdamState, adam_step
from .synth import (ScenePair, extract_patch_pairs, random_surface_patch,
                    rotate_patch, synth_pair_dataset)
from .trainer import (EpochStats, PatchPairSet, TrainConfig, TrainResult,
                      build_training_set, build_validation_set,
                      default_network, train, validation_fmr,
                      write_training_log)

__all__ = [
    "AdamState", "EpochStats", "PatchPairSet", "ScenePair", "TrainConfig",
    "TrainResult", "adam_step", "build_training_set", "build_validation_set",
    "contrastive_loss", "default_network", "extract_patch_pairs",
    "random_surface_patch", "rotate_patch", "synth_pair_dataset", "train",
    "validation_fmr", "write_training_log",
]
