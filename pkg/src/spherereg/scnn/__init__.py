from .layers import (azimuth_max_pool, conv3d_backward, conv3d_forward,
                     pad_spherical, pad_zero)
from .network import (ArchConfig, ConvLayer, ConvSpec, NetworkWeights,
                      backward, backward_batch, forward, forward_batch,
                      init_weights)
from .weights_io import (load_checkpoint, load_weights, save_checkpoint,
                         save_weights, serialize_weights, weights_hash)

__all__ = [
    "ArchConfig", "ConvLayer", "ConvSpec", "NetworkWeights",
    "azimuth_max_pool", "backward", "backward_batch", "conv3d_backward",
    "conv3d_forward", "forward", "forward_batch", "init_weights",
    "load_checkpoint", "load_weights", "pad_spherical", "pad_zero",
    "save_checkpoint", "save_weights", "serialize_weights", "weights_hash",
]
