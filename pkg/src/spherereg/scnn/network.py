"""Descriptor network: padded spherical convolutions, pooling, projection.

The forward path is pad -> conv -> leaky rectifier per layer, then an
azimuth max pool (rotation invariance), a global spatial max pool, a linear
projection to the descriptor dimension and L2 normalization. All gradients
are analytic; no autodiff framework is involved.
"""

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError
from ..spherevox import FeatureGrid
from . import layers as L

_NORM_EPS = 1e-30


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: tuple = (3, 3, 3)
    stride: tuple = (1, 1)
    activation: bool = True


@dataclass(frozen=True)
class ArchConfig:
    """Layer plan; ``padding`` is 'spherical' or 'zero' (ablation only)."""

    conv_layers: tuple
    descriptor_dim: int = 32
    padding: str = "spherical"
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.padding not in ("spherical", "zero"):
            raise ConfigError(f"unknown padding '{self.padding}'")
        for spec in self.conv_layers:
            if self.padding == "spherical" and spec.kernel[2] % 2 == 0:
                raise ConfigError("azimuth kernel size must be odd with "
                                  "spherical padding")

    @staticmethod
    def desk(grid_shape, descriptor_dim: int = 32,
             padding: str = "spherical") -> "ArchConfig":
        """Small two-layer network sized to the given (C, N, M, K) grid."""
        _, n, m, _ = grid_shape
        specs = []
        for out_ch in (16, 32):
            a, b = min(3, n), min(3, m)
            specs.append(ConvSpec(out_ch, kernel=(a, b, 3)))
            n, m = n - a + 1, m - b + 1
        return ArchConfig(conv_layers=tuple(specs),
                          descriptor_dim=descriptor_dim, padding=padding)

    @staticmethod
    def full(grid_shape, descriptor_dim: int = 32,
             padding: str = "spherical") -> "ArchConfig":
        """Four-layer network sized to the given (C, N, M, K) grid.

        Channels 32-64-64-128 with a 2x elevation stride at the third layer;
        kernels shrink along radial/elevation when the map becomes too small.
        """
        _, n, m, _ = grid_shape
        specs = []
        for i, out_ch in enumerate((32, 64, 64, 128)):
            a, b = min(3, n), min(3, m)
            se = 2 if i == 2 and (m - b) >= 2 else 1
            specs.append(ConvSpec(out_ch, kernel=(a, b, 3), stride=(1, se)))
            n = n - a + 1
            m = (m - b) // se + 1
        return ArchConfig(conv_layers=tuple(specs),
                          descriptor_dim=descriptor_dim, padding=padding)

    def chain_shapes(self, grid_shape):
        """Feature-map shapes after each layer; raises if they collapse."""
        ch, n, m, k = grid_shape
        shapes = [(ch, n, m, k)]
        for i, spec in enumerate(self.conv_layers):
            a, b, c = spec.kernel
            if c // 2 > k:
                raise ConfigError(f"layer {i}: azimuth padding {c // 2} exceeds "
                                  f"azimuth size {k}")
            n = n - a + 1
            m = (m - b) // spec.stride[1] + 1
            if n < 1 or m < 1:
                raise ConfigError(
                    f"layer {i} reduces the map to {(n, m)}; "
                    f"architecture does not chain for grid {grid_shape}")
            ch = spec.out_channels
            shapes.append((ch, n, m, k))
        return shapes


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (out_ch, in_ch, a, b, c)
    bias: np.ndarray
    stride: tuple = (1, 1)
    activation: bool = True


@dataclass
class NetworkWeights:
    """All learnable parameters plus the metadata to rebuild the network."""

    layers: list
    proj_weight: np.ndarray
    proj_bias: np.ndarray
    arch: ArchConfig
    input_shape: tuple  # (channels, radial, elevation, azimuth)
    seed: int = 0

    def param_arrays(self):
        arrays = []
        for layer in self.layers:
            arrays.extend([layer.kernel, layer.bias])
        arrays.extend([self.proj_weight, self.proj_bias])
        return arrays

    def with_params(self, arrays) -> "NetworkWeights":
        expected = 2 * len(self.layers) + 2
        if len(arrays) != expected:
            raise ValueError(f"expected {expected} arrays, got {len(arrays)}")
        new_layers = [replace(layer, kernel=arrays[2 * i], bias=arrays[2 * i + 1])
                      for i, layer in enumerate(self.layers)]
        return replace(self, layers=new_layers,
                       proj_weight=arrays[-2], proj_bias=arrays[-1])

    def num_params(self) -> int:
        return int(sum(a.size for a in self.param_arrays()))


def init_weights(seed: int, arch: ArchConfig, grid_shape) -> NetworkWeights:
    """Fan-in-scaled uniform initialization, reproducible from the seed."""
    shapes = arch.chain_shapes(grid_shape)
    rng = np.random.default_rng(seed)
    conv_layers = []
    for spec, (in_ch, *_rest) in zip(arch.conv_layers, shapes[:-1]):
        a, b, c = spec.kernel
        bound = 1.0 / np.sqrt(in_ch * a * b * c)
        kernel = rng.uniform(-bound, bound, (spec.out_channels, in_ch, a, b, c))
        bias = rng.uniform(-bound, bound, spec.out_channels)
        conv_layers.append(ConvLayer(kernel, bias, spec.stride, spec.activation))
    feat_dim = shapes[-1][0]
    bound = 1.0 / np.sqrt(feat_dim)
    proj_w = rng.uniform(-bound, bound, (arch.descriptor_dim, feat_dim))
    proj_b = rng.uniform(-bound, bound, arch.descriptor_dim)
    return NetworkWeights(conv_layers, proj_w, proj_b, arch,
                          tuple(grid_shape), seed)


def _grid_values(grid):
    values = grid.values if isinstance(grid, FeatureGrid) else np.asarray(grid)
    if values.ndim != 4:
        raise ValueError(f"expected a (C, N, M, K) grid, got shape {values.shape}")
    return values


def forward_batch(batch: np.ndarray, w: NetworkWeights, want_cache: bool = False):
    """Descriptors for a (B, C, N, M, K) stack of grids."""
    if batch.ndim != 5:
        raise ValueError(f"expected (B, C, N, M, K) input, got {batch.shape}")
    if tuple(batch.shape[1:]) != tuple(w.input_shape):
        raise ValueError(f"grid shape {batch.shape[1:]} does not match "
                         f"network input {w.input_shape}")
    pad_fn = L.pad_spherical if w.arch.padding == "spherical" else L.pad_zero
    x = np.asarray(batch, dtype=np.float64)
    cache = []
    for layer in w.layers:
        pad = layer.kernel.shape[-1] // 2
        xp = pad_fn(x, pad)
        pre, cols = L.conv3d_forward(xp, layer.kernel, layer.bias, layer.stride)
        x = L.leaky_relu(pre, w.arch.leaky_slope) if layer.activation else pre
        if want_cache:
            cache.append((xp.shape, pad, cols, pre))
        else:
            cache.append(None)
    pooled = L.azimuth_max_pool(x)
    feats, sp_idx = L.global_max_pool(pooled)
    v = feats @ w.proj_weight.T + w.proj_bias
    norms = np.sqrt((v * v).sum(axis=1))
    desc = v / np.maximum(norms, _NORM_EPS)[:, None]
    state = (x, pooled, sp_idx, feats, v, norms, desc, cache) if want_cache else None
    return desc, state


def backward_batch(state, w: NetworkWeights, grad_desc: np.ndarray):
    """Parameter gradients (summed over the batch) and input gradients."""
    x, pooled, sp_idx, feats, v, norms, desc, cache = state
    safe = np.maximum(norms, _NORM_EPS)[:, None]
    # d/dv of v/||v||: remove the component along the normalized output
    dv = (grad_desc - desc * (desc * grad_desc).sum(axis=1, keepdims=True)) / safe
    grad_proj_w = dv.T @ feats
    grad_proj_b = dv.sum(axis=0)
    dfeats = dv @ w.proj_weight
    dpooled = L.global_max_pool_backward(dfeats, pooled.shape, sp_idx)
    dx = L.azimuth_max_pool_backward(dpooled, x)
    pad_back = (L.pad_spherical_backward if w.arch.padding == "spherical"
                else L.pad_zero_backward)
    param_grads = [None] * (2 * len(w.layers)) + [grad_proj_w, grad_proj_b]
    for i in range(len(w.layers) - 1, -1, -1):
        layer = w.layers[i]
        xp_shape, pad, cols, pre = cache[i]
        dpre = (L.leaky_relu_backward(dx, pre, w.arch.leaky_slope)
                if layer.activation else dx)
        gk, gb, dxp = L.conv3d_backward(dpre, cols, layer.kernel, xp_shape,
                                        layer.stride)
        param_grads[2 * i] = gk
        param_grads[2 * i + 1] = gb
        dx = pad_back(dxp, pad)
    return param_grads, dx


def forward(grid, w: NetworkWeights) -> np.ndarray:
    """Unit-norm descriptor of a single FeatureGrid (or raw 4-d array)."""
    desc, _ = forward_batch(_grid_values(grid)[None], w)
    return desc[0]


def backward(grid, w: NetworkWeights, grad_desc: np.ndarray):
    """Gradients of (grad_desc . descriptor) for every parameter and the input."""
    values = _grid_values(grid)
    _, state = forward_batch(values[None], w, want_cache=True)
    param_grads, dgrid = backward_batch(state, w, np.asarray(grad_desc)[None])
    return param_grads, dgrid[0]
