"""Convolution, padding, pooling and their reverse-mode gradients.

Feature maps are numpy arrays of shape (batch, channels, radial, elevation,
azimuth). Convolution is valid (no padding) along radial and elevation and
expects the azimuth axis to be pre-padded; with circular padding the azimuth
extent is preserved and the layer commutes with azimuth rotation.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def pad_spherical(t: np.ndarray, pad: int) -> np.ndarray:
    """Circular padding along azimuth: the seam sees the opposite boundary."""
    if pad < 0:
        raise ValueError("pad must be non-negative")
    if pad > t.shape[-1]:
        raise ValueError(f"pad {pad} exceeds azimuth size {t.shape[-1]}")
    if pad == 0:
        return t.copy()
    return np.concatenate([t[..., -pad:], t, t[..., :pad]], axis=-1)


def pad_spherical_backward(grad: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return grad.copy()
    core = grad[..., pad:-pad].copy()
    core[..., -pad:] += grad[..., :pad]
    core[..., :pad] += grad[..., -pad:]
    return core


def pad_zero(t: np.ndarray, pad: int) -> np.ndarray:
    """Azimuth zero padding; ablation stand-in for pad_spherical."""
    if pad < 0:
        raise ValueError("pad must be non-negative")
    if pad == 0:
        return t.copy()
    width = [(0, 0)] * (t.ndim - 1) + [(pad, pad)]
    return np.pad(t, width)


def pad_zero_backward(grad: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return grad.copy()
    return grad[..., pad:-pad].copy()


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_backward(grad: np.ndarray, x: np.ndarray, slope: float) -> np.ndarray:
    return grad * np.where(x > 0.0, 1.0, slope)


def conv3d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                   stride=(1, 1)):
    """Valid 3-d correlation over (radial, elevation, azimuth).

    x: (B, D, n, m, k); kernel: (E, D, a, b, c); bias: (E,).
    Returns (out, cols) where cols is the flattened window matrix kept for
    the backward pass. Strides apply to radial and elevation only.
    """
    B, D, n, m, k = x.shape
    E, D2, a, b, c = kernel.shape
    if D != D2:
        raise ValueError(f"input has {D} channels, kernel expects {D2}")
    if a > n or b > m or c > k:
        raise ValueError(f"kernel {kernel.shape[2:]} larger than input {(n, m, k)}")
    sr, se = stride
    windows = sliding_window_view(x, (a, b, c), axis=(2, 3, 4))
    windows = windows[:, :, ::sr, ::se, :]
    no, mo, ko = windows.shape[2:5]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 4, 1, 5, 6, 7))
    cols = cols.reshape(B * no * mo * ko, D * a * b * c)
    out = cols @ kernel.reshape(E, -1).T
    out += bias
    return out.reshape(B, no, mo, ko, E).transpose(0, 4, 1, 2, 3), cols


def conv3d_backward(grad_out: np.ndarray, cols: np.ndarray, kernel: np.ndarray,
                    x_shape, stride=(1, 1)):
    """Gradients of conv3d_forward w.r.t. kernel, bias and input."""
    B, E, no, mo, ko = grad_out.shape
    _, D, n, m, k = x_shape
    a, b, c = kernel.shape[2:]
    sr, se = stride
    g = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 4, 1)).reshape(-1, E)
    grad_bias = g.sum(axis=0)
    grad_kernel = (g.T @ cols).reshape(kernel.shape)
    # col2im: scatter per kernel offset; dcols stays in (positions, window)
    # layout so the GEMM output is read back without a full transpose copy
    dcols = (g @ kernel.reshape(E, -1)).reshape(B, no, mo, ko, D, a, b, c)
    grad_x = np.zeros(x_shape)
    dst = grad_x.transpose(0, 2, 3, 4, 1)  # (B, n, m, k, D) view
    for ai in range(a):
        for bi in range(b):
            for ci in range(c):
                dst[:, ai:ai + no * sr:sr, bi:bi + mo * se:se,
                    ci:ci + ko] += dcols[:, :, :, :, :, ai, bi, ci]
    return grad_kernel, grad_bias, grad_x


def azimuth_max_pool(t: np.ndarray) -> np.ndarray:
    """Elementwise max over the azimuth axis; invariant to azimuth rotation."""
    return t.max(axis=-1)


def azimuth_max_pool_backward(grad: np.ndarray, t: np.ndarray) -> np.ndarray:
    # subgradient at ties goes to the first maximal index
    idx = t.argmax(axis=-1)
    out = np.zeros_like(t)
    np.put_along_axis(out, idx[..., None], grad[..., None], axis=-1)
    return out


def global_max_pool(t: np.ndarray):
    """Max over all spatial axes of (B, E, ...); returns (values, flat argmax)."""
    flat = t.reshape(t.shape[0], t.shape[1], -1)
    idx = flat.argmax(axis=-1)
    return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], idx


def global_max_pool_backward(grad: np.ndarray, t_shape, idx: np.ndarray) -> np.ndarray:
    out = np.zeros(t_shape).reshape(t_shape[0], t_shape[1], -1)
    np.put_along_axis(out, idx[..., None], grad[..., None], axis=-1)
    return out.reshape(t_shape)
