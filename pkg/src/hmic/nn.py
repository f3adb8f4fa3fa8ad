"""Float64 conv-net primitives with explicit backward passes.

Every forward function returns (output, cache); the matching backward takes
the upstream gradient and the cache and returns input/parameter gradients.
Kept deliberately small so every gradient can be finite-difference checked.
"""

from __future__ import annotations

import numpy as np

_WIN = np.lib.stride_tricks.sliding_window_view


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 stride-1 convolution with same padding.

    x: (B, C, H, W), w: (O, C, 3, 3), b: (O,) -> out (B, O, H, W).
    """
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = _WIN(padded, (3, 3), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", windows, w, optimize=True)
    out += b[None, :, None, None]
    return out, (x, w)


def conv2d_backward(dout: np.ndarray, cache):
    x, w = cache
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = _WIN(padded, (3, 3), axis=(2, 3))
    dw = np.einsum("bchwij,bohw->ocij", windows, dout, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    dout_padded = np.pad(dout, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dout_windows = _WIN(dout_padded, (3, 3), axis=(2, 3))
    flipped = w[:, :, ::-1, ::-1]
    dx = np.einsum("bohwij,ocij->bchw", dout_windows, flipped, optimize=True)
    return dx, dw, db


def channel_scale(x: np.ndarray, gain: np.ndarray):
    """Per-channel learnable gain (normalization-free stand-in for batch norm)."""
    return x * gain[None, :, None, None], (x, gain)


def channel_scale_backward(dout: np.ndarray, cache):
    x, gain = cache
    dx = dout * gain[None, :, None, None]
    dgain = (dout * x).sum(axis=(0, 2, 3))
    return dx, dgain


def relu(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_backward(dout: np.ndarray, mask):
    return dout * mask


def avg_pool2(x: np.ndarray):
    """2x2 average pooling, stride 2. Trailing odd rows/columns are dropped."""
    B, C, H, W = x.shape
    H2, W2 = H // 2, W // 2
    if H2 < 1 or W2 < 1:
        raise ValueError(f"input too small to pool: {x.shape}")
    cropped = x[:, :, : 2 * H2, : 2 * W2]
    out = cropped.reshape(B, C, H2, 2, W2, 2).mean(axis=(3, 5))
    return out, (H, W)


def avg_pool2_backward(dout: np.ndarray, cache):
    H, W = cache
    B, C, H2, W2 = dout.shape
    dx = np.zeros((B, C, H, W), dtype=dout.dtype)
    spread = np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) / 4.0
    dx[:, :, : 2 * H2, : 2 * W2] = spread
    return dx


def global_avg_pool(x: np.ndarray):
    """(B, C, H, W) -> (B, C)."""
    B, C, H, W = x.shape
    return x.mean(axis=(2, 3)), (H, W)


def global_avg_pool_backward(dout: np.ndarray, cache):
    H, W = cache
    return dout[:, :, None, None] * np.ones((1, 1, H, W), dtype=dout.dtype) / (H * W)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (B, D), w: (K, D), b: (K,) -> (B, K)."""
    return x @ w.T + b, (x, w)


def linear_backward(dout: np.ndarray, cache):
    x, w = cache
    dx = dout @ w
    dw = dout.T @ x
    db = dout.sum(axis=0)
    return dx, dw, db


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch, with the gradient wrt logits.

    Returns (loss, dlogits); dlogits already includes the 1/B factor.
    """
    labels = np.asarray(labels)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {B}")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"label out of range [0, {K}): {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = float(-log_probs[np.arange(B), labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    return loss, dlogits
