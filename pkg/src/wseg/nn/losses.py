"""Training losses. Each returns (scalar loss, gradient wrt the logits)."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, computed piecewise to avoid exp overflow."""
    out = np.empty_like(x, dtype=np.result_type(x.dtype, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error between sigmoid(pred) and target, over all elements."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    s = sigmoid(pred)
    diff = s - target.astype(s.dtype, copy=False)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff * s * (1.0 - s)
    return loss, grad.astype(pred.dtype, copy=False)


def softmax_ce(
    logits: np.ndarray, labels: np.ndarray, pos_weight: float = 1.0
) -> tuple[float, np.ndarray]:
    """Pixelwise 2-class softmax cross-entropy.

    Channel 0 is background, channel 1 is wrinkle. Wrinkle-pixel terms are
    multiplied by pos_weight and the mean is taken over the summed weights,
    so the gradient is (softmax - onehot) * weight / sum(weights).
    """
    if logits.ndim != 4 or logits.shape[1] != 2:
        raise ShapeError(f"expected (B, 2, H, W) logits, got {logits.shape}")
    b, _, h, w = logits.shape
    if labels.shape != (b, h, w):
        raise ShapeError(
            f"labels shape {labels.shape} incompatible with logits {logits.shape}"
        )
    y = labels.astype(np.int64)
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(denom)
    p = ez / denom

    weights = np.where(y == 1, pos_weight, 1.0)
    nll = -np.take_along_axis(logp, y[:, None], axis=1)[:, 0]
    total_w = float(weights.sum())
    loss = float((weights * nll).sum() / total_w)

    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, y[:, None], 1.0, axis=1)
    grad = (p - onehot) * weights[:, None] / total_w
    return loss, grad.astype(logits.dtype, copy=False)
