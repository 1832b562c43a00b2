"""Pure-numpy convolution kernels (im2col windows + tensordot)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad_hw(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    xpad = _pad_hw(x, pad, pad)
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))  # (B,IC,OH,OW,kh,kw)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (B,OH,OW,OC)
    y = np.ascontiguousarray(np.moveaxis(y, 3, 1))
    y += b[None, :, None, None]
    return y


def conv2d_grad_input(
    dy: np.ndarray, w: np.ndarray, pad: int, in_hw: tuple[int, int]
) -> np.ndarray:
    # full correlation of dy with the spatially flipped, channel-transposed kernel
    kh, kw = w.shape[2], w.shape[3]
    wrot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dypad = _pad_hw(dy, kh - 1 - pad, kw - 1 - pad)
    win = sliding_window_view(dypad, (kh, kw), axis=(2, 3))
    dx = np.tensordot(win, wrot, axes=([1, 4, 5], [1, 2, 3]))
    dx = np.ascontiguousarray(np.moveaxis(dx, 3, 1))
    assert dx.shape[2:] == tuple(in_hw)
    return dx


def conv2d_grad_params(
    x: np.ndarray, dy: np.ndarray, pad: int
) -> tuple[np.ndarray, np.ndarray]:
    oh, ow = dy.shape[2], dy.shape[3]
    xpad = _pad_hw(x, pad, pad)
    win = sliding_window_view(xpad, (oh, ow), axis=(2, 3))  # (B,IC,kh,kw,OH,OW)
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 4, 5]))  # (OC,IC,kh,kw)
    db = dy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dw), db
