"""Numba-jitted convolution kernels.

Loop nests keep a fixed accumulation order per output element, so results
are bit-reproducible run to run. fastmath stays off for the same reason.
The innermost loops run over the contiguous width axis and vectorize.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def _pad_hw(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return np.ascontiguousarray(a)
    return np.pad(a, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


@njit(cache=True)
def _correlate(xpad, w, b, out):
    nb, _, _, _ = xpad.shape
    oc_n, ic_n, kh, kw = w.shape
    oh_n, ow_n = out.shape[2], out.shape[3]
    for bi in range(nb):
        for oc in range(oc_n):
            for oh in range(oh_n):
                row = out[bi, oc, oh]
                for ow in range(ow_n):
                    row[ow] = b[oc]
            for ic in range(ic_n):
                for u in range(kh):
                    for v in range(kw):
                        wv = w[oc, ic, u, v]
                        for oh in range(oh_n):
                            xrow = xpad[bi, ic, oh + u]
                            orow = out[bi, oc, oh]
                            for ow in range(ow_n):
                                orow[ow] += wv * xrow[ow + v]


@njit(cache=True)
def _grad_params(xpad, dy, dw, db):
    nb, oc_n, oh_n, ow_n = dy.shape
    _, ic_n, kh, kw = dw.shape
    for oc in range(oc_n):
        for bi in range(nb):
            for oh in range(oh_n):
                drow = dy[bi, oc, oh]
                s = 0.0
                for ow in range(ow_n):
                    s += drow[ow]
                db[oc] += s
        for ic in range(ic_n):
            for u in range(kh):
                for v in range(kw):
                    acc = 0.0
                    for bi in range(nb):
                        for oh in range(oh_n):
                            drow = dy[bi, oc, oh]
                            xrow = xpad[bi, ic, oh + u]
                            for ow in range(ow_n):
                                acc += drow[ow] * xrow[ow + v]
                    dw[oc, ic, u, v] = acc


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    xpad = _pad_hw(x, pad, pad)
    oh = x.shape[2] + 2 * pad - kh + 1
    ow = x.shape[3] + 2 * pad - kw + 1
    out = np.empty((x.shape[0], w.shape[0], oh, ow), dtype=x.dtype)
    _correlate(xpad, np.ascontiguousarray(w), b.astype(x.dtype), out)
    return out


def conv2d_grad_input(
    dy: np.ndarray, w: np.ndarray, pad: int, in_hw: tuple[int, int]
) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    wrot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dypad = _pad_hw(dy, kh - 1 - pad, kw - 1 - pad)
    dx = np.empty((dy.shape[0], w.shape[1], in_hw[0], in_hw[1]), dtype=dy.dtype)
    zeros = np.zeros(wrot.shape[0], dtype=dy.dtype)
    _correlate(dypad, wrot, zeros, dx)
    return dx


def conv2d_grad_params(
    x: np.ndarray, dy: np.ndarray, pad: int
) -> tuple[np.ndarray, np.ndarray]:
    kh = x.shape[2] + 2 * pad - dy.shape[2] + 1
    kw = x.shape[3] + 2 * pad - dy.shape[3] + 1
    xpad = _pad_hw(x, pad, pad)
    dw = np.zeros((dy.shape[1], x.shape[1], kh, kw), dtype=x.dtype)
    db = np.zeros(dy.shape[1], dtype=x.dtype)
    _grad_params(xpad, np.ascontiguousarray(dy), dw, db)
    return dw, db
