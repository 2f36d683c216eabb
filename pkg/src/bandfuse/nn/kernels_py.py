"""Pure-numpy conv3x3 kernels (im2col + BLAS matmul). Fallback backend."""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray) -> np.ndarray:
    """(n, C, h, w) -> (n, h, w, C*9) columns for a zero-padded 3x3 window."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:h + 1, 1:w + 1] = x
    cols = np.empty((n, h, w, c, 9), dtype=x.dtype)
    for u in range(3):
        for v in range(3):
            cols[:, :, :, :, u * 3 + v] = xp[:, :, u:u + h, v:v + w].transpose(0, 2, 3, 1)
    return cols.reshape(n, h, w, c * 9)


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation: (n,Cin,h,w) x (Cout,Cin,3,3) -> (n,Cout,h,w)."""
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    cols = _im2col(x)  # (n, h, w, cin*9)
    wmat = w.reshape(cout, cin * 9)
    y = cols @ wmat.T + b
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv3x3_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray):
    """Gradients of conv3x3_forward w.r.t. input, weights, biases."""
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    gb = gout.sum(axis=(0, 2, 3))
    cols = _im2col(x).reshape(n * h * wd, cin * 9)
    gmat = gout.transpose(0, 2, 3, 1).reshape(n * h * wd, cout)
    gw = (gmat.T @ cols).reshape(cout, cin, 3, 3)
    # input gradient = correlation of gout with the flipped, transposed kernel
    wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx = conv3x3_forward(gout, wflip, np.zeros(cin, dtype=x.dtype))
    return gx, gw, gb
