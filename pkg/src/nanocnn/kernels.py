"""Fused loop kernels for the memory-bound layers (numba, single-threaded).

Each kernel has a pure-numpy twin in ``layers``; the test-suite checks that the
two agree. Accumulations are sequential, so results are deterministic.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def dw3x3_forward(x, w, b):
    n_, c_, h_, w_ = x.shape
    y = np.empty_like(x)
    for n in range(n_):
        for c in range(c_):
            yc = y[n, c]
            xc = x[n, c]
            yc[:, :] = b[c]
            for di in range(3):
                for dj in range(3):
                    k = w[c, 0, di, dj]
                    i0, i1 = max(0, 1 - di), min(h_, h_ + 1 - di)
                    j0, j1 = max(0, 1 - dj), min(w_, w_ + 1 - dj)
                    for i in range(i0, i1):
                        for j in range(j0, j1):
                            yc[i, j] += k * xc[i + di - 1, j + dj - 1]
    return y


@njit(cache=True, fastmath=True)
def dw3x3_weight_grad(dy, x):
    n_, c_, h_, w_ = x.shape
    dw = np.zeros((c_, 1, 3, 3), dtype=np.float64)
    db = np.zeros(c_, dtype=np.float64)
    for n in range(n_):
        for c in range(c_):
            gc = dy[n, c]
            xc = x[n, c]
            db[c] += gc.sum()
            for di in range(3):
                for dj in range(3):
                    i0, i1 = max(0, 1 - di), min(h_, h_ + 1 - di)
                    j0, j1 = max(0, 1 - dj), min(w_, w_ + 1 - dj)
                    acc = x.dtype.type(0.0)
                    for i in range(i0, i1):
                        for j in range(j0, j1):
                            acc += gc[i, j] * xc[i + di - 1, j + dj - 1]
                    dw[c, 0, di, dj] += acc
    return dw.astype(x.dtype), db.astype(x.dtype)


def dw3x3_backward(dy, x, w):
    """Input gradient is the correlation of ``dy`` with the 180-degree rotated kernel."""
    dx = dw3x3_forward(dy, np.ascontiguousarray(w[:, :, ::-1, ::-1]), np.zeros(w.shape[0], dy.dtype))
    dw, db = dw3x3_weight_grad(dy, x)
    return dx, dw, db


@njit(cache=True)
def maxpool2x2_forward(x):
    n_, c_, h_, w_ = x.shape
    ho, wo = h_ // 2, w_ // 2
    y = np.empty((n_, c_, ho, wo), dtype=x.dtype)
    idx = np.empty((n_, c_, ho, wo), dtype=np.int8)
    for n in range(n_):
        for c in range(c_):
            for i in range(ho):
                for j in range(wo):
                    best = x[n, c, 2 * i, 2 * j]
                    arg = 0
                    v = x[n, c, 2 * i, 2 * j + 1]
                    if v > best:
                        best, arg = v, 1
                    v = x[n, c, 2 * i + 1, 2 * j]
                    if v > best:
                        best, arg = v, 2
                    v = x[n, c, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best, arg = v, 3
                    y[n, c, i, j] = best
                    idx[n, c, i, j] = arg
    return y, idx


@njit(cache=True)
def maxpool2x2_backward(dy, idx, h_, w_):
    n_, c_, ho, wo = dy.shape
    dx = np.zeros((n_, c_, h_, w_), dtype=dy.dtype)
    for n in range(n_):
        for c in range(c_):
            for i in range(ho):
                for j in range(wo):
                    a = idx[n, c, i, j]
                    dx[n, c, 2 * i + a // 2, 2 * j + a % 2] = dy[n, c, i, j]
    return dx


@njit(cache=True)
def batch_stats(x):
    """Per-channel mean and biased variance (two-pass, float64 accumulation)."""
    n_, c_, h_, w_ = x.shape
    m = n_ * h_ * w_
    mean = np.zeros(c_)
    var = np.zeros(c_)
    for c in range(c_):
        s = 0.0
        for n in range(n_):
            for i in range(h_):
                for j in range(w_):
                    s += x[n, c, i, j]
        mu = s / m
        q = 0.0
        for n in range(n_):
            for i in range(h_):
                for j in range(w_):
                    d = x[n, c, i, j] - mu
                    q += d * d
        mean[c] = mu
        var[c] = q / m
    return mean, var


@njit(cache=True)
def bn_apply(x, mean, inv_std, gamma, beta):
    n_, c_, h_, w_ = x.shape
    xhat = np.empty_like(x)
    y = np.empty_like(x)
    for n in range(n_):
        for c in range(c_):
            mu = x.dtype.type(mean[c])
            s = x.dtype.type(inv_std[c])
            g = gamma[c]
            b = beta[c]
            for i in range(h_):
                for j in range(w_):
                    v = (x[n, c, i, j] - mu) * s
                    xhat[n, c, i, j] = v
                    y[n, c, i, j] = v * g + b
    return y, xhat


@njit(cache=True)
def bn_backward(dy, xhat, inv_std, gamma, training):
    n_, c_, h_, w_ = dy.shape
    m = n_ * h_ * w_
    dgamma = np.zeros(c_)
    dbeta = np.zeros(c_)
    for c in range(c_):
        sg = 0.0
        sb = 0.0
        for n in range(n_):
            for i in range(h_):
                for j in range(w_):
                    g = dy[n, c, i, j]
                    sb += g
                    sg += g * xhat[n, c, i, j]
        dgamma[c] = sg
        dbeta[c] = sb
    dx = np.empty_like(dy)
    for c in range(c_):
        scale = dy.dtype.type(gamma[c] * inv_std[c])
        if training:
            a = dy.dtype.type(dbeta[c] / m)
            bb = dy.dtype.type(dgamma[c] / m)
        else:
            a = dy.dtype.type(0.0)
            bb = dy.dtype.type(0.0)
        for n in range(n_):
            for i in range(h_):
                for j in range(w_):
                    dx[n, c, i, j] = scale * (dy[n, c, i, j] - a - xhat[n, c, i, j] * bb)
    return dx, dgamma.astype(dy.dtype), dbeta.astype(dy.dtype)


@njit(cache=True)
def dense_max_forward(x):
    """Stride-1 2x2 max; the window past the last row/column replicates the edge."""
    n_, c_, h_, w_ = x.shape
    y = np.empty_like(x)
    idx = np.empty(x.shape, dtype=np.int8)
    for n in range(n_):
        for c in range(c_):
            xc = x[n, c]
            for i in range(h_):
                i2 = min(i + 1, h_ - 1)
                for j in range(w_):
                    j2 = min(j + 1, w_ - 1)
                    best = xc[i, j]
                    arg = 0
                    v = xc[i, j2]
                    if v > best:
                        best, arg = v, 1
                    v = xc[i2, j]
                    if v > best:
                        best, arg = v, 2
                    v = xc[i2, j2]
                    if v > best:
                        best, arg = v, 3
                    y[n, c, i, j] = best
                    idx[n, c, i, j] = arg
    return y, idx


@njit(cache=True)
def dense_max_backward(dy, idx):
    n_, c_, h_, w_ = dy.shape
    dx = np.zeros_like(dy)
    for n in range(n_):
        for c in range(c_):
            for i in range(h_):
                for j in range(w_):
                    a = idx[n, c, i, j]
                    dx[n, c, min(i + a // 2, h_ - 1), min(j + a % 2, w_ - 1)] += dy[n, c, i, j]
    return dx


@njit(cache=True)
def blur_down_forward(x, k):
    """Binomial blur at stride 2 with edge replication; ``k`` is the 3x3 kernel."""
    n_, c_, h_, w_ = x.shape
    ho, wo = (h_ - 1) // 2 + 1, (w_ - 1) // 2 + 1
    y = np.zeros((n_, c_, ho, wo), dtype=x.dtype)
    for n in range(n_):
        for c in range(c_):
            xc = x[n, c]
            for i in range(ho):
                for j in range(wo):
                    acc = x.dtype.type(0.0)
                    for di in range(3):
                        ii = min(max(2 * i + di - 1, 0), h_ - 1)
                        for dj in range(3):
                            jj = min(max(2 * j + dj - 1, 0), w_ - 1)
                            acc += k[di, dj] * xc[ii, jj]
                    y[n, c, i, j] = acc
    return y


@njit(cache=True)
def blur_down_backward(dy, k, h_, w_):
    n_, c_, ho, wo = dy.shape
    dx = np.zeros((n_, c_, h_, w_), dtype=dy.dtype)
    for n in range(n_):
        for c in range(c_):
            dxc = dx[n, c]
            for i in range(ho):
                for j in range(wo):
                    g = dy[n, c, i, j]
                    for di in range(3):
                        ii = min(max(2 * i + di - 1, 0), h_ - 1)
                        for dj in range(3):
                            jj = min(max(2 * j + dj - 1, 0), w_ - 1)
                            dxc[ii, jj] += k[di, dj] * g
    return dx
