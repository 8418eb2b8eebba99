"""Slow, obviously-correct reference computations used as test oracles.

Nothing here imports nanocnn; these must stay independent of the code they check.
"""
import numpy as np


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += float(a[i, t]) * float(b[t, j])
            out[i, j] = s
    return out


def naive_conv2d(x, w, b=None, stride=1, pad=0):
    n, c, h, wd = x.shape
    o, c2, k, _ = w.shape
    assert c == c2
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    s = 0.0 if b is None else float(b[oi])
                    for ci in range(c):
                        for di in range(k):
                            for dj in range(k):
                                yy = i * stride + di - pad
                                xx = j * stride + dj - pad
                                if 0 <= yy < h and 0 <= xx < wd:
                                    s += float(x[ni, ci, yy, xx]) * float(w[oi, ci, di, dj])
                    out[ni, oi, i, j] = s
    return out


def loop_channel_mean(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c))
    for ni in range(n):
        for ci in range(c):
            s = 0.0
            for i in range(h):
                for j in range(w):
                    s += float(x[ni, ci, i, j])
            out[ni, ci] = s / (h * w)
    return out


def loop_max_then_blur(img):
    """Single 2-D image: dense 2x2 max with edge clamping, then the 3x3 binomial
    filter at stride 2 with edge clamping."""
    h, w = img.shape
    kern = [[1, 2, 1], [2, 4, 2], [1, 2, 1]]
    dense = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            dense[i, j] = max(img[min(i + a, h - 1), min(j + b, w - 1)]
                              for a in (0, 1) for b in (0, 1))
    out = np.zeros((h // 2, w // 2))
    for i in range(h // 2):
        for j in range(w // 2):
            s = 0.0
            for a in range(3):
                for b in range(3):
                    yy = min(max(2 * i + a - 1, 0), h - 1)
                    xx = min(max(2 * j + b - 1, 0), w - 1)
                    s += kern[a][b] * dense[yy, xx]
            out[i, j] = s / 16.0
    return out


def central_difference(f, x, h=1e-3):
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
    return float(np.abs(a - n).max() / scale)


def separated_values(rng, shape, spacing=0.05):
    """Distinct values at least ``spacing`` apart, shuffled; keeps finite
    differences away from max/ReLU kinks."""
    n = int(np.prod(shape))
    vals = (np.arange(n) - n / 2 + 0.5) * spacing
    return rng.permutation(vals).reshape(shape)
