"""Differentiable layers with explicit forward and backward passes.

Every layer follows the same protocol: ``forward(x)`` caches what ``backward``
needs, ``backward(dy)`` fills ``self.grads`` (same keys and shapes as
``self.params``) and returns the gradient with respect to the input. Layers
never modify their own parameters; that is the optimizer's job.

Convolution is cross-correlation (no kernel flip), tensors are NCHW.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import DTYPE, ShapeError

# 3x3 binomial blur, ([1,2,1]^T [1,2,1]) / 16
BLUR_KERNEL = (np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0).astype(np.float64)


@dataclass(frozen=True)
class ConvConfig:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int | None = None
    has_bias: bool = False

    def __post_init__(self):
        if self.kernel not in (1, 3):
            raise ValueError(f"kernel must be 1 or 3, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.padding is None:
            object.__setattr__(self, "padding", self.kernel // 2)
        if not 0 <= self.padding <= self.kernel // 2 + 1:
            raise ValueError(f"padding {self.padding} too large for kernel {self.kernel}")


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"output size ({size}+2*{pad}-{k})/{stride}+1 is not integral")
    return span // stride + 1


# ---------------------------------------------------------------------------
# functional kernels (forward returns output and a cache for the backward)

def _im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if k == 1 and stride == 1 and pad == 0:
        return x.reshape(n, c, h * w), (ho, wo)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * (ho - 1) + 1:stride,
                                  j:j + stride * (wo - 1) + 1:stride]
    return cols.reshape(n, c * k * k, ho * wo), (ho, wo)


def _col2im(dcols, x_shape, k, stride, pad, out_hw):
    n, c, h, w = x_shape
    ho, wo = out_hw
    if k == 1 and stride == 1 and pad == 0:
        return dcols.reshape(x_shape)
    dcols = dcols.reshape(n, c, k, k, ho, wo)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * (ho - 1) + 1:stride,
                j:j + stride * (wo - 1) + 1:stride] += dcols[:, :, i, j]
    return dxp[:, :, pad:pad + h, pad:pad + w]


def conv2d_forward(x, w, b=None, stride=1, pad=0):
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv input {x.shape} does not match kernel {w.shape}")
    o, _, k, _ = w.shape
    cols, (ho, wo) = _im2col(x, k, stride, pad)
    y = np.matmul(w.reshape(o, -1), cols)
    if b is not None:
        y += b.reshape(1, o, 1)
    return y.reshape(x.shape[0], o, ho, wo), (x.shape, cols, (ho, wo))


def conv2d_backward(dy, w, cache, stride=1, pad=0):
    x_shape, cols, out_hw = cache
    n, o = dy.shape[:2]
    k = w.shape[2]
    dy2 = dy.reshape(n, o, -1)
    dw = np.matmul(dy2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = dy2.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(o, -1).T, dy2)
    dx = _col2im(dcols, x_shape, k, stride, pad, out_hw)
    return dx, dw, db


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlate ``x`` [N,C,H,W] with ``w`` [O,C,k,k] via im2col + matmul."""
    return conv2d_forward(x, w, b, stride, padding)[0]


def _shift(xp, i, j, h, w, stride=1):
    return xp[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (w - 1) + 1:stride]


def depthwise_forward(x, w, b=None):
    """Per-channel 3x3 correlation, padding 1. ``w`` is [C,1,3,3]."""
    n, c, h, wd = x.shape
    if w.shape != (c, 1, 3, 3):
        raise ShapeError(f"depthwise kernel {w.shape} does not match {c} channels")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    y = np.zeros_like(x)
    tmp = np.empty_like(x)
    for i in range(3):
        for j in range(3):
            np.multiply(_shift(xp, i, j, h, wd), w[:, 0, i, j].reshape(1, c, 1, 1), out=tmp)
            y += tmp
    if b is not None:
        y += b.reshape(1, c, 1, 1)
    return y, xp


def depthwise_backward(dy, w, xp):
    n, c, h, wd = dy.shape
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for i in range(3):
        for j in range(3):
            dw[:, 0, i, j] = np.einsum("nchw,nchw->c", dy, _shift(xp, i, j, h, wd))
            dxp[:, :, i:i + h, j:j + wd] += dy * w[:, 0, i, j].reshape(1, c, 1, 1)
    return dxp[:, :, 1:-1, 1:-1], dw, dy.sum(axis=(0, 2, 3))


def depthwise_separable(x, w_dw, w_pw, b_dw=None, b_pw=None):
    """Depthwise 3x3 (padding 1) followed by a 1x1 pointwise convolution."""
    mid, _ = depthwise_forward(x, w_dw, b_dw)
    return conv2d(mid, w_pw, b_pw)


def _pad_edge_backward(dxp, top, bottom, left, right):
    h = dxp.shape[2] - top - bottom
    w = dxp.shape[3] - left - right
    rows = dxp[:, :, top:top + h, :].copy()
    if top:
        rows[:, :, 0, :] += dxp[:, :, :top, :].sum(axis=2)
    if bottom:
        rows[:, :, -1, :] += dxp[:, :, top + h:, :].sum(axis=2)
    dx = rows[:, :, :, left:left + w].copy()
    if left:
        dx[:, :, :, 0] += rows[:, :, :, :left].sum(axis=3)
    if right:
        dx[:, :, :, -1] += rows[:, :, :, left + w:].sum(axis=3)
    return dx


def blur_downsample_forward(x):
    """Edge-replicate by 1, blur with the binomial kernel, keep every 2nd pixel."""
    n, c, h, w = x.shape
    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    y = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            y += x.dtype.type(BLUR_KERNEL[i, j]) * _shift(xp, i, j, ho, wo, stride=2)
    return y, x.shape


def blur_downsample_backward(dy, x_shape):
    n, c, h, w = x_shape
    ho, wo = dy.shape[2:]
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + 2 * (ho - 1) + 1:2, j:j + 2 * (wo - 1) + 1:2] += (
                dy.dtype.type(BLUR_KERNEL[i, j]) * dy)
    return _pad_edge_backward(dxp, 1, 1, 1, 1)


def blur_downsample(x):
    return blur_downsample_forward(x)[0]


def _check_even(x):
    if x.ndim != 4:
        raise ShapeError(f"pooling expects NCHW input, got shape {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"pooling needs even spatial dims, got {x.shape[2:]}")


def maxpool_forward(x):
    _check_even(x)
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first max in row-major window order
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx)


def maxpool_backward(dy, cache):
    x_shape, idx = cache
    n, c, h, w = x_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(x_shape)


def maxpool2x2(x):
    return maxpool_forward(x)[0]


def dense_max_forward(x):
    """Stride-1 2x2 max, same-padded by replicating the last row and column."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (0, 1), (0, 1)), mode="edge")
    cands = np.stack([xp[:, :, i:i + h, j:j + w] for i in (0, 1) for j in (0, 1)], axis=-1)
    idx = cands.argmax(axis=-1)
    y = np.take_along_axis(cands, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx)


def dense_max_backward(dy, cache):
    x_shape, idx = cache
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 1, w + 1), dtype=dy.dtype)
    for k, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dxp[:, :, i:i + h, j:j + w] += np.where(idx == k, dy, 0)
    return _pad_edge_backward(dxp, 0, 1, 0, 1)


def blur_maxpool(x):
    """Anti-aliased 2x2 max pooling: dense max, then stride-2 binomial blur."""
    _check_even(x)
    return blur_downsample(dense_max_forward(x)[0])


def batchnorm(x, gamma, beta, mean=None, var=None, eps=1e-5):
    """Normalize per channel by batch statistics (or the given ``mean``/``var``),
    then scale by ``gamma`` and shift by ``beta``."""
    if mean is None:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
    shape = (1, -1, 1, 1)
    xhat = (x - mean.reshape(shape)) / np.sqrt(var.reshape(shape) + eps)
    return (xhat * gamma.reshape(shape) + beta.reshape(shape)).astype(x.dtype)


def global_avg_pool(x):
    if x.ndim != 4:
        raise ShapeError(f"GAP expects NCHW input, got shape {x.shape}")
    return x.mean(axis=(2, 3), keepdims=True, dtype=x.dtype)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def se_forward(x, w1, w2):
    n, c = x.shape[:2]
    if w1.shape[1] != c or w2.shape != (c, w1.shape[0]):
        raise ShapeError(f"SE weights {w1.shape}/{w2.shape} do not match {c} channels")
    s = x.mean(axis=(2, 3), dtype=x.dtype)
    zpre = s @ w1.T
    z = np.maximum(zpre, 0)
    a = sigmoid(z @ w2.T)
    return x * a[:, :, None, None], (x, s, zpre, z, a)


def se_backward(dy, w1, w2, cache):
    x, s, zpre, z, a = cache
    hw = x.shape[2] * x.shape[3]
    da = np.einsum("nchw,nchw->nc", dy, x)
    dapre = da * a * (1 - a)
    dw2 = dapre.T @ z
    dzpre = (dapre @ w2) * (zpre > 0)
    dw1 = dzpre.T @ s
    ds = dzpre @ w1
    dx = dy * a[:, :, None, None] + (ds / hw)[:, :, None, None].astype(dy.dtype)
    return dx, dw1, dw2


def squeeze_excite(x, w1, w2):
    """Rescale each channel by sigmoid(w2 . relu(w1 . GAP(x)))."""
    return se_forward(x, w1, w2)[0]


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# layer nodes

class Layer:
    kind = "Layer"
    decay_keys: tuple = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.training = True
        self._cache = None

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}.backward called without a cached forward")
        dx = self._backward(dy)
        return dx

    def _backward(self, dy):
        raise NotImplementedError

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        self.buffers = {k: v.astype(dtype) for k, v in self.buffers.items()}
        self.zero_grad()
        return self

    def extra_repr(self) -> str:
        return ""

    def __repr__(self):
        return f"{self.kind}({self.extra_repr()})"


class Conv2d(Layer):
    decay_keys = ("weight",)

    def __init__(self, cfg: ConvConfig, rng: np.random.Generator | None = None):
        super().__init__()
        self.cfg = cfg
        k = cfg.kernel
        shape = (cfg.out_channels, cfg.in_channels, k, k)
        self.params["weight"] = (kaiming_uniform(rng, shape, cfg.in_channels * k * k)
                                 if rng is not None else np.zeros(shape, DTYPE))
        if cfg.has_bias:
            self.params["bias"] = np.zeros(cfg.out_channels, DTYPE)
        self.zero_grad()

    @property
    def kind(self):
        return f"Conv{self.cfg.kernel}x{self.cfg.kernel}"

    def forward(self, x):
        if x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected {self.cfg.in_channels} channels, got {x.shape[1]}")
        y, self._cache = conv2d_forward(x, self.params["weight"], self.params.get("bias"),
                                        self.cfg.stride, self.cfg.padding)
        return y

    def _backward(self, dy):
        dx, dw, db = conv2d_backward(dy, self.params["weight"], self._cache,
                                     self.cfg.stride, self.cfg.padding)
        self.grads["weight"] = dw
        if "bias" in self.params:
            self.grads["bias"] = db
        return dx

    def extra_repr(self):
        c = self.cfg
        return f"{c.in_channels}, {c.out_channels}, stride={c.stride}, bias={c.has_bias}"


class DepthwiseSeparable(Layer):
    kind = "DepthwiseSeparable"
    decay_keys = ("dw_weight", "pw_weight")

    def __init__(self, in_channels, out_channels, has_bias=False, rng=None):
        super().__init__()
        self.in_channels, self.out_channels, self.has_bias = in_channels, out_channels, has_bias
        dw_shape, pw_shape = (in_channels, 1, 3, 3), (out_channels, in_channels, 1, 1)
        if rng is not None:
            self.params["dw_weight"] = kaiming_uniform(rng, dw_shape, 9)
            self.params["pw_weight"] = kaiming_uniform(rng, pw_shape, in_channels)
        else:
            self.params["dw_weight"] = np.zeros(dw_shape, DTYPE)
            self.params["pw_weight"] = np.zeros(pw_shape, DTYPE)
        if has_bias:
            self.params["dw_bias"] = np.zeros(in_channels, DTYPE)
            self.params["pw_bias"] = np.zeros(out_channels, DTYPE)
        self.zero_grad()

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        p = self.params
        x = np.ascontiguousarray(x)
        b_dw = p.get("dw_bias")
        mid = kernels.dw3x3_forward(x, p["dw_weight"],
                                    b_dw if b_dw is not None else np.zeros(self.in_channels, x.dtype))
        y, pw_cache = conv2d_forward(mid, p["pw_weight"], p.get("pw_bias"))
        self._cache = (x, pw_cache)
        return y

    def _backward(self, dy):
        x, pw_cache = self._cache
        p = self.params
        dmid, dpw, dpb = conv2d_backward(dy, p["pw_weight"], pw_cache)
        dx, ddw, ddb = kernels.dw3x3_backward(np.ascontiguousarray(dmid), x, p["dw_weight"])
        self.grads["dw_weight"], self.grads["pw_weight"] = ddw, dpw
        if self.has_bias:
            self.grads["dw_bias"], self.grads["pw_bias"] = ddb, dpb
        return dx

    def extra_repr(self):
        return f"{self.in_channels}, {self.out_channels}, bias={self.has_bias}"


class MaxPool2x2(Layer):
    kind = "MaxPool2x2"

    def forward(self, x):
        _check_even(x)
        y, idx = kernels.maxpool2x2_forward(np.ascontiguousarray(x))
        self._cache = (x.shape, idx)
        return y

    def _backward(self, dy):
        shape, idx = self._cache
        return kernels.maxpool2x2_backward(np.ascontiguousarray(dy), idx, shape[2], shape[3])


class BlurMaxPool(Layer):
    kind = "BlurMaxPool"

    def forward(self, x):
        _check_even(x)
        x = np.ascontiguousarray(x)
        k = BLUR_KERNEL.astype(x.dtype)
        m, idx = kernels.dense_max_forward(x)
        self._cache = (idx, x.shape)
        return kernels.blur_down_forward(m, k)

    def _backward(self, dy):
        idx, shape = self._cache
        k = BLUR_KERNEL.astype(dy.dtype)
        dm = kernels.blur_down_backward(np.ascontiguousarray(dy), k, shape[2], shape[3])
        return kernels.dense_max_backward(dm, idx)


class BlurConvDownsample(Layer):
    """A stride-2 convolution rewritten as stride-1 convolution + blur-downsample."""

    kind = "BlurConvDownsample"
    decay_keys = ("weight",)

    def __init__(self, cfg: ConvConfig, rng=None, weight=None, bias=None):
        super().__init__()
        if cfg.stride != 2:
            raise ValueError("BlurConvDownsample replaces a stride-2 convolution")
        self.cfg = cfg
        self.conv = Conv2d(ConvConfig(cfg.in_channels, cfg.out_channels, cfg.kernel, 1,
                                      cfg.padding, cfg.has_bias), rng)
        if weight is not None:
            self.conv.params["weight"] = weight
        if bias is not None:
            self.conv.params["bias"] = bias
        self.params = self.conv.params
        self.zero_grad()

    def forward(self, x):
        self.conv.params = self.params
        y, shape = blur_downsample_forward(self.conv.forward(x))
        self._cache = shape
        return y

    def _backward(self, dy):
        dx = self.conv.backward(blur_downsample_backward(dy, self._cache))
        self.grads = self.conv.grads
        return dx


class BatchNorm2d(Layer):
    kind = "BatchNorm"

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.params["gamma"] = np.ones(channels, DTYPE)
        self.params["beta"] = np.zeros(channels, DTYPE)
        self.buffers["running_mean"] = np.zeros(channels, DTYPE)
        self.buffers["running_var"] = np.ones(channels, DTYPE)
        self.batches_tracked = 0
        self.zero_grad()

    def reset_running_stats(self):
        self.buffers["running_mean"][:] = 0
        self.buffers["running_var"][:] = 1
        self.batches_tracked = 0

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ShapeError(f"expected {self.channels} channels, got {x.shape[1]}")
        gamma, beta = self.params["gamma"], self.params["beta"]
        x = np.ascontiguousarray(x)
        if self.training:
            mean, var = kernels.batch_stats(x)
            m = x.size // self.channels
            self._update_running(mean, var * (m / max(m - 1, 1)))
        else:
            if self.batches_tracked == 0:
                raise RuntimeError("BatchNorm evaluated before any training statistics exist")
            mean = self.buffers["running_mean"].astype(np.float64)
            var = self.buffers["running_var"].astype(np.float64)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        y, xhat = kernels.bn_apply(x, mean, inv_std, gamma, beta)
        self._cache = (xhat, inv_std, self.training)
        return y

    def _update_running(self, mean, var):
        rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
        if self.momentum is None:
            # cumulative average, used when recalibrating after weight averaging
            f = 1.0 / (self.batches_tracked + 1)
        else:
            f = self.momentum
        rm += (mean - rm) * f
        rv += (var - rv) * f
        self.batches_tracked += 1

    def _backward(self, dy):
        xhat, inv_std, was_training = self._cache
        dx, dgamma, dbeta = kernels.bn_backward(np.ascontiguousarray(dy), xhat, inv_std,
                                                self.params["gamma"], was_training)
        self.grads["gamma"], self.grads["beta"] = dgamma, dbeta
        return dx

    def extra_repr(self):
        return str(self.channels)


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def _backward(self, dy):
        return dy * self._cache


class GlobalAvgPool(Layer):
    kind = "GlobalAvgPool"

    def forward(self, x):
        self._cache = x.shape
        return global_avg_pool(x)

    def _backward(self, dy):
        n, c, h, w = self._cache
        return np.broadcast_to(dy / (h * w), self._cache).astype(dy.dtype)


class SqueezeExcite(Layer):
    kind = "SqueezeExcite"
    decay_keys = ("fc1", "fc2")

    def __init__(self, channels, latent, rng=None):
        super().__init__()
        if latent < 1:
            raise ValueError("SE latent size must be >= 1")
        self.channels, self.latent = channels, latent
        if rng is not None:
            self.params["fc1"] = kaiming_uniform(rng, (latent, channels), channels)
            self.params["fc2"] = kaiming_uniform(rng, (channels, latent), latent)
        else:
            self.params["fc1"] = np.zeros((latent, channels), DTYPE)
            self.params["fc2"] = np.zeros((channels, latent), DTYPE)
        self.zero_grad()

    def forward(self, x):
        y, self._cache = se_forward(x, self.params["fc1"], self.params["fc2"])
        return y

    def _backward(self, dy):
        dx, dw1, dw2 = se_backward(dy, self.params["fc1"], self.params["fc2"], self._cache)
        self.grads["fc1"], self.grads["fc2"] = dw1, dw2
        return dx

    def extra_repr(self):
        return f"{self.channels}, latent={self.latent}"


class Flatten(Layer):
    kind = "Flatten"

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def _backward(self, dy):
        return dy.reshape(self._cache)


class Softmax(Layer):
    """Softmax over the class axis. Training feeds logits straight to the loss;
    this node is used for probability outputs."""

    kind = "Softmax"

    def forward(self, x):
        s = softmax(x, axis=1)
        self._cache = s
        return s

    def _backward(self, dy):
        s = self._cache
        return s * (dy - (dy * s).sum(axis=1, keepdims=True))


def layer_backward(node: Layer, dy):
    return node.backward(dy)


class Sequential:
    """An ordered stack of layers; ``forward`` returns logits."""

    def __init__(self, layers, name: str = "model"):
        self.layers = list(layers)
        self.name = name
        self.training = True

    def __call__(self, x):
        return self.forward(x)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def predict_proba(self, x):
        return softmax(self.forward(x), axis=1)

    def train(self, mode=True):
        self.training = mode
        for layer in self.layers:
            layer.training = mode
        return self

    def eval(self):
        return self.train(False)

    def named_params(self):
        """Yield ``(name, layer, key)`` for every learnable tensor, in a fixed order."""
        for i, layer in enumerate(self.layers):
            for key in layer.params:
                yield f"{i}.{key}", layer, key

    def count_params(self) -> int:
        return sum(layer.num_params() for layer in self.layers)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for i, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                state[f"{i}.{key}"] = value
            for key, value in layer.buffers.items():
                state[f"{i}.{key}"] = value
        return state

    def load_state_dict(self, state):
        expected = self.state_dict()
        if set(state) != set(expected):
            missing = sorted(set(expected) - set(state))
            extra = sorted(set(state) - set(expected))
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for i, layer in enumerate(self.layers):
            for store in (layer.params, layer.buffers):
                for key in store:
                    value = np.asarray(state[f"{i}.{key}"])
                    if value.shape != store[key].shape:
                        raise ShapeError(f"{i}.{key}: shape {value.shape} != {store[key].shape}")
                    store[key][...] = value
            if isinstance(layer, BatchNorm2d):
                layer.batches_tracked = max(layer.batches_tracked, 1)

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def __repr__(self):
        body = "\n".join(f"  ({i}) {layer!r}" for i, layer in enumerate(self.layers))
        return f"Sequential[{self.name}](\n{body}\n)"
