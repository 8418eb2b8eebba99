# Checking hand-written backward passes against central differences.
#
# Everything is cast to float64 first; in float32 the finite-difference noise
# swamps a 1e-5 tolerance.

import numpy as np

from nanocnn import layers as L

rng = np.random.default_rng(0)


def check(layer, x, h=1e-3):
    layer.astype(np.float64)
    r = rng.normal(size=layer.forward(x).shape)
    loss = lambda: float((layer.forward(x) * r).sum())
    loss()
    analytic = layer.backward(r)
    numeric = np.zeros_like(x)
    flat, g = x.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h; up = loss()
        flat[i] = old - h; down = loss()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return np.abs(analytic - numeric).max() / np.abs(numeric).max()


x = rng.normal(size=(2, 4, 6, 6))
print("conv3x3        ", check(L.Conv2d(L.ConvConfig(4, 3, 3, has_bias=True), rng), x.copy()))
print("depthwise-sep  ", check(L.DepthwiseSeparable(4, 3, rng=rng), x.copy()))
print("batchnorm      ", check(L.BatchNorm2d(4), x.copy()))
print("squeeze-excite ", check(L.SqueezeExcite(4, 2, rng), x.copy()))

# Max-type layers have kinks. Inputs spaced further apart than the step keep
# the finite difference on one side of every kink.
spaced = rng.permutation(np.arange(2 * 4 * 6 * 6) * 0.05).reshape(2, 4, 6, 6)
print("blur-maxpool   ", check(L.BlurMaxPool(), spaced))
