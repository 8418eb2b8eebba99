# Why blur before subsampling: shift a picture by one pixel and compare pooled outputs.

import numpy as np

from nanocnn.layers import blur_maxpool, maxpool2x2

rng = np.random.default_rng(0)
img = rng.normal(size=(1, 1, 16, 16))
shifted = np.roll(img, 1, axis=3)

for name, pool in [("maxpool", maxpool2x2), ("blur-maxpool", blur_maxpool)]:
    change = np.abs(pool(img) - pool(shifted))[..., 1:-1].mean()
    print(f"{name:13s} mean change after 1px shift: {change:.4f}")

# A single bright pixel in the corner spreads over the binomial footprint.
impulse = np.zeros((1, 1, 4, 4))
impulse[0, 0, 0, 0] = 1.0
print(blur_maxpool(impulse)[0, 0])   # 9/16 at the corner, zeros elsewhere
