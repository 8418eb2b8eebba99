# Cutout, mixup and label smoothing on a toy batch.

import math

import numpy as np

from nanocnn import regularizers as reg

rng = np.random.default_rng(0)
x = rng.uniform(size=(4, 1, 28, 28)).astype(np.float32)
labels = np.array([3, 1, 4, 1])

out = reg.cutout(x, reg.CutoutConfig(10, 10), rng)
print("pixels zeroed per image:", (out == 0).sum(axis=(1, 2, 3)))   # fewer near the border

y = reg.one_hot(labels)
perm = rng.permutation(4)
delta = reg.sample_mixup_delta(rng, reg.MixupConfig(beta_a=0.2))
xm, ym = reg.mixup(x, y, delta, perm)
print(f"delta={delta:.3f}", "mixed target row 0:", np.round(ym[0], 3))

smooth = reg.label_smooth(y, 0.1)
print("smoothed row:", smooth[0])                   # 0.91 on the label, 0.01 elsewhere

loss, _ = reg.cross_entropy(np.zeros((4, 10), np.float32), smooth)
print("uniform logits loss", loss, "ln 10 =", math.log(10))
print("best achievable loss with smoothing:", reg.entropy(smooth))
