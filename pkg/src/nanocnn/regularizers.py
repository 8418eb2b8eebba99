"""Cutout, mixup, label smoothing and the soft-target cross-entropy they feed."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import softmax

NUM_CLASSES = 10


@dataclass(frozen=True)
class MixupConfig:
    beta_a: float = 0.2
    # When set, every batch mixes with this coefficient instead of a Beta draw.
    fixed_delta: float | None = None

    def __post_init__(self):
        if not self.beta_a > 0:
            raise ValueError(f"beta_a must be positive, got {self.beta_a}")
        if self.fixed_delta is not None and not 0.0 <= self.fixed_delta <= 1.0:
            raise ValueError(f"fixed_delta must lie in [0, 1], got {self.fixed_delta}")


@dataclass(frozen=True)
class CutoutConfig:
    mask_h: int = 10
    mask_w: int = 10
    fill: float = 0.0

    def __post_init__(self):
        if self.mask_h < 1 or self.mask_w < 1:
            raise ValueError("cutout mask dimensions must be >= 1")


def one_hot(labels, num_classes: int = NUM_CLASSES, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def label_smooth(targets: np.ndarray, alpha: float) -> np.ndarray:
    """Mix targets with the uniform distribution: ``(1 - alpha) * y + alpha / K``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if alpha == 0:
        return targets
    k = targets.shape[1]
    return ((1.0 - alpha) * targets + alpha / k).astype(targets.dtype)


def mixup(x: np.ndarray, y: np.ndarray, delta: float, perm: np.ndarray):
    """Blend each example with its partner ``perm[n]``: delta * own + (1 - delta) * partner.

    One coefficient for the whole batch. Returns the mixed inputs and targets.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"mixup delta must lie in [0, 1], got {delta}")
    perm = np.asarray(perm)
    if perm.shape != (x.shape[0],) or not np.array_equal(np.sort(perm), np.arange(x.shape[0])):
        raise ValueError("perm must be a permutation of the batch indices")
    if delta == 1.0:
        return x, y
    d = x.dtype.type(delta)
    x_mix = d * x + (1 - d) * x[perm]
    y_mix = (delta * y + (1.0 - delta) * y[perm]).astype(y.dtype)
    return x_mix, y_mix


def sample_mixup_delta(rng: np.random.Generator, cfg: MixupConfig) -> float:
    if cfg.fixed_delta is not None:
        return float(cfg.fixed_delta)
    # Beta(a, a) from two Gamma(a) draws
    g1 = rng.standard_gamma(cfg.beta_a)
    g2 = rng.standard_gamma(cfg.beta_a)
    if g1 + g2 == 0.0:
        return 0.5
    return float(g1 / (g1 + g2))


def cutout_window(cy: int, cx: int, h: int, w: int, cfg: CutoutConfig):
    """Row/column bounds of the mask centered at (cy, cx), clipped to the image.

    The window spans ``floor((m-1)/2)`` pixels before the center and
    ``floor(m/2)`` after it.
    """
    y0 = max(cy - (cfg.mask_h - 1) // 2, 0)
    y1 = min(cy + cfg.mask_h // 2 + 1, h)
    x0 = max(cx - (cfg.mask_w - 1) // 2, 0)
    x1 = min(cx + cfg.mask_w // 2 + 1, w)
    return y0, y1, x0, x1


def cutout(x: np.ndarray, cfg: CutoutConfig, rng: np.random.Generator) -> np.ndarray:
    """Fill one randomly centered window per image (all channels) with ``cfg.fill``."""
    n, _, h, w = x.shape
    out = x.copy()
    centers_y = rng.integers(0, h, size=n)
    centers_x = rng.integers(0, w, size=n)
    for i in range(n):
        y0, y1, x0, x1 = cutout_window(int(centers_y[i]), int(centers_x[i]), h, w, cfg)
        out[i, :, y0:y1, x0:x1] = cfg.fill
    return out


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean soft-target cross-entropy and its gradient with respect to the logits."""
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    if logits.shape != targets.shape:
        raise ValueError(f"logits {logits.shape} and targets {targets.shape} differ")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_s = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-(targets * log_s).sum() / n)
    grad = (softmax(logits, axis=1) - targets) / n
    return loss, grad.astype(logits.dtype)


def entropy(targets: np.ndarray) -> float:
    """Mean entropy of the target rows; the lower bound of the cross-entropy."""
    t = np.asarray(targets, dtype=np.float64)
    safe = np.where(t > 0, t, 1.0)
    return float(-(t * np.log(safe)).sum() / t.shape[0])
