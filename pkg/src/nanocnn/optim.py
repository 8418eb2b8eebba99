"""SGD with momentum, the one-cycle schedule, the SAM wrapper and SWA averaging."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm2d


def model_params(model) -> dict[str, np.ndarray]:
    return {name: layer.params[key] for name, layer, key in model.named_params()}


def model_grads(model) -> dict[str, np.ndarray]:
    return {name: layer.grads[key] for name, layer, key in model.named_params()}


def decayed_names(model) -> frozenset[str]:
    """Names of the tensors that receive weight decay (conv and SE weights only)."""
    return frozenset(name for name, layer, key in model.named_params()
                     if key in layer.decay_keys)


@dataclass
class SgdState:
    lr: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay: frozenset | None = None  # None decays every tensor
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")


def sgd_step(params: dict, grads: dict, state: SgdState) -> None:
    """v <- momentum*v + g + wd*w ; w <- w - lr*v, in place."""
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter {w.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        if state.weight_decay and (state.decay is None or name in state.decay):
            g = g + w.dtype.type(state.weight_decay) * w
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        v *= w.dtype.type(state.momentum)
        v += g
        w -= w.dtype.type(state.lr) * v


@dataclass(frozen=True)
class OneCycleSchedule:
    lr_max: float
    total_steps: int
    div: float = 25.0
    final_div: float = 1e4
    pct_up: float = 0.5

    def __post_init__(self):
        if not 0 < self.pct_up < 1:
            raise ValueError("pct_up must lie in (0, 1)")
        if self.total_steps < 2:
            raise ValueError("one-cycle needs at least two steps")
        if not (self.lr_max > 0 and self.div > 0 and self.final_div > 0):
            raise ValueError("lr_max, div and final_div must be positive")

    @property
    def initial_lr(self):
        return self.lr_max / self.div

    @property
    def final_lr(self):
        return self.lr_max / (self.div * self.final_div)

    @property
    def peak_step(self) -> float:
        return self.pct_up * (self.total_steps - 1)

    def __call__(self, step: int) -> float:
        return one_cycle_lr(step, self)


def _lerp(a: float, b: float, frac: float) -> float:
    # exact at both ends, which a + (b - a) * frac is not
    if frac <= 0.0:
        return a
    if frac >= 1.0:
        return b
    return a + (b - a) * frac


def one_cycle_lr(step: int, sched: OneCycleSchedule) -> float:
    """Linear warm-up from lr_max/div at step 0 to lr_max, then linear decay to
    lr_max/(div*final_div) at the last step."""
    if not 0 <= step < sched.total_steps:
        raise IndexError(f"step {step} outside [0, {sched.total_steps})")
    peak = sched.peak_step
    if step <= peak:
        return _lerp(sched.initial_lr, sched.lr_max, step / peak)
    down = sched.total_steps - 1 - peak
    return _lerp(sched.lr_max, sched.final_lr, (step - peak) / down)


@dataclass(frozen=True)
class SamConfig:
    rho: float = 0.05

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def sam_step(params: dict, grad_fn, cfg: SamConfig, base: SgdState):
    """One sharpness-aware update.

    ``grad_fn()`` evaluates the loss at the current contents of ``params`` and
    returns ``(loss, grads)``. It is called twice: once at the weights, once at
    the weights pushed uphill by ``rho`` along the normalized gradient. The
    second gradient drives the base SGD step, applied to the original weights.
    Returns the loss at the unperturbed weights.
    """
    loss, grads = grad_fn()
    norm = global_norm(grads)
    if norm == 0.0:
        sgd_step(params, grads, base)
        return loss
    scale = cfg.rho / norm
    saved = {name: w.copy() for name, w in params.items()}
    for name, w in params.items():
        w += (grads[name] * scale).astype(w.dtype)
    try:
        _, grads_adv = grad_fn()
    finally:
        for name, w in params.items():
            w[...] = saved[name]
    sgd_step(params, grads_adv, base)
    return loss


@dataclass
class SwaState:
    start_fraction: float = 0.75
    avg_params: dict = field(default_factory=dict)
    n_averaged: int = 0

    def __post_init__(self):
        if not 0.0 <= self.start_fraction <= 1.0:
            raise ValueError("start_fraction must lie in [0, 1]")


def swa_start_epoch(total_epochs: int, start_fraction: float) -> int:
    # round first so that e.g. 0.75 * 20 does not become 15.000000000000002
    return math.ceil(round(start_fraction * total_epochs, 9))


def swa_should_update(epoch: int, total_epochs: int, s: SwaState) -> bool:
    return epoch >= swa_start_epoch(total_epochs, s.start_fraction)


def swa_update(s: SwaState, current_params: dict) -> None:
    """Fold one snapshot into the running mean: avg += (w - avg) / (n + 1)."""
    if s.n_averaged == 0:
        s.avg_params = {name: np.array(w, dtype=np.float64) for name, w in current_params.items()}
    else:
        if set(current_params) != set(s.avg_params):
            raise ValueError("snapshot parameter names differ from the running average")
        for name, w in current_params.items():
            avg = s.avg_params[name]
            if w.shape != avg.shape:
                raise ValueError(f"{name}: snapshot shape {w.shape} != {avg.shape}")
            avg += (w - avg) / (s.n_averaged + 1)
    s.n_averaged += 1


def recalibrate_batchnorm(model, batches) -> int:
    """Recompute BN running statistics as the plain average over ``batches``.

    Runs train-mode forwards only; weights are untouched. Returns the number of
    batches seen.
    """
    bns = [layer for layer in model.layers if isinstance(layer, BatchNorm2d)]
    if not bns:
        return 0
    saved = [bn.momentum for bn in bns]
    for bn in bns:
        bn.reset_running_stats()
        bn.momentum = None
    model.train()
    seen = 0
    try:
        for x, _ in batches:
            model.forward(x)
            seen += 1
    finally:
        for bn, m in zip(bns, saved):
            bn.momentum = m
    return seen


def swa_finalize(s: SwaState, model, train_batches=()):
    """Load the averaged weights into ``model``, recalibrate BN, return it in eval mode."""
    if s.n_averaged == 0:
        raise RuntimeError("swa_finalize called before any snapshot was averaged")
    params = model_params(model)
    for name, w in params.items():
        w[...] = s.avg_params[name].astype(w.dtype)
    recalibrate_batchnorm(model, train_batches)
    return model.eval()
