"""One training run: model + technique toggles + data -> metrics and a final model."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import optim, regularizers as reg
from .data import BatchIterator, Dataset, sequential_batches
from .tensor import RNG_ALGORITHM, make_rng
from .zoo import apply_blurpool, apply_se, build_model, save

log = logging.getLogger(__name__)

# independent RNG streams derived from the run seed
_INIT, _SHUFFLE, _CUTOUT, _SE_INIT, _MIXUP = 0, 1, 2, 3, 4


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    model_name: str
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    one_cycle: bool = False
    lr_max: float = 0.2
    one_cycle_div: float = 25.0
    one_cycle_final_div: float = 1e4
    one_cycle_pct_up: float = 0.5
    cutout: reg.CutoutConfig | None = None
    blurpool: bool = False
    se: tuple | None = None  # (r, min_channels)
    mixup: reg.MixupConfig | None = None
    label_smoothing: float | None = None
    sam: optim.SamConfig | None = None
    swa: float | None = None  # start fraction
    train_limit: int | None = None
    max_steps: int | None = None
    eval_batch_size: int = 500

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.label_smoothing is not None and not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")

    def techniques(self) -> list[str]:
        names = {"one_cycle": self.one_cycle, "cutout": self.cutout, "blurpool": self.blurpool,
                 "se": self.se, "mixup": self.mixup,
                 "label_smoothing": self.label_smoothing is not None,
                 "sam": self.sam, "swa": self.swa is not None}
        return [k for k, v in names.items() if v]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("cutout") is not None:
            d["cutout"] = reg.CutoutConfig(**d["cutout"])
        if d.get("mixup") is not None:
            d["mixup"] = reg.MixupConfig(**d["mixup"])
        if d.get("sam") is not None:
            d["sam"] = optim.SamConfig(**d["sam"])
        if d.get("se") is not None:
            d["se"] = tuple(d["se"])
        return cls(**d)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    lr_at_epoch_end: float
    wall_seconds: float = 0.0

    def record(self) -> dict:
        """Fields that are a pure function of config, seed and data."""
        d = dataclasses.asdict(self)
        d.pop("wall_seconds")
        return d


@dataclass
class TrainResult:
    model: object
    metrics: list
    final_test_acc: float
    step_losses: list = field(default_factory=list)
    grad_passes: int = 0
    steps: int = 0
    swa_snapshots: int = 0


def run_metadata(cfg: TrainConfig) -> dict:
    return {"config": cfg.to_dict(), "rng": RNG_ALGORITHM,
            "techniques": cfg.techniques(), "numpy": np.__version__}


def build_for_config(cfg: TrainConfig):
    model = build_model(cfg.model_name, seed=cfg.seed)
    if cfg.blurpool:
        model = apply_blurpool(model)
    if cfg.se:
        r, min_channels = cfg.se
        model = apply_se(model, r, min_channels, seed=[cfg.seed, _SE_INIT])
    return model


def evaluate(model, test: Dataset, batch_size: int = 500) -> float:
    """Top-1 accuracy over the whole set; no augmentation, eval-mode forward."""
    was_training = model.training
    model.eval()
    correct = 0
    try:
        for x, y in sequential_batches(test, batch_size):
            correct += int((model.forward(x).argmax(axis=1) == y).sum())
    finally:
        model.train(was_training)
    return correct / len(test)


class _MetricsWriter:
    def __init__(self, out_dir, cfg):
        self.out_dir = out_dir
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        meta = run_metadata(cfg)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.metrics = open(os.path.join(out_dir, "metrics.jsonl"), "w")
        self.timing = open(os.path.join(out_dir, "timing.jsonl"), "w")
        self._write(self.metrics, {"config": cfg.to_dict()})

    @staticmethod
    def _write(fh, obj):
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
        fh.flush()

    def epoch(self, m: EpochMetrics):
        if self.out_dir is None:
            return
        self._write(self.metrics, m.record())
        self._write(self.timing, {"epoch": m.epoch, "wall_seconds": m.wall_seconds})

    def final(self, summary: dict, model):
        if self.out_dir is None:
            return
        self._write(self.metrics, {"final": summary})
        self.metrics.close()
        self.timing.close()
        save(model, os.path.join(self.out_dir, "final.ckpt"))


def train(cfg: TrainConfig, train_set: Dataset, test_set: Dataset, out_dir=None) -> TrainResult:
    """Train ``cfg.model_name`` with the enabled techniques.

    Per batch: cutout -> mixup -> label smoothing -> forward -> cross-entropy ->
    backward -> SAM or plain SGD step, at the one-cycle or constant lr.
    Per epoch: SWA snapshot once past the start fraction, then test accuracy.
    BlurPool and SE are applied when the model is built.
    """
    if cfg.train_limit:
        train_set = train_set.subset(cfg.train_limit)
    model = build_for_config(cfg).train()
    params = optim.model_params(model)
    sgd = optim.SgdState(cfg.lr, cfg.momentum, cfg.weight_decay,
                         decay=optim.decayed_names(model))
    batches = BatchIterator(train_set, cfg.batch_size, make_rng([cfg.seed, _SHUFFLE]))
    cutout_rng = make_rng([cfg.seed, _CUTOUT])
    mixup_rng = make_rng([cfg.seed, _MIXUP])
    steps_per_epoch = len(batches)
    total_steps = cfg.epochs * steps_per_epoch
    if cfg.max_steps:
        total_steps = min(total_steps, cfg.max_steps)
    schedule = None
    if cfg.one_cycle:
        schedule = optim.OneCycleSchedule(cfg.lr_max, total_steps, cfg.one_cycle_div,
                                          cfg.one_cycle_final_div, cfg.one_cycle_pct_up)
    swa = optim.SwaState(cfg.swa) if cfg.swa is not None else None
    writer = _MetricsWriter(out_dir, cfg)
    result = TrainResult(model, [], 0.0)

    state = {"logits": None}

    def grad_fn(x, targets):
        def run():
            logits = model.forward(x)
            loss, dlogits = reg.cross_entropy(logits, targets)
            model.backward(dlogits)
            result.grad_passes += 1
            if state["logits"] is None:
                state["logits"] = logits
            return loss, optim.model_grads(model)
        return run

    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        loss_sum, correct, seen = 0.0, 0, 0
        for b, (x, labels) in enumerate(batches.epoch()):
            if step >= total_steps:
                break
            if cfg.cutout is not None:
                x = reg.cutout(x, cfg.cutout, cutout_rng)
            targets = reg.one_hot(labels)
            if cfg.mixup is not None:
                delta = reg.sample_mixup_delta(mixup_rng, cfg.mixup)
                perm = mixup_rng.permutation(len(labels))
                x, targets = reg.mixup(x, targets, delta, perm)
            if cfg.label_smoothing:
                targets = reg.label_smooth(targets, cfg.label_smoothing)
            sgd.lr = schedule(step) if schedule is not None else cfg.lr
            state["logits"] = None
            try:
                if cfg.sam is not None:
                    loss = optim.sam_step(params, grad_fn(x, targets), cfg.sam, sgd)
                else:
                    loss, grads = grad_fn(x, targets)()
                    optim.sgd_step(params, grads, sgd)
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"diverged at epoch {epoch} batch {b} (lr={sgd.lr:.6g}): {exc}") from exc
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {b} (lr={sgd.lr:.6g})")
            result.step_losses.append(loss)
            loss_sum += loss * len(labels)
            correct += int((state["logits"].argmax(axis=1) == labels).sum())
            seen += len(labels)
            step += 1
        if swa is not None and optim.swa_should_update(epoch, cfg.epochs, swa):
            optim.swa_update(swa, params)
            result.swa_snapshots += 1
        test_acc = evaluate(model, test_set, cfg.eval_batch_size)
        m = EpochMetrics(epoch, loss_sum / max(seen, 1), correct / max(seen, 1), test_acc,
                         float(sgd.lr), time.perf_counter() - t0)
        result.metrics.append(m)
        writer.epoch(m)
        log.info("epoch %d loss %.4f train %.4f test %.4f lr %.4g (%.1fs)", epoch,
                 m.train_loss, m.train_acc, m.test_acc, m.lr_at_epoch_end, m.wall_seconds)
        if step >= total_steps:
            break

    if swa is not None and swa.n_averaged:
        optim.swa_finalize(swa, model, sequential_batches(train_set, cfg.batch_size))
        result.final_test_acc = evaluate(model, test_set, cfg.eval_batch_size)
    else:
        result.final_test_acc = result.metrics[-1].test_acc
    result.steps = step
    model.eval()
    writer.final({"test_acc": result.final_test_acc, "steps": step,
                  "grad_passes": result.grad_passes,
                  "swa_snapshots": result.swa_snapshots}, model)
    return result
