"""Inference benchmark: accuracy, median single-thread latency, checkpoint size."""
from __future__ import annotations

import dataclasses
import json
import os
import platform
import statistics
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .data import Dataset, sequential_batches
from .zoo import load, model_size_bytes

TEST_POINTS = 10_000


@dataclass
class BenchReport:
    model_name: str
    params: int
    accuracy: float
    latency_seconds: float
    size_kb: float | None
    batch_size: int
    repeats: int
    points: int
    latency_runs: list = field(default_factory=list)
    host: dict = field(default_factory=dict)
    note: str = "timed forward passes only; inputs pre-materialized in memory"

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls(**json.loads(text))


def host_fingerprint(threads: int) -> dict:
    return {"threads": threads, "cpu_count": os.cpu_count(), "machine": platform.machine(),
            "python": platform.python_version(), "numpy": np.__version__}


def _full_pass(model, test, batch_size):
    correct = 0
    for x, y in sequential_batches(test, batch_size):
        correct += int((model.forward(x).argmax(axis=1) == y).sum())
    return correct


def bench_inference(model, test: Dataset, batch_size: int = 100, repeats: int = 3,
                    threads: int = 1, size_bytes: int | None = None) -> BenchReport:
    """One untimed warm-up pass (which also yields the accuracy), then ``repeats``
    timed passes over the whole test set; the report carries the median."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if len(test) != TEST_POINTS:
        warnings.warn(f"benchmarking on {len(test)} points, not {TEST_POINTS}", stacklevel=2)
    model.eval()
    runs = []
    with threadpool_limits(limits=threads):
        correct = _full_pass(model, test, batch_size)
        for _ in range(repeats):
            t0 = time.perf_counter()
            _full_pass(model, test, batch_size)
            runs.append(time.perf_counter() - t0)
    return BenchReport(
        model_name="+".join([model.name, *getattr(model, "variants", [])]),
        params=model.count_params(),
        accuracy=correct / len(test),
        latency_seconds=statistics.median(runs),
        size_kb=None if size_bytes is None else size_bytes / 1024,
        batch_size=batch_size, repeats=repeats, points=len(test),
        latency_runs=runs, host=host_fingerprint(threads))


def bench_checkpoint(path, test: Dataset, batch_size: int = 100, repeats: int = 3,
                     threads: int = 1) -> BenchReport:
    model = load(path)
    return bench_inference(model, test, batch_size, repeats, threads,
                           size_bytes=model_size_bytes(path))
