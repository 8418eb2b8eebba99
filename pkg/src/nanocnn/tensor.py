"""Dense float tensors and the seeded random source shared by every module.

Tensors are plain ``numpy.ndarray`` values in C (row-major) order. Training runs
in float32; float64 is used only by the gradient checks.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float32
RNG_ALGORITHM = "numpy.PCG64"


class ShapeError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Return the pinned generator (PCG64) for ``seed`` (an int or a list of ints)."""
    return np.random.Generator(np.random.PCG64(seed))


def create(shape, fill=0.0, dtype=DTYPE) -> np.ndarray:
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")
    if np.isscalar(fill):
        return np.full(shape, fill, dtype=dtype)
    buf = np.asarray(fill, dtype=dtype).ravel()
    if buf.size != int(np.prod(shape)):
        raise ShapeError(f"buffer of length {buf.size} does not fill shape {shape}")
    return buf.reshape(shape).copy()


def reshape(x: np.ndarray, shape) -> np.ndarray:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    return np.ascontiguousarray(x).reshape(shape)


def channel_vector(b: np.ndarray, like: np.ndarray) -> np.ndarray:
    """View a per-channel vector so it broadcasts over ``[N, C, H, W]``."""
    return b.reshape(1, -1, *([1] * (like.ndim - 2)))


_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def map2(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Elementwise ``op``; ``b`` may also be a channel vector for a 4-D ``a``."""
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    if a.shape != b.shape:
        if a.ndim == 4 and b.ndim == 1 and b.shape[0] == a.shape[1]:
            b = channel_vector(b, a)
        else:
            raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")
    return _OPS[op](a, b)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def reduce_mean(x: np.ndarray, axes) -> np.ndarray:
    axes = tuple(axes)
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise ShapeError(f"axis {ax} out of range for rank {x.ndim}")
    if not axes:
        return x
    return x.mean(axis=axes, dtype=x.dtype)


def check_finite(x: np.ndarray, what: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
