"""The eight MNIST / CIFAR-10 architectures, technique transforms and checkpoints.

Conventions (reconstructed from the published parameter totals):

* MNIST convs have no bias; CIFAR non-classifier convs have a bias, and in a
  depthwise-separable block both stages carry one.
* Every 3x3 / depthwise-separable conv is followed by BatchNorm and ReLU.
  Transition 1x1 convs and the classifier have neither.
* 3x3 convs use padding 1, so spatial size only changes at the pools.
"""
from __future__ import annotations

import copy
import os
import struct
from dataclasses import dataclass

import numpy as np

from .layers import (BatchNorm2d, BlurConvDownsample, BlurMaxPool, Conv2d, ConvConfig,
                     DepthwiseSeparable, Flatten, GlobalAvgPool, MaxPool2x2, ReLU,
                     Sequential, SqueezeExcite)
from .tensor import make_rng

CONV3, CONV_DW, TRANSITION, MAXPOOL, GAP, CLASSIFIER = (
    "Conv3x3", "ConvDW", "Transition1x1", "MaxPool", "GAP", "Classifier1x1")


@dataclass(frozen=True)
class BlockDesc:
    kind: str
    in_ch: int = 0
    out_ch: int = 0

    @property
    def followed_by_bn(self) -> bool:
        return self.kind in (CONV3, CONV_DW)

    @property
    def followed_by_relu(self) -> bool:
        return self.kind in (CONV3, CONV_DW)


@dataclass(frozen=True)
class ArchSpec:
    name: str
    blocks: tuple
    conv_bias: bool
    input_shape: tuple
    expected_params: int

    @property
    def dataset(self) -> str:
        return self.name.split("-")[0]


def _c(i, o):
    return BlockDesc(CONV3, i, o)


def _dw(i, o):
    return BlockDesc(CONV_DW, i, o)


def _tb(i, o):
    return BlockDesc(TRANSITION, i, o)


def _cls(i):
    return BlockDesc(CLASSIFIER, i, 10)


_MP, _GAP = BlockDesc(MAXPOOL), BlockDesc(GAP)
_MNIST, _CIFAR = (1, 28, 28), (3, 32, 32)

ARCHITECTURES = {spec.name: spec for spec in [
    ArchSpec("mnist-25k", (_c(1, 8), _c(8, 16), _MP, _c(16, 32), _c(32, 64), _MP,
                           _GAP, _cls(64)), False, _MNIST, 25_144),
    ArchSpec("mnist-7k", (_c(1, 8), _c(8, 12), _tb(12, 8), _MP, _c(8, 12), _c(12, 16),
                          _tb(16, 12), _MP, _c(12, 15), _c(15, 15), _GAP, _cls(15)),
             False, _MNIST, 7_767),
    ArchSpec("mnist-7k-dw", (_c(1, 10), _dw(10, 12), _tb(12, 10), _MP, _c(10, 13),
                             _c(13, 16), _tb(16, 12), _MP, _c(12, 15), _c(15, 15), _GAP,
                             _cls(15)), False, _MNIST, 7_611),
    ArchSpec("mnist-5k", (_c(1, 8), _c(8, 12), _tb(12, 8), _MP, _c(8, 12), _c(12, 16),
                          _tb(16, 12), _MP, _c(12, 15), _GAP, _cls(15)),
             False, _MNIST, 5_712),
    ArchSpec("mnist-5k-dw", (_c(1, 8), _dw(8, 12), _tb(12, 8), _MP, _c(8, 13), _c(13, 18),
                             _tb(18, 12), _MP, _c(12, 16), _GAP, _cls(16)),
             False, _MNIST, 5_616),
    ArchSpec("mnist-1.5k-dw", (_c(1, 8), _dw(8, 12), _tb(12, 8), _MP, _dw(8, 12),
                               _dw(12, 16), _tb(16, 12), _MP, _dw(12, 15), _GAP, _cls(15)),
             False, _MNIST, 1_560),
    ArchSpec("cifar-143k", (_c(3, 16), _c(16, 16), _MP, _c(16, 32), _c(32, 32), _MP,
                            _c(32, 64), _c(64, 64), _MP, _c(64, 120), _GAP, _cls(120)),
             True, _CIFAR, 143_208),
    ArchSpec("cifar-143k-dw", (_c(3, 16), _c(16, 16), _MP, _dw(16, 32), _c(32, 32), _MP,
                               _dw(32, 64), _c(64, 64), _MP, _dw(64, 128), _dw(128, 192),
                               _dw(192, 260), _GAP, _cls(260)),
             True, _CIFAR, 143_396),
]}

EXPECTED_PARAM_COUNTS = {name: spec.expected_params for name, spec in ARCHITECTURES.items()}


class UnknownModelError(KeyError):
    pass


def get_spec(name: str) -> ArchSpec:
    try:
        return ARCHITECTURES[name]
    except KeyError:
        raise UnknownModelError(
            f"unknown model {name!r}; choose from {', '.join(ARCHITECTURES)}") from None


def build_model(name: str, seed: int = 0) -> Sequential:
    spec = get_spec(name)
    rng = make_rng(seed)
    layers = []
    for block in spec.blocks:
        if block.kind == CONV3:
            layers.append(Conv2d(ConvConfig(block.in_ch, block.out_ch, 3,
                                            has_bias=spec.conv_bias), rng))
        elif block.kind == CONV_DW:
            layers.append(DepthwiseSeparable(block.in_ch, block.out_ch, spec.conv_bias, rng))
        elif block.kind == TRANSITION:
            layers.append(Conv2d(ConvConfig(block.in_ch, block.out_ch, 1,
                                            has_bias=spec.conv_bias), rng))
        elif block.kind == CLASSIFIER:
            layers.append(Conv2d(ConvConfig(block.in_ch, block.out_ch, 1), rng))
            layers.append(Flatten())
        elif block.kind == MAXPOOL:
            layers.append(MaxPool2x2())
        elif block.kind == GAP:
            layers.append(GlobalAvgPool())
        if block.followed_by_bn:
            layers.append(BatchNorm2d(block.out_ch))
        if block.followed_by_relu:
            relu = ReLU()
            relu.se_channels = block.out_ch  # SE insertion point
            layers.append(relu)
    model = Sequential(layers, name=name)
    model.variants = []
    return model


def count_params(model) -> int:
    return model.count_params()


def _clone(model) -> Sequential:
    out = copy.deepcopy(model)
    for layer in out.layers:
        layer._cache = None
    return out


def apply_blurpool(model) -> Sequential:
    """Swap every max-pool for blur-max-pool and every stride-2 conv for conv + blur."""
    out = _clone(model)
    layers = []
    for layer in out.layers:
        if isinstance(layer, MaxPool2x2):
            layer = BlurMaxPool()
        elif isinstance(layer, Conv2d) and layer.cfg.stride == 2:
            layer = BlurConvDownsample(layer.cfg, weight=layer.params["weight"],
                                       bias=layer.params.get("bias"))
        layers.append(layer)
    out.layers = layers
    out.variants = list(model.variants) + ["blurpool"]
    return out.train(model.training)


def se_latent(channels: int, r: float = 4, min_channels: int = 8) -> int:
    return max(min_channels, int(channels // r))


def apply_se(model, r: float = 4, min_channels: int = 8, seed: int = 0) -> Sequential:
    """Insert a squeeze-excite block after the activation of every 3x3 / DW conv block."""
    out = _clone(model)
    rng = make_rng(seed)
    layers = []
    for layer in out.layers:
        layers.append(layer)
        channels = getattr(layer, "se_channels", None)
        if channels is not None:
            layers.append(SqueezeExcite(channels, se_latent(channels, r, min_channels), rng))
    out.layers = layers
    out.variants = list(model.variants) + [f"se:{r:g}:{min_channels}"]
    return out.train(model.training)


def arch_string(model) -> str:
    return "+".join([model.name, *getattr(model, "variants", [])])


def build_from_arch_string(arch: str) -> Sequential:
    name, *variants = arch.split("+")
    model = build_model(name)
    for v in variants:
        if v == "blurpool":
            model = apply_blurpool(model)
        elif v.startswith("se:"):
            _, r, m = v.split(":")
            model = apply_se(model, float(r), int(m))
        else:
            raise ValueError(f"unknown model variant {v!r}")
    return model


# ---------------------------------------------------------------------------
# checkpoint container
#
#   magic    8 bytes  b"NANOCNN1"
#   u32      arch string length, then UTF-8 bytes ("name+variant+...")
#   u32      record count
#   record:  u32 name length, name bytes, u32 rank, rank x u32 dims,
#            prod(dims) x float32
#
# All integers and floats little-endian.

MAGIC = b"NANOCNN1"
_MAX_ELEMENTS = 1 << 28


class CheckpointError(ValueError):
    pass


def checkpoint_size(arch: str, state: dict) -> int:
    size = len(MAGIC) + 4 + len(arch.encode()) + 4
    for name, value in state.items():
        size += 4 + len(name.encode()) + 4 + 4 * value.ndim + 4 * value.size
    return size


def save(model, path) -> int:
    """Write ``model`` to ``path``; returns the number of bytes written."""
    arch = arch_string(model).encode()
    state = model.state_dict()
    parts = [MAGIC, struct.pack("<I", len(arch)), arch, struct.pack("<I", len(state))]
    for name, value in state.items():
        key = name.encode()
        parts.append(struct.pack("<I", len(key)) + key)
        parts.append(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode()
        except UnicodeDecodeError:
            raise CheckpointError(f"undecodable string at byte {self.pos - len(raw)}") from None


def read_checkpoint(path):
    """Parse a checkpoint into ``(arch string, {name: float32 array})``."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a nanocnn checkpoint (bad magic)")
    arch = r.text()
    state = {}
    for _ in range(r.u32()):
        name = r.text()
        rank = r.u32()
        if rank > 8:
            raise CheckpointError(f"{name}: implausible rank {rank}")
        dims = [r.u32() for _ in range(rank)]
        count = 1
        for d in dims:
            count *= d
            if count > _MAX_ELEMENTS:
                raise CheckpointError(f"{name}: dimensions {dims} overflow")
        state[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return arch, state


def load(path) -> Sequential:
    arch, state = read_checkpoint(path)
    try:
        model = build_from_arch_string(arch)
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return model.eval()


def model_size_bytes(path) -> int:
    return os.path.getsize(path)
