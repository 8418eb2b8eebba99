"""MNIST (IDX) and CIFAR-10 (binary) loaders plus seeded batch iteration."""
from __future__ import annotations

import gzip
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, make_rng

MNIST_MEAN, MNIST_STD = 0.1307, 0.3081
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)
CIFAR_RECORD = 1 + 3 * 32 * 32

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILES = ["test_batch.bin"]


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    source_checksum: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError("image and label counts differ")
        if self.labels.size and self.labels.max() >= 10:
            raise DataFormatError("labels must be < 10")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, n: int) -> "Dataset":
        """The first ``n`` examples (no reshuffle)."""
        return Dataset(self.images[:n], self.labels[:n], self.split,
                       self.source_checksum, dict(self.meta, subset=n))


def _read(path) -> bytes:
    path = str(path)
    if not os.path.exists(path) and os.path.exists(path + ".gz"):
        path += ".gz"
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx(raw: bytes, expected_magic: int) -> np.ndarray:
    if len(raw) < 8:
        raise DataFormatError("IDX header truncated")
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise DataFormatError(f"bad IDX magic {magic}, expected {expected_magic}")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError("IDX header truncated")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise DataFormatError(f"IDX payload truncated: {len(raw) - header} of {count} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path, split="train") -> Dataset:
    raw_images, raw_labels = _read(images_path), _read(labels_path)
    images = parse_idx(raw_images, IDX_IMAGES_MAGIC)
    labels = parse_idx(raw_labels, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = ((images.astype(DTYPE) / 255.0 - MNIST_MEAN) / MNIST_STD).astype(DTYPE)
    digest = hashlib.sha256(raw_images + raw_labels).hexdigest()
    return Dataset(x[:, None, :, :], labels.astype(np.int64), split, digest,
                   {"dataset": "mnist", "mean": MNIST_MEAN, "std": MNIST_STD})


def load_cifar10_bin(batch_paths, split="train") -> Dataset:
    images, labels, h = [], [], hashlib.sha256()
    for path in batch_paths:
        raw = _read(path)
        if len(raw) % CIFAR_RECORD:
            raise DataFormatError(
                f"{path}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD}")
        h.update(raw)
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        if rec.shape[0] and rec[:, 0].max() >= 10:
            raise DataFormatError(f"{path}: label byte >= 10")
        labels.append(rec[:, 0].astype(np.int64))
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    x = np.concatenate(images).astype(DTYPE) / 255.0
    mean = np.array(CIFAR_MEAN, DTYPE).reshape(1, 3, 1, 1)
    std = np.array(CIFAR_STD, DTYPE).reshape(1, 3, 1, 1)
    x = ((x - mean) / std).astype(DTYPE)
    return Dataset(x, np.concatenate(labels), split, h.hexdigest(),
                   {"dataset": "cifar10", "mean": CIFAR_MEAN, "std": CIFAR_STD})


def _find_dir(data_dir, names):
    for d in (data_dir, os.path.join(data_dir, "cifar-10-batches-bin"),
              os.path.join(data_dir, "mnist"), os.path.join(data_dir, "cifar10")):
        if all(os.path.exists(os.path.join(d, n)) or os.path.exists(os.path.join(d, n + ".gz"))
               for n in names):
            return d
    raise FileNotFoundError(f"could not find {', '.join(names)} under {data_dir}")


def load_mnist(data_dir):
    """``(train, test)`` datasets from the four canonical IDX files in ``data_dir``."""
    out = []
    for split in ("train", "test"):
        d = _find_dir(data_dir, MNIST_FILES[split])
        img, lab = MNIST_FILES[split]
        out.append(load_mnist_idx(os.path.join(d, img), os.path.join(d, lab), split))
    return tuple(out)


def load_cifar10(data_dir):
    d = _find_dir(data_dir, CIFAR_TRAIN_FILES + CIFAR_TEST_FILES)
    train = load_cifar10_bin([os.path.join(d, f) for f in CIFAR_TRAIN_FILES], "train")
    test = load_cifar10_bin([os.path.join(d, f) for f in CIFAR_TEST_FILES], "test")
    return train, test


def load_for_model(model_name: str, data_dir):
    if model_name.startswith("mnist"):
        return load_mnist(data_dir)
    if model_name.startswith("cifar"):
        return load_cifar10(data_dir)
    raise ValueError(f"no dataset known for model {model_name!r}")


class BatchIterator:
    """Shuffled mini-batches; each call to ``epoch()`` draws a fresh permutation."""

    def __init__(self, dataset: Dataset, batch_size: int, rng=None, *,
                 shuffle: bool = True, drop_last: bool = False):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng if rng is not None else make_rng(0)
        self.shuffle = shuffle
        self.drop_last = drop_last

    def __len__(self):
        n, b = len(self.dataset), self.batch_size
        return n // b if self.drop_last else -(-n // b)

    def epoch_indices(self) -> np.ndarray:
        n = len(self.dataset)
        # Generator.permutation is a Fisher-Yates shuffle
        return self.rng.permutation(n) if self.shuffle else np.arange(n)

    def index_batches(self):
        order = self.epoch_indices()
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            if self.drop_last and len(idx) < self.batch_size:
                break
            yield idx

    def epoch(self):
        for idx in self.index_batches():
            yield self.dataset.images[idx], self.dataset.labels[idx]

    __iter__ = epoch


def batches(it: BatchIterator):
    return it.epoch()


def sequential_batches(dataset: Dataset, batch_size: int):
    """Unshuffled, unaugmented batches (used for evaluation)."""
    for start in range(0, len(dataset), batch_size):
        yield (dataset.images[start:start + batch_size],
               dataset.labels[start:start + batch_size])
