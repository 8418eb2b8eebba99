import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

MNIST_DIR = os.environ.get("NANOCNN_MNIST_DIR", "/root/data/mnist")
CIFAR_DIR = os.environ.get("NANOCNN_CIFAR_DIR", "")


def write_idx(path, array, magic):
    array = np.asarray(array, dtype=np.uint8)
    header = magic.to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in array.shape)
    with open(path, "wb") as fh:
        fh.write(header + array.tobytes())


def write_cifar_bin(path, images, labels):
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)
    rec = np.concatenate([np.asarray(labels, np.uint8)[:, None], images], axis=1)
    with open(path, "wb") as fh:
        fh.write(rec.tobytes())


def synthetic_digits(rng, n, size=28):
    """Images whose class is encoded by which horizontal band is bright."""
    labels = rng.integers(0, 10, size=n)
    images = rng.integers(0, 60, size=(n, size, size))
    band = size // 10
    for i, y in enumerate(labels):
        images[i, y * band:(y + 1) * band + 2, 4:size - 4] = 230
    return images.astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mnist_like_dir(tmp_path):
    """A tiny MNIST-format directory (IDX files) with a learnable synthetic task."""
    r = np.random.default_rng(7)
    for split, n, (img_name, lab_name) in [
            ("train", 512, ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")),
            ("test", 200, ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"))]:
        images, labels = synthetic_digits(r, n)
        write_idx(tmp_path / img_name, images, 2051)
        write_idx(tmp_path / lab_name, labels, 2049)
    return tmp_path


@pytest.fixture(scope="session")
def mnist_dir():
    if not os.path.exists(os.path.join(MNIST_DIR, "train-images-idx3-ubyte")):
        pytest.fail(f"MNIST IDX files not found in {MNIST_DIR}; set NANOCNN_MNIST_DIR")
    return MNIST_DIR


@pytest.fixture(scope="session")
def mnist(mnist_dir):
    from nanocnn.data import load_mnist
    return load_mnist(mnist_dir)


def write_synthetic_cifar(root, n_train_per_file=5120, n_test=1000, seed=0):
    """CIFAR-10 binary files with a learnable class structure: each class has its
    own mean colour and grating orientation, under heavy pixel noise."""
    rng = np.random.default_rng(seed)
    colours = rng.uniform(60, 200, size=(10, 3))
    yy, xx = np.mgrid[0:32, 0:32]
    gratings = np.stack([np.sin((np.cos(a) * xx + np.sin(a) * yy) * 0.6)
                         for a in np.linspace(0, np.pi, 10, endpoint=False)])

    def make(n):
        labels = rng.integers(0, 10, n)
        img = colours[labels][:, :, None, None] + 40 * gratings[labels][:, None]
        img = img + rng.normal(0, 45, size=(n, 3, 32, 32))
        return np.clip(img, 0, 255).astype(np.uint8), labels

    for i in range(1, 6):
        write_cifar_bin(os.path.join(root, f"data_batch_{i}.bin"), *make(n_train_per_file))
    write_cifar_bin(os.path.join(root, "test_batch.bin"), *make(n_test))
    return root


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
