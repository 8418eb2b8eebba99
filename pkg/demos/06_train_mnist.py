# A short MNIST run with one-cycle, then the same config with BlurPool.
#
#   python demos/06_train_mnist.py [DATA_DIR] [EPOCHS]
#
# DATA_DIR holds the four IDX files (default: $NANOCNN_MNIST_DIR or /root/data/mnist).

import logging
import os
import sys

from nanocnn import TrainConfig, train
from nanocnn.data import load_mnist

logging.basicConfig(level=logging.INFO, format="%(message)s")

data_dir = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("NANOCNN_MNIST_DIR", "/root/data/mnist")
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 2
train_set, test_set = load_mnist(data_dir)

for blurpool in (False, True):
    cfg = TrainConfig("mnist-1.5k-dw", epochs=epochs, one_cycle=True, lr_max=0.2,
                      blurpool=blurpool, seed=0)
    result = train(cfg, train_set, test_set, out_dir=f"runs/demo-bp{int(blurpool)}")
    print(f"blurpool={blurpool}: test accuracy {result.final_test_acc:.4f}")
