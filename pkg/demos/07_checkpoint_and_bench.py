# Save, reload and benchmark a model.
#
#   python demos/07_checkpoint_and_bench.py [DATA_DIR]
#
# An untrained model needs batch-norm statistics before it can run in eval
# mode, so a few training batches are pushed through first.

import os
import sys
import tempfile

from nanocnn import build_model, load, save
from nanocnn.bench import bench_checkpoint
from nanocnn.data import load_mnist, sequential_batches
from nanocnn.optim import recalibrate_batchnorm

data_dir = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("NANOCNN_MNIST_DIR", "/root/data/mnist")
train_set, test_set = load_mnist(data_dir)

tmp = tempfile.mkdtemp()
for name in ("mnist-1.5k-dw", "mnist-25k"):
    model = build_model(name)
    recalibrate_batchnorm(model, sequential_batches(train_set.subset(1280), 128))
    path = os.path.join(tmp, name + ".ckpt")
    print(name, "wrote", save(model.eval(), path), "bytes")
    back = load(path)
    assert all((a == b).all() for a, b in zip(model.state_dict().values(),
                                              back.state_dict().values()))
    report = bench_checkpoint(path, test_set, batch_size=100, repeats=3)
    print(f"  median latency {report.latency_seconds:.3f}s over {report.points} points, "
          f"size {report.size_kb:.1f} KB")
