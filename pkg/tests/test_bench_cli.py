import statistics
import subprocess
import sys
import time

import numpy as np
import pytest

from nanocnn import zoo
from nanocnn.bench import BenchReport, bench_checkpoint, bench_inference
from nanocnn.cli import main
from nanocnn.data import Dataset, load_mnist

pytestmark = pytest.mark.filterwarnings("ignore:benchmarking on")


@pytest.fixture
def ckpt(tmp_path, mnist_like_dir):
    m = zoo.build_model("mnist-1.5k-dw", seed=0)
    train, _ = load_mnist(mnist_like_dir)
    m.forward(train.images[:64])
    path = tmp_path / "m.ckpt"
    zoo.save(m, path)
    return path


def test_params_prints_count(capsys):
    assert main(["params", "mnist-1.5k-dw"]) == 0
    assert capsys.readouterr().out.strip() == "1560"


def test_exit_code_table(tmp_path, ckpt, mnist_like_dir, capsys):
    d, out = str(mnist_like_dir), str(tmp_path / "run")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + b"\0" * 20)
    table = [
        (["params", "mnist-1.5k-dw"], 0),
        (["params", "cifar-143k-dw"], 0),
        (["params", "no-such-model"], 2),
        ([], 2),
        (["frobnicate"], 2),
        (["train", "--model", "mnist-1.5k-dw", "--data-dir", d, "--out", out,
          "--epochs", "1", "--seed", "7", "--train-limit", "64"], 0),
        (["train", "--model", "mnist-1.5k-dw", "--data-dir", d], 2),
        (["train", "--model", "mnist-1.5k-dw", "--data-dir", str(tmp_path / "nowhere"),
          "--out", out, "--epochs", "1"], 1),
        (["eval", "--ckpt", str(ckpt), "--data-dir", d], 0),
        (["eval", "--ckpt", str(bad), "--data-dir", d], 1),
        (["bench", "--ckpt", str(ckpt), "--data-dir", d, "--batch", "50", "--repeats", "3",
          "--json", str(tmp_path / "r.json")], 0),
        (["bench", "--ckpt", str(ckpt), "--data-dir", d, "--repeats", "2",
          "--json", str(tmp_path / "r.json")], 2),
    ]
    assert len(table) == 12
    for argv, code in table:
        capsys.readouterr()
        assert main(argv) == code, argv
        err = capsys.readouterr().err
        if code:
            lines = [l for l in err.splitlines() if l.startswith(("error", "usage error"))]
            assert len(lines) == 1, err


def test_cli_train_twice_is_byte_identical(tmp_path, mnist_like_dir):
    for run in ("a", "b"):
        assert main(["train", "--model", "mnist-1.5k-dw", "--data-dir", str(mnist_like_dir),
                     "--epochs", "1", "--seed", "7", "--cutout", "--mixup",
                     "--label-smoothing", "0.1", "--out", str(tmp_path / run)]) == 0
    for name in ("config.json", "metrics.jsonl", "final.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bench_json_round_trip(tmp_path, ckpt, mnist_like_dir):
    _, test = load_mnist(mnist_like_dir)
    report = bench_checkpoint(ckpt, test, batch_size=50, repeats=3)
    assert BenchReport.from_json(report.to_json()) == report
    assert report.params == zoo.count_params(zoo.load(ckpt)) == 1560
    assert report.size_kb == pytest.approx(zoo.model_size_bytes(ckpt) / 1024)
    assert report.latency_seconds > 0 and report.repeats == 3
    assert report.host["threads"] == 1
    assert report.latency_seconds == statistics.median(report.latency_runs)


def test_bench_warns_on_wrong_size_and_rejects_few_repeats(mnist_like_dir):
    model = zoo.build_model("mnist-1.5k-dw")
    _, test = load_mnist(mnist_like_dir)
    model.forward(test.images[:32])
    with pytest.warns(UserWarning, match="200 points"):
        bench_inference(model, test, repeats=3)
    with pytest.raises(ValueError):
        bench_inference(model, test, repeats=2)


def test_bench_accuracy_is_deterministic(mnist_like_dir, ckpt):
    _, test = load_mnist(mnist_like_dir)
    a = bench_checkpoint(ckpt, test, repeats=3).accuracy
    b = bench_checkpoint(ckpt, test, repeats=3).accuracy
    assert a == b


def test_latency_roughly_linear_in_points():
    model = zoo.build_model("mnist-1.5k-dw")
    x = np.random.default_rng(0).normal(size=(2000, 1, 28, 28)).astype(np.float32)
    model.forward(x[:100])
    model.eval()
    ds = Dataset(x, np.zeros(2000, np.int64), "test")

    def one_batch():
        t0 = time.perf_counter()
        model.forward(x[:100])
        return time.perf_counter() - t0

    per_batch = statistics.median(one_batch() for _ in range(15))
    full = bench_inference(model, ds, batch_size=100, repeats=3).latency_seconds
    assert abs(full - 20 * per_batch) <= 0.2 * 20 * per_batch


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "nanocnn", "params", "mnist-25k"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == "25144"
