"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``ACCEPTANCE Cn PASS|FAIL ...`` line as it finishes, and the
lines are repeated in the terminal summary.

Training budget used by C3/C4: 4 epochs (within the 20-epoch ceiling), batch 64,
one-cycle with lr_max 0.2, seeds 0, 1, 2. Chosen so the three seeds of each
arm fit the 15-minute limit on a single CPU core.
"""
import math
import statistics
import time

import numpy as np
import pytest

from conftest import CIFAR_DIR, write_synthetic_cifar
from gradcheck import gradcheck, softmax_ce_error
from nanocnn import layers as L, optim, regularizers as reg, zoo
from nanocnn.bench import bench_checkpoint
from nanocnn.cli import main as cli_main
from nanocnn.data import load_cifar10, sequential_batches
from nanocnn.trainer import TrainConfig, train
from oracles import separated_values

EPOCHS, LR_MAX, BATCH = 4, 0.2, 64
SEEDS = (0, 1, 2)
C3_FLOOR, C3_TARGET, C3_LIMIT_S = 0.975, 0.9835, 15 * 60
C4_TOLERANCE = 0.001
REF_BASELINE, REF_BLURPOOL = 0.9835, 0.9921


@pytest.fixture
def report(request, capsys):
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def emit(n, ok, detail):
        line = f"ACCEPTANCE C{n} {'PASS' if ok else 'FAIL'} {detail}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


# --- C1 --------------------------------------------------------------------------

def test_c1_parameter_counts(report, capsys):
    expected = {"mnist-25k": 25_144, "mnist-7k": 7_767, "mnist-7k-dw": 7_611,
                "mnist-5k": 5_712, "mnist-5k-dw": 5_616, "mnist-1.5k-dw": 1_560,
                "cifar-143k": 143_208, "cifar-143k-dw": 143_396}
    got, codes = {}, {}
    t0 = time.perf_counter()
    for name in expected:
        capsys.readouterr()
        codes[name] = cli_main(["params", name])
        got[name] = int(capsys.readouterr().out.strip())
    elapsed = time.perf_counter() - t0
    ok = got == expected and set(codes.values()) == {0} and elapsed < 1.0
    report(1, ok, f"counts={'exact' if got == expected else got} total={elapsed:.2f}s (<1s)")
    assert ok


# --- C2 --------------------------------------------------------------------------

def _grad_cases(rng):
    x = lambda *s: rng.normal(size=s)  # noqa: E731
    bn = L.BatchNorm2d(4)
    bn.params["gamma"] = rng.uniform(0.5, 1.5, 4).astype(np.float32)
    bn.params["beta"] = rng.normal(size=4).astype(np.float32)
    return {
        "conv3x3": (L.Conv2d(L.ConvConfig(3, 4, 3, has_bias=True), rng), x(2, 3, 6, 6)),
        "conv3x3-s2": (L.Conv2d(L.ConvConfig(3, 4, 3, 2, has_bias=True), rng), x(2, 3, 5, 5)),
        "conv1x1": (L.Conv2d(L.ConvConfig(4, 3, 1, has_bias=True), rng), x(2, 4, 6, 6)),
        "depthwise-separable": (L.DepthwiseSeparable(4, 3, True, rng), x(2, 4, 6, 6)),
        "batchnorm-train": (bn, x(2, 4, 6, 6)),
        "maxpool": (L.MaxPool2x2(), separated_values(rng, (2, 4, 6, 6))),
        "blur-maxpool": (L.BlurMaxPool(), separated_values(rng, (2, 4, 6, 6))),
        "blur-conv-downsample": (L.BlurConvDownsample(L.ConvConfig(3, 4, 1, 2, True), rng),
                                 x(2, 3, 6, 6)),
        "gap": (L.GlobalAvgPool(), x(2, 4, 6, 6)),
        "relu": (L.ReLU(), separated_values(rng, (2, 4, 6, 6))),
        "se": (L.SqueezeExcite(4, 2, rng), x(2, 4, 6, 6)),
        "softmax": (L.Softmax(), x(2, 10)),
    }


def test_c2_gradient_correctness(report):
    t0 = time.perf_counter()
    worst = {}
    for seed in range(5):
        rng = np.random.default_rng(seed)
        for kind, (layer, x) in _grad_cases(rng).items():
            worst[kind] = max(worst.get(kind, 0.0), max(gradcheck(layer, x, rng).values()))
        z = rng.normal(size=(2, 10))
        t = reg.label_smooth(reg.one_hot(rng.integers(0, 10, 2), dtype=np.float64), 0.1)
        worst["softmax+ce"] = max(worst.get("softmax+ce", 0.0), softmax_ce_error(z, t))
    elapsed = time.perf_counter() - t0
    max_err = max(worst.values())
    ok = max_err <= 1e-5 and elapsed < 60
    report(2, ok, f"{len(worst)} layer kinds x 5 seeds, max rel err {max_err:.2e} (<=1e-5), "
                  f"{elapsed:.1f}s (<60s)")
    assert ok, worst


# --- C3 / C4 ---------------------------------------------------------------------

def _train_arm(mnist, blurpool):
    train_set, test_set = mnist
    accs, t0 = [], time.perf_counter()
    for seed in SEEDS:
        cfg = TrainConfig("mnist-1.5k-dw", epochs=EPOCHS, batch_size=BATCH, seed=seed,
                          one_cycle=True, lr_max=LR_MAX, blurpool=blurpool)
        accs.append(train(cfg, train_set, test_set).final_test_acc)
    return accs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def baseline_arm(mnist):
    return _train_arm(mnist, blurpool=False)


@pytest.fixture(scope="module")
def blurpool_arm(mnist):
    return _train_arm(mnist, blurpool=True)


@pytest.mark.slow
def test_c3_mnist_desk_training(report, baseline_arm):
    accs, elapsed = baseline_arm
    mean = statistics.fmean(accs)
    ok = mean >= C3_FLOOR and elapsed <= C3_LIMIT_S
    report(3, ok, f"mean acc {mean:.4%} over seeds {SEEDS} "
                  f"({', '.join(f'{a:.2%}' for a in accs)}), floor {C3_FLOOR:.1%}, "
                  f"target {C3_TARGET:.2%} {'met' if mean >= C3_TARGET else 'not met'}; "
                  f"{EPOCHS} epochs; {elapsed:.0f}s (<= {C3_LIMIT_S}s)")
    assert ok


@pytest.mark.slow
def test_c4_blurpool_direction(report, baseline_arm, blurpool_arm):
    base = statistics.fmean(baseline_arm[0])
    bp = statistics.fmean(blurpool_arm[0])
    delta = bp - base
    ok = bp >= base - C4_TOLERANCE
    ahead = "yes" if delta > 0 else "no"
    report(4, ok, f"blurpool mean {bp:.4%} vs baseline {base:.4%} (delta {delta * 100:+.2f}pp, "
                  f"needs >= -0.10pp); blurpool ahead: {ahead} "
                  f"(expected about +{(REF_BLURPOOL - REF_BASELINE) * 100:.2f}pp); "
                  f"blurpool arm {blurpool_arm[1]:.0f}s")
    assert ok


# --- C5 --------------------------------------------------------------------------

def test_c5_optimizer_closed_forms(report):
    w = {"w": np.array([1.0])}
    optim.sam_step(w, lambda: (float(w["w"][0] ** 2), {"w": 2 * w["w"].copy()}),
                   optim.SamConfig(rho=0.1), optim.SgdState(0.1, momentum=0.0, weight_decay=0.0))
    sam_err = abs(w["w"][0] - 0.78)

    sched = optim.OneCycleSchedule(lr_max=0.2, total_steps=1000)
    odd = optim.OneCycleSchedule(lr_max=0.2, total_steps=1001)  # peak lands on step 500
    cycle_ok = (sched(0) == 0.2 / 25 and sched(999) == 0.2 / (25 * 1e4)
                and max(sched(i) for i in range(1000)) <= 0.2 and odd(500) == 0.2)

    rng = np.random.default_rng(0)
    snaps = [{"w": rng.normal(size=(16, 8)).astype(np.float32)} for _ in range(5)]
    s = optim.SwaState(0.75)
    for snap in snaps:
        optim.swa_update(s, snap)
    swa_err = float(np.abs(s.avg_params["w"] - np.mean([sn["w"].astype(np.float64)
                                                       for sn in snaps], axis=0)).max())
    epochs = [e for e in range(20) if optim.swa_should_update(e, 20, s)]

    ok = sam_err <= 1e-6 and cycle_ok and swa_err <= 1e-7 and epochs == [15, 16, 17, 18, 19]
    report(5, ok, f"SAM |w-0.78|={sam_err:.1e} (<=1e-6); one-cycle endpoints "
                  f"{'exact' if cycle_ok else 'WRONG'}; SWA err {swa_err:.1e} (<=1e-7); "
                  f"SWA epochs {epochs}")
    assert ok


# --- C6 --------------------------------------------------------------------------

def test_c6_regularizer_identities(report):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 1, 28, 28)).astype(np.float32)
    y = reg.one_hot(rng.integers(0, 10, 8))
    perm = rng.permutation(8)
    x1, y1 = reg.mixup(x, y, 1.0, perm)
    x0, y0 = reg.mixup(x, y, 0.0, perm)
    mixup_ok = (np.array_equal(x1, x) and np.array_equal(y1, y)
                and np.array_equal(x0, x[perm]) and np.array_equal(y0, y[perm]))

    t = reg.label_smooth(reg.one_hot([4]), 0.1)[0]
    ls_ok = abs(t[4] - 0.91) <= 1e-7 and np.abs(np.delete(t, 4) - 0.01).max() <= 1e-7

    ce, _ = reg.cross_entropy(np.zeros((5, 10)), reg.one_hot(np.arange(5), dtype=np.float64))
    ce_err = abs(ce - math.log(10))

    cfg = reg.CutoutConfig()
    out = reg.cutout(x, cfg, np.random.default_rng(3))
    centres = np.random.default_rng(3)
    cy, cx = centres.integers(0, 28, 8), centres.integers(0, 28, 8)
    cut_ok = True
    for i in range(8):
        y0_, y1_, x0_, x1_ = reg.cutout_window(cy[i], cx[i], 28, 28, cfg)
        mask = np.zeros((28, 28), bool)
        mask[y0_:y1_, x0_:x1_] = True
        cut_ok &= bool((out[i][:, mask] == 0).all() and
                       np.array_equal(out[i][:, ~mask], x[i][:, ~mask]))

    ok = mixup_ok and ls_ok and ce_err <= 1e-6 and cut_ok
    report(6, ok, f"mixup degenerate {'exact' if mixup_ok else 'WRONG'}; smoothing rows "
                  f"{t[4]:.2f}/{t[0]:.2f}; CE(uniform)-ln10={ce_err:.1e} (<=1e-6); cutout "
                  f"{'window only' if cut_ok else 'WRONG'}")
    assert ok


# --- C7 --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cifar_dir(tmp_path_factory):
    if CIFAR_DIR:
        return CIFAR_DIR, "CIFAR-10"
    return str(write_synthetic_cifar(tmp_path_factory.mktemp("cifar"))), "synthetic CIFAR-format"


@pytest.mark.slow
def test_c7_cifar_smoke(report, cifar_dir):
    path, source = cifar_dir
    train_set, test_set = load_cifar10(path)
    test_set = test_set.subset(1000)
    cfg = TrainConfig("cifar-143k-dw", epochs=100, batch_size=128, seed=0, max_steps=200,
                      blurpool=True, cutout=reg.CutoutConfig(), mixup=reg.MixupConfig(),
                      label_smoothing=0.1)
    t0 = time.perf_counter()
    r = train(cfg, train_set, test_set)
    elapsed = time.perf_counter() - t0
    losses = np.array(r.step_losses)
    first, last = losses[:10].mean(), losses[-10:].mean()
    drop = 1 - last / first
    finite = bool(np.isfinite(losses).all()) and all(
        np.isfinite(v).all() for v in r.model.state_dict().values())
    ok = r.steps == 200 and drop >= 0.20 and finite and elapsed <= 600
    report(7, ok, f"{source}; {r.steps} steps BP+CO+M+LS; loss {first:.3f} -> {last:.3f} "
                  f"(first/last 10 steps, drop {drop:.1%}, needs >= 20%); finite={finite}; "
                  f"{elapsed:.0f}s (<=600s)")
    assert ok


# --- C8 --------------------------------------------------------------------------

def _calibrated_checkpoint(name, train_set, path):
    model = zoo.build_model(name, seed=0)
    optim.recalibrate_batchnorm(model, sequential_batches(train_set.subset(1280), 128))
    zoo.save(model.eval(), path)
    return path


@pytest.mark.slow
def test_c8_latency_ordering(report, mnist, tmp_path):
    train_set, test_set = mnist
    reports = {name: bench_checkpoint(_calibrated_checkpoint(name, train_set,
                                                             tmp_path / f"{name}.ckpt"),
                                      test_set, batch_size=100, repeats=3)
               for name in ("mnist-1.5k-dw", "mnist-25k")}
    small, big = reports["mnist-1.5k-dw"], reports["mnist-25k"]
    ok = (small.latency_seconds < big.latency_seconds and small.points == big.points == 10_000
          and small.repeats == big.repeats == 3)
    report(8, ok, f"median latency 1.5k-dw {small.latency_seconds:.3f}s < 25k "
                  f"{big.latency_seconds:.3f}s over {small.points} points, 3 repeats, "
                  f"1 thread; sizes {small.size_kb:.1f}KB / {big.size_kb:.1f}KB")
    assert ok


# --- C9 --------------------------------------------------------------------------

def test_c9_determinism_and_serialization(report, mnist_dir, tmp_path):
    def run(tag):
        code = cli_main(["train", "--model", "mnist-1.5k-dw", "--data-dir", mnist_dir,
                         "--epochs", "2", "--seed", "7", "--one-cycle", "--cutout", "--mixup",
                         "--label-smoothing", "0.1", "--train-limit", "2048",
                         "--out", str(tmp_path / tag)])
        assert code == 0
        return {f: (tmp_path / tag / f).read_bytes()
                for f in ("config.json", "metrics.jsonl", "final.ckpt")}

    a, b = run("a"), run("b")
    identical = a == b

    ckpt = tmp_path / "a" / "final.ckpt"
    model = zoo.load(ckpt)
    zoo.save(model, tmp_path / "again.ckpt")
    again = zoo.load(tmp_path / "again.ckpt")
    s1, s2 = model.state_dict(), again.state_dict()
    bit_exact = (list(s1) == list(s2) and all(s1[k].tobytes() == s2[k].tobytes() for k in s1)
                 and (tmp_path / "again.ckpt").read_bytes() == ckpt.read_bytes())

    raw = ckpt.read_bytes()
    corruptions = {"magic": b"XXXXXXXX" + raw[8:], "truncated": raw[:-7],
                   "trailing": raw + b"\0", "header-only": raw[:20]}
    rejected = 0
    for tag, blob in corruptions.items():
        p = tmp_path / f"bad-{tag}.ckpt"
        p.write_bytes(blob)
        try:
            zoo.load(p)
        except zoo.CheckpointError:
            rejected += 1

    ok = identical and bit_exact and rejected == len(corruptions)
    report(9, ok, f"metrics/config/checkpoint byte-identical across runs: {identical}; "
                  f"round-trip bit-exact: {bit_exact}; corrupted rejected "
                  f"{rejected}/{len(corruptions)}")
    assert ok
