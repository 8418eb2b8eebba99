"""Command-line entry point: ``nanocnn {params,train,eval,bench} ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Diagnostics go to
stderr as single lines.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import optim, regularizers as reg
from .bench import bench_checkpoint
from .data import load_for_model
from .trainer import TrainConfig, evaluate, train
from .zoo import ARCHITECTURES, EXPECTED_PARAM_COUNTS, build_model, count_params, load

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(status)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nanocnn", description="Efficient CNN micro-framework")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("params", help="print a model's parameter count")
    sp.add_argument("model")

    sp = sub.add_parser("train", help="train one configuration")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--lr", type=float, default=0.05, help="constant lr (no one-cycle)")
    sp.add_argument("--lr-max", type=float, default=0.2, help="one-cycle peak lr")
    sp.add_argument("--one-cycle", action="store_true")
    sp.add_argument("--cutout", action="store_true")
    sp.add_argument("--blurpool", action="store_true")
    sp.add_argument("--se", action="store_true")
    sp.add_argument("--mixup", action="store_true")
    sp.add_argument("--label-smoothing", type=float, metavar="A")
    sp.add_argument("--sam", type=float, metavar="RHO")
    sp.add_argument("--swa", action="store_true")
    sp.add_argument("--train-limit", type=int, help="use only the first N training examples")
    sp.add_argument("--max-steps", type=int)
    sp.add_argument("--out", required=True, help="run directory")

    sp = sub.add_parser("eval", help="test accuracy of a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data-dir", required=True)

    sp = sub.add_parser("bench", help="accuracy / latency / size report")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--batch", type=int, default=100)
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--json", required=True, dest="json_out")
    return p


def _cmd_params(args) -> int:
    if args.model not in ARCHITECTURES:
        raise UsageError(f"unknown model {args.model!r}; choose from {', '.join(ARCHITECTURES)}")
    n = count_params(build_model(args.model))
    print(n)
    if n != EXPECTED_PARAM_COUNTS[args.model]:
        print(f"error: {args.model} has {n} parameters, expected "
              f"{EXPECTED_PARAM_COUNTS[args.model]}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_train(args) -> int:
    if args.model not in ARCHITECTURES:
        raise UsageError(f"unknown model {args.model!r}")
    if args.epochs < 1:
        raise UsageError("--epochs must be >= 1")
    cfg = TrainConfig(
        model_name=args.model, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        lr=args.lr, lr_max=args.lr_max, one_cycle=args.one_cycle,
        cutout=reg.CutoutConfig() if args.cutout else None, blurpool=args.blurpool,
        se=(4, 8) if args.se else None, mixup=reg.MixupConfig() if args.mixup else None,
        label_smoothing=args.label_smoothing,
        sam=optim.SamConfig(args.sam) if args.sam is not None else None,
        swa=0.75 if args.swa else None, train_limit=args.train_limit,
        max_steps=args.max_steps)
    train_set, test_set = load_for_model(args.model, args.data_dir)
    result = train(cfg, train_set, test_set, out_dir=args.out)
    print(f"test_acc {result.final_test_acc:.4f}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load(args.ckpt)
    _, test_set = load_for_model(model.name, args.data_dir)
    print(f"{evaluate(model, test_set):.4f}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    if args.repeats < 3:
        raise UsageError("--repeats must be >= 3")
    if args.batch < 1:
        raise UsageError("--batch must be >= 1")
    name = load(args.ckpt).name
    _, test_set = load_for_model(name, args.data_dir)
    report = bench_checkpoint(args.ckpt, test_set, args.batch, args.repeats, args.threads)
    with open(args.json_out, "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"{report.model_name}: params {report.params} acc {report.accuracy:.4f} "
          f"latency {report.latency_seconds:.3f}s size {report.size_kb:.1f}KB")
    return EXIT_OK


_COMMANDS = {"params": _cmd_params, "train": _cmd_train, "eval": _cmd_eval, "bench": _cmd_bench}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = _parser().parse_args(argv)
        if args.command is None:
            raise UsageError("nanocnn: a subcommand is required (params, train, eval, bench)")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_FAILURE


cli = main

if __name__ == "__main__":
    sys.exit(main())
