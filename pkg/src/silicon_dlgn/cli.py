"""Command-line entry point: train, sweep, discretize, compile, simulate, verify, report.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 I/O or parse error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .cell_library import REFERENCE_LIBRARY_PATH, LibraryError, load_library
from .core import Network, discretize
from .dataset import DEFAULT_THRESHOLD, DatasetError, load_mnist, load_raw, make_toy
from .netlist import NetlistError, compile_network, emit_verilog, parse_verilog, prune_netlist, report_area
from .simulator import SimSession, SimulationError, format_vector, parse_vector, read_vector_file, verify_equivalence
from .training import SWEEP_DELTAS, LossConfig, TrainConfig, combined_table, delta_sweep, format_rows, train

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_library(p):
    p.add_argument("--library", default=str(REFERENCE_LIBRARY_PATH), help="cell-map file (default: bundled sky130)")


def _add_training(p):
    _add_library(p)
    g = p.add_argument_group("data")
    g.add_argument("--mnist-images")
    g.add_argument("--mnist-labels")
    g.add_argument("--test-images")
    g.add_argument("--test-labels")
    g.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD, help="pixel > threshold -> 1")
    g.add_argument("--continuous", action="store_true", help="train the relaxed net on pixels/255 (hard eval stays binarized)")
    g.add_argument("--raw-data", help="'width,label,bits' text file")
    g.add_argument("--raw-test")
    g.add_argument("--toy", choices=["xor2", "parity3", "constant"])
    g.add_argument("--toy-samples", type=int, default=256)
    g.add_argument("--toy-noise", type=float, default=0.0)
    g = p.add_argument_group("architecture")
    g.add_argument("--layers", type=_ints, default=[1000] * 4, help="comma-separated layer widths")
    g.add_argument("--classes", type=int, help="defaults to the dataset's class count")
    g.add_argument("--tau", type=float, help="GroupSum temperature (default group_size/10)")
    g.add_argument("--wiring-seed", type=int, default=0)
    g = p.add_argument_group("optimization")
    g.add_argument("--train-seed", type=int, default=0)
    g.add_argument("--lr", type=float, default=0.01)
    g.add_argument("--batch-size", type=int, default=128)
    g.add_argument("--iterations", type=int, default=20000)
    g.add_argument("--eval-every", type=int, default=1000)
    g.add_argument("--eval-samples", type=int, default=10000)


def _load_data(args):
    if args.toy:
        return make_toy(args.toy, args.toy_samples, args.toy_noise, args.train_seed), None
    if args.raw_data:
        train_set = load_raw(args.raw_data)
        test_set = load_raw(args.raw_test, "test", train_set.num_classes) if args.raw_test else None
        return train_set, test_set
    if args.mnist_images and args.mnist_labels:
        kw = {"threshold": args.threshold, "continuous": args.continuous}
        train_set = load_mnist(args.mnist_images, args.mnist_labels, **kw)
        test_set = None
        if args.test_images and args.test_labels:
            test_set = load_mnist(args.test_images, args.test_labels, split="test", **kw)
        return train_set, test_set
    raise UsageError("no dataset: give --mnist-images/--mnist-labels, --raw-data, or --toy")


def _training_setup(args):
    lib = load_library(args.library)
    data, test = _load_data(args)
    classes = args.classes or data.num_classes
    if classes != data.num_classes:
        raise UsageError(f"--classes {classes} disagrees with the dataset ({data.num_classes})")
    if args.iterations <= 0 or args.eval_every <= 0 or args.batch_size <= 0:
        raise UsageError("iterations, eval-every and batch-size must be positive")
    cfg = TrainConfig(
        iterations=args.iterations,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        eval_every=min(args.eval_every, args.iterations),
        seed=args.train_seed,
        eval_samples=args.eval_samples,
    )

    def make_net():
        return Network(data.width, args.layers, classes, tau=args.tau, seed=args.wiring_seed)

    make_net()  # surface architecture errors before any work
    return lib, data, test, cfg, make_net


def _metadata(args, lib, delta):
    return {
        "delta": delta,
        "library": lib.name,
        "train_seed": args.train_seed,
        "iterations": args.iterations,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
    }


def _row_printer():
    state = {"header": True}

    def emit(row):
        sys.stdout.write(format_rows([row], header=state["header"]))
        sys.stdout.flush()
        state["header"] = False

    return emit


def cmd_train(args) -> int:
    lib, data, test, cfg, make_net = _training_setup(args)
    net, log = train(make_net(), data, cfg, LossConfig(lib.area_vector(), args.delta), test, _row_printer())
    if args.checkpoint:
        checkpoint.save(args.checkpoint, net, _metadata(args, lib, args.delta))
    if args.log:
        Path(args.log).write_text(log.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_sweep(args) -> int:
    lib, data, test, cfg, make_net = _training_setup(args)
    results = delta_sweep(args.deltas, make_net, data, cfg, lib.area_vector(), test, _row_printer())
    if args.log:
        Path(args.log).write_text(combined_table(results), encoding="utf-8")
    if args.checkpoint_dir:
        out = Path(args.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        for delta, (net, _) in results.items():
            checkpoint.save(out / f"delta_{delta:g}.json", net, _metadata(args, lib, delta))
    return EXIT_OK


def cmd_discretize(args) -> int:
    net, _, meta = checkpoint.load(args.checkpoint)
    hard = discretize(net)
    checkpoint.save(args.out, net, meta, hard)
    hist = hard.gate_histogram()
    print("gate histogram: " + " ".join(f"{g}:{hist.get(g, 0)}" for g in range(16)))
    return EXIT_OK


def _load_hard(path):
    _, hard, _ = checkpoint.load(path)
    if hard is None:
        raise UsageError(f"{path} is not discretized; run 'discretize' on it first")
    return hard


def cmd_compile(args) -> int:
    lib = load_library(args.library)
    hard = _load_hard(args.checkpoint)
    netlist = compile_network(hard, lib, name=args.name)
    full = report_area(netlist, lib)
    if args.prune:
        netlist = prune_netlist(netlist)
        print("unpruned:")
        print(full.format(), end="")
        print("pruned:")
        print(report_area(netlist, lib).format(), end="")
    else:
        print(full.format(), end="")
    Path(args.netlist).write_text(emit_verilog(netlist), encoding="utf-8")
    return EXIT_OK


def _read_netlist(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"netlist not found: {path}")
    return parse_verilog(path.read_text(encoding="utf-8"))


def cmd_simulate(args) -> int:
    lib = load_library(args.library)
    netlist = _read_netlist(args.netlist)
    width = netlist.input_width
    vectors = [parse_vector(v, width) for v in args.vector or []]
    if args.vectors:
        vectors.extend(read_vector_file(args.vectors, width))
    if not vectors:
        raise UsageError("give --vector or --vectors")
    counts = SimSession(netlist, lib).evaluate(np.stack(vectors))
    for x, c in zip(vectors, counts):
        print(f"{format_vector(x)} counts={' '.join(map(str, c.tolist()))} class={int(np.argmax(c))}")
    return EXIT_OK


def cmd_verify(args) -> int:
    lib = load_library(args.library)
    hard = _load_hard(args.checkpoint)
    netlist = _read_netlist(args.netlist)
    report = verify_equivalence(hard, netlist, lib, n_random=args.n_random, seed=args.seed)
    print(report.format(), end="")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_report(args) -> int:
    lib = load_library(args.library)
    netlist = _read_netlist(args.netlist)
    print(report_area(netlist, lib).format(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="silicon-dlgn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one network")
    _add_training(p)
    p.add_argument("--delta", type=float, default=0.0, help="area-loss weight")
    p.add_argument("--checkpoint", help="output checkpoint path")
    p.add_argument("--log", help="output log table path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train once per delta")
    _add_training(p)
    p.add_argument("--deltas", type=_floats, default=list(SWEEP_DELTAS))
    p.add_argument("--log", help="combined log table path")
    p.add_argument("--checkpoint-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("discretize", help="argmax every neuron's gate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("compile", help="emit a structural netlist")
    _add_library(p)
    p.add_argument("--checkpoint", required=True, help="discretized checkpoint")
    p.add_argument("--netlist", required=True, help="output netlist path")
    p.add_argument("--name", default="dlgn")
    p.add_argument("--prune", action="store_true", help="drop logic no output depends on")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="evaluate a netlist on input vectors")
    _add_library(p)
    p.add_argument("--netlist", required=True)
    p.add_argument("--vector", action="append", help="MSB-left binary or 0x hex; repeatable")
    p.add_argument("--vectors", help="file with one vector per line")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check netlist against the discretized model")
    _add_library(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--netlist", required=True)
    p.add_argument("--n-random", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="area report for a netlist")
    _add_library(p)
    p.add_argument("--netlist", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LibraryError, DatasetError, checkpoint.CheckpointError, NetlistError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
