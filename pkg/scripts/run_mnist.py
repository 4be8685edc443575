#!/usr/bin/env python3
"""Train the desk-scale MNIST network with and without the area loss, then compile, verify and report.

Writes checkpoints, netlists and logs under --out and prints a comparison table.
"""
import argparse
from pathlib import Path

from silicon_dlgn import checkpoint
from silicon_dlgn.cell_library import reference_library
from silicon_dlgn.core import Network, discretize
from silicon_dlgn.dataset import load_mnist
from silicon_dlgn.netlist import compile_network, emit_verilog, report_area
from silicon_dlgn.simulator import verify_equivalence
from silicon_dlgn.training import LossConfig, TrainConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mnist-dir", default="data/mnist")
    p.add_argument("--out", default="runs/mnist")
    p.add_argument("--deltas", default="0,0.01")
    p.add_argument("--layers", default="1000,1000,1000,1000")
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--tau", type=float, default=2.5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    d = Path(args.mnist_dir)
    train_set = load_mnist(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte")
    test_set = load_mnist(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte", split="test")
    lib = reference_library()
    layers = [int(w) for w in args.layers.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary = []
    for delta in (float(v) for v in args.deltas.split(",")):
        net = Network(784, layers, 10, tau=args.tau, seed=args.seed)
        cfg = TrainConfig(iterations=args.iterations, eval_every=min(1000, args.iterations), seed=args.seed)
        net, log = train(net, train_set, cfg, LossConfig(lib.area_vector(), delta), test_set,
                         on_row=lambda r: print(f"delta={r['delta']:g} it={r['iteration']} "
                                                f"test={r['test_acc_hard']:.4f} area={r['avg_area_hard']:.3f}"))
        hard = discretize(net)
        netlist = compile_network(hard, lib)
        report = verify_equivalence(hard, netlist, lib, n_random=1000)
        area = report_area(netlist, lib)
        tag = f"delta_{delta:g}"
        checkpoint.save(out / f"{tag}.json", net, {"delta": delta}, hard)
        (out / f"{tag}.v").write_text(emit_verilog(netlist))
        (out / f"{tag}.csv").write_text(log.to_csv())
        summary.append((delta, log.last()["test_acc_hard"], area.avg_neuron_area, area.total_area, report.passed))

    print(f"\n{'delta':>8} {'test acc':>9} {'avg area':>9} {'total um^2':>12} verified")
    for delta, acc, avg, total, ok in summary:
        print(f"{delta:>8g} {acc:>9.2%} {avg:>9.3f} {total:>12.1f} {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
