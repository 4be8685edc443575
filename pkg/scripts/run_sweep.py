#!/usr/bin/env python3
"""Delta sweep on the desk-scale MNIST network; writes one combined CSV for plotting accuracy and area curves."""
import argparse
from pathlib import Path

from silicon_dlgn.cell_library import reference_library
from silicon_dlgn.core import Network
from silicon_dlgn.dataset import load_mnist
from silicon_dlgn.training import SWEEP_DELTAS, TrainConfig, combined_table, delta_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--mnist-dir", default="data/mnist")
    p.add_argument("--out", default="runs/sweep.csv")
    p.add_argument("--deltas", default=",".join(f"{d:g}" for d in SWEEP_DELTAS))
    p.add_argument("--layers", default="1000,1000,1000,1000")
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--eval-every", type=int, default=500)
    p.add_argument("--tau", type=float, default=2.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", help="optional PNG path; needs matplotlib")
    args = p.parse_args()

    d = Path(args.mnist_dir)
    train_set = load_mnist(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte")
    test_set = load_mnist(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte", split="test")
    layers = [int(w) for w in args.layers.split(",")]
    deltas = [float(v) for v in args.deltas.split(",")]
    cfg = TrainConfig(iterations=args.iterations, eval_every=args.eval_every, seed=args.seed)

    results = delta_sweep(
        deltas, lambda: Network(784, layers, 10, tau=args.tau, seed=args.seed), train_set, cfg,
        reference_library().area_vector(), test_set,
        on_row=lambda r: print(f"delta={r['delta']:g} it={r['iteration']} "
                               f"test={r['test_acc_hard']:.4f} area={r['avg_area_expected']:.3f}"),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(combined_table(results))
    for delta, (_, log) in results.items():
        last = log.last()
        print(f"delta={delta:g}: test acc {last['test_acc_hard']:.2%}, expected area {last['avg_area_expected']:.3f}")

    if args.plot:
        import matplotlib.pyplot as plt

        fig, (ax_acc, ax_area) = plt.subplots(1, 2, figsize=(10, 4))
        for delta, (_, log) in results.items():
            it = log.column("iteration")
            ax_acc.plot(it, log.column("test_acc_hard"), label=f"delta={delta:g}")
            ax_area.plot(it, log.column("avg_area_expected"), label=f"delta={delta:g}")
        ax_acc.set(xlabel="iteration", ylabel="test accuracy (discretized)")
        ax_area.set(xlabel="iteration", ylabel="avg cell area per neuron (um^2)")
        ax_area.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)


if __name__ == "__main__":
    main()
