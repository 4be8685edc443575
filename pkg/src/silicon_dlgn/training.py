"""Area-aware training: cross-entropy plus ``delta`` times the mean expected cell area per neuron."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import torch
import torch.nn.functional as F

from .core import HardNetwork, Network, discretize
from .dataset import Dataset

LOG_COLUMNS = (
    "iteration",
    "delta",
    "train_acc_relaxed",
    "train_acc_hard",
    "test_acc_hard",
    "ce_loss",
    "avg_area_expected",
    "avg_area_hard",
)

SWEEP_DELTAS = (0.1, 0.01, 0.001, 0.0001, 1e-5)


@dataclass
class LossConfig:
    area_vector: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        self.area_vector = np.asarray(self.area_vector, dtype=np.float64)
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.area_vector.shape != (16,) or not (self.area_vector > 0).all():
            raise ValueError("area vector must hold 16 positive areas")


@dataclass
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 128
    learning_rate: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    eval_every: int = 100
    seed: int = 0
    # training samples used for the accuracy columns; None means all
    eval_samples: int | None = 10000

    def __post_init__(self):
        for name in ("iterations", "batch_size", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.eval_every > self.iterations:
            raise ValueError("eval_every must not exceed iterations")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        return format_rows(self.rows)

    def last(self) -> dict:
        return self.rows[-1]

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def format_rows(rows: Iterable[dict], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(LOG_COLUMNS)
    for r in rows:
        writer.writerow(["" if isinstance(r[c], float) and math.isnan(r[c]) else r[c] for c in LOG_COLUMNS])
    return buf.getvalue()


def expected_neuron_area(z: torch.Tensor, area: torch.Tensor) -> torch.Tensor:
    """softmax(z) . A over the last axis."""
    area = torch.as_tensor(area, dtype=z.dtype)
    return torch.softmax(z, dim=-1) @ area


def area_loss(net: Network, area) -> torch.Tensor:
    """Mean expected area per neuron over every neuron in the network (um^2)."""
    per_layer = [expected_neuron_area(l.weights, area) for l in net.layers]
    return torch.cat(per_layer).mean()


def discretized_area(hard: HardNetwork, area) -> float:
    area = np.asarray(area, dtype=np.float64)
    return float(np.concatenate([area[g] for g in hard.gates]).mean())


def total_loss(logits: torch.Tensor, labels, net: Network, cfg: LossConfig) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
    ce = F.cross_entropy(logits.reshape(len(labels), -1), labels)
    return ce + cfg.delta * area_loss(net, cfg.area_vector)


def _relaxed_eval(net: Network, inputs: np.ndarray, labels: np.ndarray, chunk: int = 2000):
    dtype = net.layers[0].weights.dtype
    correct, ce_sum = 0, 0.0
    with torch.no_grad():
        for start in range(0, len(inputs), chunk):
            x = torch.from_numpy(inputs[start : start + chunk]).to(dtype)
            y = torch.from_numpy(labels[start : start + chunk])
            logits = net(x)
            correct += int((logits.argmax(-1) == y).sum())
            ce_sum += float(F.cross_entropy(logits, y, reduction="sum"))
    return correct / len(inputs), ce_sum / len(inputs)


def hard_accuracy(hard: HardNetwork, data: Dataset, chunk: int = 5000) -> float:
    correct = 0
    for start in range(0, len(data), chunk):
        pred = hard.predict(data.bits[start : start + chunk])
        correct += int((pred == data.labels[start : start + chunk]).sum())
    return correct / len(data)


def evaluate_row(net: Network, iteration: int, train: Dataset, cfg: TrainConfig, loss_cfg: LossConfig,
                 test: Dataset | None = None) -> dict:
    sub = train if cfg.eval_samples is None else train.subset(cfg.eval_samples)
    acc_relaxed, ce = _relaxed_eval(net, sub.relaxed_inputs(), sub.labels)
    hard = discretize(net)
    with torch.no_grad():
        expected = float(area_loss(net, loss_cfg.area_vector))
    return {
        "iteration": iteration,
        "delta": loss_cfg.delta,
        "train_acc_relaxed": acc_relaxed,
        "train_acc_hard": hard_accuracy(hard, sub),
        "test_acc_hard": hard_accuracy(hard, test) if test is not None else float("nan"),
        "ce_loss": ce,
        "avg_area_expected": expected,
        "avg_area_hard": discretized_area(hard, loss_cfg.area_vector),
    }


def train(
    net: Network,
    data: Dataset,
    cfg: TrainConfig,
    loss_cfg: LossConfig,
    test: Dataset | None = None,
    on_row: Callable[[dict], None] | None = None,
) -> tuple[Network, TrainLog]:
    """Minibatch Adam on the compound loss; evaluates at iteration 0 and every ``eval_every`` steps.

    Mutates and returns ``net``. Batches are epoch-wise permutations drawn
    from ``cfg.seed``, so a run is reproducible given both seeds.
    """
    if data.width != net.input_width:
        raise ValueError(f"dataset width {data.width} != network input width {net.input_width}")
    if data.num_classes != net.num_classes:
        raise ValueError(f"dataset has {data.num_classes} classes, network {net.num_classes}")
    if test is not None and test.width != net.input_width:
        raise ValueError("test set width mismatch")

    dtype = net.layers[0].weights.dtype
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate, betas=cfg.betas, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    inputs = torch.from_numpy(data.relaxed_inputs())
    labels = torch.from_numpy(data.labels)
    log = TrainLog()

    def record(it):
        row = evaluate_row(net, it, data, cfg, loss_cfg, test)
        log.rows.append(row)
        if on_row is not None:
            on_row(row)

    record(0)
    order = rng.permutation(len(data))
    pos = 0
    for it in range(1, cfg.iterations + 1):
        if pos + cfg.batch_size > len(order):
            order = rng.permutation(len(data))
            pos = 0
        idx = torch.from_numpy(order[pos : pos + cfg.batch_size])
        pos += cfg.batch_size
        logits = net(inputs[idx].to(dtype))
        loss = total_loss(logits, labels[idx], net, loss_cfg)
        if not torch.isfinite(loss):
            raise FloatingPointError(f"non-finite loss {loss.item()} at iteration {it}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            record(it)
    return net, log


def delta_sweep(
    deltas,
    make_network: Callable[[], Network],
    data: Dataset,
    cfg: TrainConfig,
    area_vector,
    test: Dataset | None = None,
    on_row: Callable[[dict], None] | None = None,
) -> dict[float, tuple[Network, TrainLog]]:
    """One independent run per delta from identically seeded networks and batches."""
    deltas = list(deltas)
    if not deltas:
        raise ValueError("need at least one delta")
    results = {}
    for delta in deltas:
        net = make_network()
        results[float(delta)] = train(net, data, cfg, LossConfig(area_vector, float(delta)), test, on_row)
    return results


def combined_table(results: dict[float, tuple[Network, TrainLog]]) -> str:
    rows = [r for _, log in results.values() for r in log.rows]
    return format_rows(rows)
