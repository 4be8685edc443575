"""Differentiable logic gate networks: relaxed (training) and hard (boolean) evaluation."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .cell_library import NUM_GATES, hard_eval

__all__ = [
    "GATE_COEFFS",
    "relaxed_gate",
    "neuron_forward",
    "group_sum",
    "build_wiring",
    "LogicLayer",
    "Network",
    "HardNetwork",
    "discretize",
    "forward_relaxed",
    "forward_hard",
    "default_tau",
]

Z_INIT_STD = 0.1


def _multilinear_coeffs() -> np.ndarray:
    # f(a,b) = c0 + c1*a + c2*b + c3*a*b, exact on {0,1}^2
    rows = []
    for g in range(NUM_GATES):
        f00, f01, f10, f11 = (hard_eval(g, a, b) for a, b in ((0, 0), (0, 1), (1, 0), (1, 1)))
        rows.append((f00, f10 - f00, f01 - f00, f00 - f01 - f10 + f11))
    return np.array(rows, dtype=np.float64)


GATE_COEFFS = _multilinear_coeffs()


def relaxed_gate(i: int, a, b):
    """Multilinear extension of gate ``i``; equals the expectation under independent Bernoulli inputs."""
    c0, c1, c2, c3 = GATE_COEFFS[int(i)]
    return c0 + c1 * a + c2 * b + c3 * a * b


def _coeff_tensor(like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(GATE_COEFFS, dtype=like.dtype, device=like.device)


def neuron_forward(z: torch.Tensor, a, b) -> torch.Tensor:
    """Softmax-weighted mixture of the 16 relaxed gates at real inputs ``(a, b)``.

    ``z`` has shape ``(..., 16)``; ``a`` and ``b`` broadcast against ``z[..., 0]``.
    """
    c = torch.softmax(z, dim=-1) @ _coeff_tensor(z)
    return c[..., 0] + c[..., 1] * a + c[..., 2] * b + c[..., 3] * a * b


def group_sum(outputs: torch.Tensor, num_classes: int, tau: float) -> torch.Tensor:
    """Sum contiguous equal-size groups of the last axis and divide by ``tau``."""
    width = outputs.shape[-1]
    if width % num_classes:
        raise ValueError(f"width {width} not divisible by {num_classes} classes")
    return outputs.reshape(*outputs.shape[:-1], num_classes, width // num_classes).sum(-1) / tau


def default_tau(last_width: int, num_classes: int) -> float:
    return (last_width // num_classes) / 10


def build_wiring(seed: int, widths) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fixed random wiring for consecutive layers ``widths[0] -> widths[1] -> ...``.

    Each layer's ``2K`` input slots are filled with shuffled copies of the
    predecessor index range, so every predecessor is used once ``2K >= width``;
    any neuron wired to the same index twice is repaired by swapping its
    second input with another neuron's.
    """
    widths = [int(w) for w in widths]
    rng = np.random.default_rng(seed)
    wiring = []
    for prev, k in zip(widths[:-1], widths[1:]):
        if prev < 2:
            raise ValueError(f"a layer feeding {k} neurons must have width >= 2, got {prev}")
        if k < 1:
            raise ValueError("layer width must be >= 1")
        reps = math.ceil(2 * k / prev)
        slots = np.concatenate([rng.permutation(prev) for _ in range(reps)])[: 2 * k]
        in_a, in_b = slots[0::2].copy(), slots[1::2].copy()
        for n in np.flatnonzero(in_a == in_b):
            if in_a[n] != in_b[n]:
                continue
            for step in range(1, k):
                m = (n + step) % k
                if in_b[m] != in_a[n] and in_b[n] != in_a[m]:
                    in_b[n], in_b[m] = in_b[m], in_b[n]
                    break
            else:
                raise ValueError("could not wire layer without self-pairs")
        wiring.append((in_a.astype(np.int64), in_b.astype(np.int64)))
    return wiring


class LogicLayer(nn.Module):
    def __init__(self, z: torch.Tensor, in_a, in_b):
        super().__init__()
        self.weights = nn.Parameter(z)
        self.register_buffer("in_a", torch.as_tensor(np.asarray(in_a), dtype=torch.long))
        self.register_buffer("in_b", torch.as_tensor(np.asarray(in_b), dtype=torch.long))

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    def gate_coeffs(self) -> torch.Tensor:
        return torch.softmax(self.weights, dim=-1) @ _coeff_tensor(self.weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        c = self.gate_coeffs()
        a = x[..., self.in_a]
        b = x[..., self.in_b]
        return c[:, 0] + c[:, 1] * a + c[:, 2] * b + c[:, 3] * a * b


class Network(nn.Module):
    """Stack of logic layers followed by GroupSum.

    Wiring and the initial logits are pure functions of ``seed`` and the
    architecture.
    """

    def __init__(
        self,
        input_width: int,
        layer_widths,
        num_classes: int,
        tau: float | None = None,
        seed: int = 0,
        dtype=torch.float32,
        wiring=None,
        z=None,
    ):
        super().__init__()
        self.input_width = int(input_width)
        self.layer_widths = [int(w) for w in layer_widths]
        self.num_classes = int(num_classes)
        self.seed = int(seed)
        if not self.layer_widths:
            raise ValueError("need at least one logic layer")
        if self.layer_widths[-1] % self.num_classes:
            raise ValueError(
                f"last layer width {self.layer_widths[-1]} not divisible by {self.num_classes} classes"
            )
        self.tau = float(tau) if tau is not None else default_tau(self.layer_widths[-1], self.num_classes)
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if wiring is None:
            wiring = build_wiring(self.seed, [self.input_width, *self.layer_widths])
        if z is None:
            init_rng = np.random.default_rng([self.seed, 1])
            z = [init_rng.normal(0.0, Z_INIT_STD, size=(k, NUM_GATES)) for k in self.layer_widths]
        self.layers = nn.ModuleList(
            LogicLayer(torch.as_tensor(np.asarray(zl), dtype=dtype).clone(), a, b)
            for zl, (a, b) in zip(z, wiring)
        )
        for layer, prev in zip(self.layers, [self.input_width, *self.layer_widths]):
            if layer.in_a.numel() and max(int(layer.in_a.max()), int(layer.in_b.max())) >= prev:
                raise ValueError("wiring index out of range")

    @property
    def num_neurons(self) -> int:
        return sum(self.layer_widths)

    def wiring(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.in_a.numpy().copy(), l.in_b.numpy().copy()) for l in self.layers]

    def last_layer(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.input_width:
            raise ValueError(f"input width {x.shape[-1]} != {self.input_width}")
        for layer in self.layers:
            x = layer(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return group_sum(self.last_layer(x), self.num_classes, self.tau)

    def gate_probs(self) -> list[torch.Tensor]:
        return [torch.softmax(l.weights, dim=-1) for l in self.layers]


def forward_relaxed(net: Network, x) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x)
    dtype = net.layers[0].weights.dtype
    return net(x.to(dtype))


@dataclass
class HardNetwork:
    input_width: int
    gates: list[np.ndarray]
    wiring: list[tuple[np.ndarray, np.ndarray]]
    num_classes: int

    def __post_init__(self):
        self.gates = [np.asarray(g, dtype=np.int64) for g in self.gates]
        self.wiring = [(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)) for a, b in self.wiring]
        if len(self.gates) != len(self.wiring):
            raise ValueError("gates and wiring disagree on layer count")
        prev = self.input_width
        for g, (a, b) in zip(self.gates, self.wiring):
            if not (len(g) == len(a) == len(b)) or len(g) == 0:
                raise ValueError("inconsistent layer sizes")
            if g.min() < 0 or g.max() >= NUM_GATES:
                raise ValueError("gate index out of range")
            if max(a.max(), b.max()) >= prev or min(a.min(), b.min()) < 0:
                raise ValueError("wiring index out of range")
            prev = len(g)
        if prev % self.num_classes:
            raise ValueError(f"last layer width {prev} not divisible by {self.num_classes} classes")

    @property
    def layer_widths(self) -> list[int]:
        return [len(g) for g in self.gates]

    @property
    def group_size(self) -> int:
        return self.layer_widths[-1] // self.num_classes

    @property
    def num_neurons(self) -> int:
        return sum(self.layer_widths)

    def gate_histogram(self) -> Counter:
        return Counter(int(g) for layer in self.gates for g in layer)

    def layer_values(self, x) -> list[np.ndarray]:
        h = np.asarray(x, dtype=np.int64)
        if h.shape[-1] != self.input_width:
            raise ValueError(f"input width {h.shape[-1]} != {self.input_width}")
        values = []
        for g, (a, b) in zip(self.gates, self.wiring):
            h = hard_eval(g, h[..., a], h[..., b])
            values.append(h)
        return values

    def forward(self, x) -> np.ndarray:
        out = self.layer_values(x)[-1]
        return out.reshape(*out.shape[:-1], self.num_classes, self.group_size).sum(-1)

    def predict(self, x) -> np.ndarray:
        # argmax returns the first maximum: lowest class index wins ties
        return np.argmax(self.forward(x), axis=-1)


def forward_hard(hard: HardNetwork, x) -> np.ndarray:
    """Per-class popcounts for one bit vector or a batch of them."""
    return hard.forward(x)


def discretize(net) -> HardNetwork:
    """Assign each neuron its most probable gate (lowest index on ties)."""
    if isinstance(net, HardNetwork):
        return HardNetwork(net.input_width, [g.copy() for g in net.gates], net.wiring, net.num_classes)
    gates = [l.weights.detach().cpu().numpy().argmax(axis=-1) for l in net.layers]
    return HardNetwork(net.input_width, gates, net.wiring(), net.num_classes)
