"""Levelized two-valued simulation of compiled netlists, and model/netlist equivalence checks.

Evaluation is vectorized over a batch: every net holds a uint8 array with
one entry per input vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell_library import CellLibrary
from .core import HardNetwork, forward_hard
from .netlist import Netlist, topological_order


class SimulationError(ValueError):
    pass


def parse_vector(text: str, width: int) -> np.ndarray:
    """Bit vector from MSB-left binary (``0101``) or hex (``0x5``); index 0 is the LSB."""
    s = text.strip().replace("_", "")
    if s.lower().startswith("0x"):
        value = int(s, 16)
        if value >> width:
            raise SimulationError(f"hex vector {text!r} exceeds width {width}")
        return np.array([(value >> i) & 1 for i in range(width)], dtype=np.uint8)
    if s.lower().startswith("0b"):
        s = s[2:]
    if set(s) - {"0", "1"}:
        raise SimulationError(f"not a binary vector: {text!r}")
    if len(s) != width:
        raise SimulationError(f"vector has width {len(s)}, netlist expects {width}")
    return np.array([int(c) for c in reversed(s)], dtype=np.uint8)


def format_vector(bits) -> str:
    return "".join(str(int(b)) for b in reversed(list(bits)))


def read_vector_file(path, width: int) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [parse_vector(line, width) for line in fh if line.split("#", 1)[0].strip()]
    if not rows:
        raise SimulationError(f"{path}: no vectors")
    return np.stack(rows)


class SimSession:
    def __init__(self, netlist: Netlist, lib: CellLibrary):
        self.netlist = netlist
        self.lib = lib
        nets = netlist.nets
        self.index = {net: i for i, net in enumerate(nets)}
        self.num_nets = len(nets)
        self.schedule = []
        for idx in topological_order(netlist, lib):
            inst = netlist.instances[idx]
            fn = lib.cell_function(inst.cell)
            ins = {p: self.index[inst.pins[p]] for p in fn.input_ports}
            outs = {p: self.index[inst.pins[p]] for p in fn.output_ports}
            self.schedule.append((fn, ins, outs))
        self.input_idx = np.array([self.index[n] for n in netlist.inputs], dtype=np.int64)
        self.output_idx = [np.array([self.index[n] for n in bits], dtype=np.int64) for bits in netlist.outputs]

    def evaluate(self, bits) -> np.ndarray:
        """Per-class counts for one vector ``(W,)`` or a batch ``(B, W)``."""
        x = np.asarray(bits, dtype=np.uint8)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.netlist.input_width:
            raise SimulationError(f"input width {x.shape[1]} != netlist width {self.netlist.input_width}")
        values = np.zeros((self.num_nets, len(x)), dtype=np.uint8)
        values[self.input_idx] = x.T
        for fn, ins, outs in self.schedule:
            result = fn.evaluate({p: values[i] for p, i in ins.items()})
            for p, i in outs.items():
                values[i] = result[p]
        counts = np.stack(
            [(values[idx].astype(np.int64) << np.arange(len(idx))[:, None]).sum(0) for idx in self.output_idx],
            axis=-1,
        )
        return counts[0] if single else counts


def evaluate(session: SimSession, bits) -> np.ndarray:
    return session.evaluate(bits)


@dataclass
class EquivalenceReport:
    vectors: int
    mismatches: int
    counterexamples: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.mismatches == 0

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status}: {self.vectors} vectors, {self.mismatches} mismatches"]
        for x, want, got in self.counterexamples:
            lines.append(f"  input    {format_vector(x)}")
            lines.append(f"  model    {' '.join(map(str, want.tolist()))}")
            lines.append(f"  netlist  {' '.join(map(str, got.tolist()))}")
        return "\n".join(lines) + "\n"


def verify_equivalence(
    hard: HardNetwork,
    netlist: Netlist,
    lib: CellLibrary,
    n_random: int = 1000,
    seed: int = 0,
    max_counterexamples: int = 1,
    batch: int = 1024,
) -> EquivalenceReport:
    """Compare netlist simulation with the boolean model on all-zeros, all-ones and seeded random vectors."""
    width = hard.input_width
    if netlist.input_width != width:
        return EquivalenceReport(0, 1, [])
    rng = np.random.default_rng(seed)
    vectors = np.concatenate(
        [
            np.zeros((1, width), dtype=np.uint8),
            np.ones((1, width), dtype=np.uint8),
            rng.integers(0, 2, size=(n_random, width), dtype=np.uint8),
        ]
    )
    session = SimSession(netlist, lib)
    mismatches = 0
    examples = []
    for start in range(0, len(vectors), batch):
        x = vectors[start : start + batch]
        want = forward_hard(hard, x)
        got = session.evaluate(x)
        if got.shape != want.shape:
            return EquivalenceReport(len(vectors), len(vectors), [])
        bad = np.flatnonzero((want != got).any(axis=1))
        mismatches += len(bad)
        for i in bad[: max(0, max_counterexamples - len(examples))]:
            examples.append((x[i], want[i], got[i]))
    return EquivalenceReport(len(vectors), mismatches, examples)
