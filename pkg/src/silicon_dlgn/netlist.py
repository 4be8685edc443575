"""Compile a discretized network into a flat standard-cell netlist.

Every neuron becomes one cell, or an inverter plus a 2-input cell for the
four composed functions. Each class group is summed by a carry-save
tree of half and full adders whose outputs are the class
count bits, LSB first.

Naming: inputs ``in[i]``, neuron nets ``l<layer>_n<index>``, composition
inverter nets ``l<layer>_n<index>_inv``, adder nets ``pc_<group>_<k>``;
instances ``u_<net name>`` for neurons and ``u_pc_<group>_<k>`` for adders.
"""
from __future__ import annotations

import heapq
import itertools
import re
from collections import Counter, deque
from dataclasses import dataclass, field

from .cell_library import CellLibrary, LibraryError
from .core import HardNetwork


class NetlistError(ValueError):
    pass


@dataclass
class Instance:
    name: str
    cell: str
    pins: dict[str, str]


@dataclass
class Netlist:
    name: str
    inputs: list[str]
    outputs: list[list[str]]  # per class, LSB first
    instances: list[Instance]

    @property
    def nets(self) -> list[str]:
        seen = dict.fromkeys(self.inputs)
        for inst in self.instances:
            for net in inst.pins.values():
                seen.setdefault(net)
        return list(seen)

    @property
    def input_width(self) -> int:
        return len(self.inputs)


@dataclass
class AreaReport:
    neuron_area: float
    adder_area: float
    neuron_count: int
    cell_histogram: Counter = field(default_factory=Counter)

    @property
    def total_area(self) -> float:
        return self.neuron_area + self.adder_area

    @property
    def avg_neuron_area(self) -> float:
        return self.neuron_area / self.neuron_count if self.neuron_count else 0.0

    def format(self) -> str:
        lines = [
            f"neurons            {self.neuron_count}",
            f"neuron_area_um2    {self.neuron_area:.3f}",
            f"avg_neuron_area    {self.avg_neuron_area:.3f}",
            f"adder_area_um2     {self.adder_area:.3f}",
            f"total_area_um2     {self.total_area:.3f}",
            "cells:",
        ]
        lines += [f"  {cell:<12} {n}" for cell, n in sorted(self.cell_histogram.items())]
        return "\n".join(lines) + "\n"


def input_net(i: int) -> str:
    return f"in[{i}]"


def neuron_net(layer: int, index: int) -> str:
    return f"l{layer}_n{index}"


def _neuron_instances(lib: CellLibrary, gate: int, a: str, b: str, out: str) -> list[Instance]:
    mapping = lib.mapping(gate)
    base = "u_" + out
    if len(mapping.cells) == 1:
        cell = mapping.cells[0]
        fn = lib.cell_function(cell)
        if fn.kind in ("tie0", "tie1"):
            pins = {"Y": out}
        elif fn.kind in ("buf", "inv"):
            # single-input gates 3/12 use A, 5/10 use B
            src = a if gate in (3, 12) else b
            pins = {"A": src, "Y": out}
        else:
            pins = {"A": a, "B": b, "Y": out}
        return [Instance(base, cell, pins)]
    inv_cell, cell = mapping.cells
    inv_net = out + "_inv"
    if mapping.inverted_input == "A":
        inv = Instance(base + "_inv", inv_cell, {"A": a, "Y": inv_net})
        main = Instance(base, cell, {"A": inv_net, "B": b, "Y": out})
    else:
        inv = Instance(base + "_inv", inv_cell, {"A": b, "Y": inv_net})
        main = Instance(base, cell, {"A": a, "B": inv_net, "Y": out})
    return [inv, main]


def build_popcount_tree(nets, lib: CellLibrary, group: int = 0) -> tuple[list[Instance], list[str]]:
    """Reduce ``nets`` to a binary count, LSB first.

    Bit-weight columns are reduced from the LSB up. Within a column the three
    shallowest nets go into a full adder (its sum re-enters the column, its
    carry moves up one weight) until two remain, which take a half adder.
    Column ``j`` therefore receives ``k // 2**j`` carries and the count has
    exactly ``ceil(log2(k + 1))`` bits.
    """
    nets = list(nets)
    if not nets:
        raise NetlistError("popcount over an empty group")
    ha, fa = lib.half_adder[0], lib.full_adder[0]
    instances: list[Instance] = []
    counter = itertools.count()
    seq = itertools.count()

    def fresh() -> str:
        return f"pc_{group}_{next(counter)}"

    column = [(0, next(seq), n) for n in nets]
    bits = []
    while column:
        heapq.heapify(column)
        carries = []
        while len(column) >= 2:
            take = 3 if len(column) >= 3 else 2
            picked = [heapq.heappop(column) for _ in range(take)]
            depth = max(p[0] for p in picked) + 1
            s, co = fresh(), fresh()
            ins = [p[2] for p in picked]
            if take == 3:
                pins = {"A": ins[0], "B": ins[1], "CI": ins[2], "S": s, "CO": co}
                instances.append(Instance(f"u_{s}", fa, pins))
            else:
                instances.append(Instance(f"u_{s}", ha, {"A": ins[0], "B": ins[1], "S": s, "CO": co}))
            heapq.heappush(column, (depth, next(seq), s))
            carries.append((depth, next(seq), co))
        bits.append(column[0][2])
        column = carries
    return instances, bits


def compile_network(hard: HardNetwork, lib: CellLibrary, name: str = "dlgn", prune: bool = False) -> Netlist:
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
        raise NetlistError(f"invalid module name {name!r}")
    for cell in (lib.half_adder[0], lib.full_adder[0]):
        try:
            lib.cell_function(cell)
        except LibraryError:
            raise NetlistError(f"library lacks adder cell {cell}") from None
    if hard.group_size == 0:
        raise NetlistError("group size 0")
    inputs = [input_net(i) for i in range(hard.input_width)]
    prev = inputs
    instances: list[Instance] = []
    for l, (gates, (in_a, in_b)) in enumerate(zip(hard.gates, hard.wiring)):
        cur = []
        for n, (g, ia, ib) in enumerate(zip(gates, in_a, in_b)):
            out = neuron_net(l, n)
            instances.extend(_neuron_instances(lib, int(g), prev[ia], prev[ib], out))
            cur.append(out)
        prev = cur
    outputs = []
    gs = hard.group_size
    for c in range(hard.num_classes):
        tree, bits = build_popcount_tree(prev[c * gs : (c + 1) * gs], lib, group=c)
        instances.extend(tree)
        outputs.append(bits)
    netlist = Netlist(name, inputs, outputs, instances)
    if prune:
        netlist = prune_netlist(netlist)
    check_structure(netlist, lib)
    return netlist


def _drivers(netlist: Netlist, lib: CellLibrary) -> dict[str, int]:
    """net -> index of the driving instance (-1 for primary inputs)."""
    driver = {net: -1 for net in netlist.inputs}
    for idx, inst in enumerate(netlist.instances):
        for port in lib.cell_function(inst.cell).output_ports:
            net = inst.pins[port]
            if net in driver:
                raise NetlistError(f"net {net} has multiple drivers")
            driver[net] = idx
    return driver


def topological_order(netlist: Netlist, lib: CellLibrary) -> list[int]:
    """Instance indices in driver-before-reader order; raises on cycles."""
    driver = _drivers(netlist, lib)
    deps = []
    readers: list[list[int]] = [[] for _ in netlist.instances]
    for idx, inst in enumerate(netlist.instances):
        fn = lib.cell_function(inst.cell)
        d = set()
        for port in fn.input_ports:
            net = inst.pins[port]
            if net not in driver:
                raise NetlistError(f"net {net} read by {inst.name} has no driver")
            if driver[net] >= 0:
                d.add(driver[net])
        deps.append(len(d))
        for j in d:
            readers[j].append(idx)
    ready = deque(i for i, n in enumerate(deps) if n == 0)
    order = []
    while ready:
        i = ready.popleft()
        order.append(i)
        for r in readers[i]:
            deps[r] -= 1
            if deps[r] == 0:
                ready.append(r)
    if len(order) != len(netlist.instances):
        raise NetlistError("combinational cycle detected")
    return order


def check_structure(netlist: Netlist, lib: CellLibrary) -> None:
    names = set()
    for inst in netlist.instances:
        if inst.name in names:
            raise NetlistError(f"duplicate instance name {inst.name}")
        names.add(inst.name)
        fn = lib.cell_function(inst.cell)
        expected = set(fn.input_ports) | set(fn.output_ports)
        if set(inst.pins) != expected:
            raise NetlistError(f"{inst.name} ({inst.cell}): ports {sorted(inst.pins)} != {sorted(expected)}")
    topological_order(netlist, lib)
    driver = _drivers(netlist, lib)
    for bits in netlist.outputs:
        for net in bits:
            if net not in driver:
                raise NetlistError(f"output net {net} has no driver")


def prune_netlist(netlist: Netlist) -> Netlist:
    """Drop instances that no output depends on."""
    by_out = {}
    for idx, inst in enumerate(netlist.instances):
        for net in inst.pins.values():
            by_out.setdefault(net, []).append(idx)
    drives = {}
    for idx, inst in enumerate(netlist.instances):
        for port, net in inst.pins.items():
            if port in ("Y", "S", "CO"):
                drives[net] = idx
    keep = set()
    stack = [net for bits in netlist.outputs for net in bits]
    while stack:
        net = stack.pop()
        idx = drives.get(net)
        if idx is None or idx in keep:
            continue
        keep.add(idx)
        inst = netlist.instances[idx]
        stack.extend(n for p, n in inst.pins.items() if p not in ("Y", "S", "CO"))
    kept = [inst for i, inst in enumerate(netlist.instances) if i in keep]
    return Netlist(netlist.name, list(netlist.inputs), [list(b) for b in netlist.outputs], kept)


def report_area(netlist: Netlist, lib: CellLibrary) -> AreaReport:
    neuron_area = adder_area = 0.0
    neurons = set()
    hist: Counter = Counter()
    for inst in netlist.instances:
        area = lib.cell_area(inst.cell)
        hist[inst.cell] += 1
        if inst.name.startswith("u_pc_"):
            adder_area += area
        else:
            neuron_area += area
            neurons.add(inst.name.removesuffix("_inv"))
    return AreaReport(neuron_area, adder_area, len(neurons), hist)


# --- text form -------------------------------------------------------------

def emit_verilog(netlist: Netlist) -> str:
    ports = ["in"] + [f"class{c}_count" for c in range(len(netlist.outputs))]
    lines = ["// structural netlist generated by silicon_dlgn", f"module {netlist.name} ({', '.join(ports)});"]
    lines.append(f"  input [{netlist.input_width - 1}:0] in;")
    for c, bits in enumerate(netlist.outputs):
        lines.append(f"  output [{len(bits) - 1}:0] class{c}_count;")
    inputs = set(netlist.inputs)
    wires = [n for n in netlist.nets if n not in inputs]
    for net in wires:
        lines.append(f"  wire {net};")
    for inst in netlist.instances:
        conns = ", ".join(f".{p}({n})" for p, n in inst.pins.items())
        lines.append(f"  {inst.cell} {inst.name} ({conns});")
    for c, bits in enumerate(netlist.outputs):
        for j, net in enumerate(bits):
            lines.append(f"  assign class{c}_count[{j}] = {net};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


_MODULE = re.compile(r"module\s+(\w+)\s*\(([^)]*)\)\s*;")
_INPUT = re.compile(r"input\s+\[(\d+):0\]\s+in\s*;")
_OUTPUT = re.compile(r"output\s+\[(\d+):0\]\s+class(\d+)_count\s*;")
_WIRE = re.compile(r"wire\s+([\w\[\]]+)\s*;")
_INST = re.compile(r"(\w+)\s+(\w+)\s*\((.*)\)\s*;")
_PIN = re.compile(r"\.(\w+)\(([\w\[\]]+)\)")
_ASSIGN = re.compile(r"assign\s+class(\d+)_count\[(\d+)\]\s*=\s*([\w\[\]]+)\s*;")


def parse_verilog(text: str) -> Netlist:
    """Parse the dialect written by :func:`emit_verilog` (and nothing more)."""
    name = None
    width = None
    out_widths: dict[int, int] = {}
    assigns: dict[int, dict[int, str]] = {}
    instances = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("//", 1)[0].strip()
        if not line or line == "endmodule":
            continue
        if m := _MODULE.fullmatch(line):
            name = m.group(1)
        elif m := _INPUT.fullmatch(line):
            width = int(m.group(1)) + 1
        elif m := _OUTPUT.fullmatch(line):
            out_widths[int(m.group(2))] = int(m.group(1)) + 1
        elif _WIRE.fullmatch(line):
            continue
        elif m := _ASSIGN.fullmatch(line):
            assigns.setdefault(int(m.group(1)), {})[int(m.group(2))] = m.group(3)
        elif m := _INST.fullmatch(line):
            pins = dict(_PIN.findall(m.group(3)))
            instances.append(Instance(m.group(2), m.group(1), pins))
        else:
            raise NetlistError(f"line {lineno}: unsupported construct: {raw.strip()!r}")
    if name is None or width is None:
        raise NetlistError("missing module header or input declaration")
    outputs = []
    for c in range(len(out_widths)):
        if c not in out_widths:
            raise NetlistError(f"missing output class{c}_count")
        bits = assigns.get(c, {})
        if sorted(bits) != list(range(out_widths[c])):
            raise NetlistError(f"class{c}_count bits are not fully assigned")
        outputs.append([bits[j] for j in range(out_widths[c])])
    return Netlist(name, [input_net(i) for i in range(width)], outputs, instances)
