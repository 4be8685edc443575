"""Standard-cell mapping for the 16 two-input gate functions.

A gate index ``i`` is its 4-bit truth table read as ``f(0,0) f(0,1) f(1,0) f(1,1)``
(MSB first), so ``i = 8*f(0,0) + 4*f(0,1) + 2*f(1,0) + f(1,1)``.

The cell-map file lists one row per gate::

    0001, AND2X1, 9.522
    0010, INVX1+NOR2X1, 13.331
    HALFADDER, ADDHX1, 20.0
    FULLADDER, ADDFX1, 30.0

A two-cell row is an inverter on one input of a 2-input cell. Cell semantics
(used by the compiler and the simulator) are inferred from the rows.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "GateKind",
    "CellMapping",
    "CellFunction",
    "CellLibrary",
    "LibraryError",
    "hard_eval",
    "truth_table_string",
    "load_library",
    "parse_library",
    "reference_library",
    "area_vector",
    "REFERENCE_LIBRARY_PATH",
]

NUM_GATES = 16


class LibraryError(ValueError):
    pass


class GateKind(enum.IntEnum):
    FALSE = 0
    AND = 1
    A_AND_NOT_B = 2
    A = 3
    NOT_A_AND_B = 4
    B = 5
    XOR = 6
    OR = 7
    NOR = 8
    XNOR = 9
    NOT_B = 10
    A_OR_NOT_B = 11
    NOT_A = 12
    NOT_A_OR_B = 13
    NAND = 14
    TRUE = 15

    @property
    def truth_table(self) -> str:
        return truth_table_string(int(self))


def truth_table_string(gate: int) -> str:
    return format(int(gate), "04b")


def hard_eval(gate, a, b):
    """Boolean value of ``gate`` at inputs ``(a, b)``.

    Works elementwise on numpy integer arrays as well as on Python ints.
    """
    return (gate >> (3 - (2 * a + b))) & 1


# Which input, if any, a two-cell composition inverts before the 2-input cell.
# These four are forced by the functions themselves; other gates default to A.
COMPOSITION_INVERTED_INPUT = {
    GateKind.A_AND_NOT_B: "A",  # NOR(~A, B)
    GateKind.NOT_A_AND_B: "B",  # NOR(A, ~B)
    GateKind.A_OR_NOT_B: "A",  # NAND(~A, B)
    GateKind.NOT_A_OR_B: "B",  # NAND(A, ~B)
}


def _depends(tt: int) -> tuple[bool, bool]:
    on_a = any(hard_eval(tt, 0, b) != hard_eval(tt, 1, b) for b in (0, 1))
    on_b = any(hard_eval(tt, a, 0) != hard_eval(tt, a, 1) for a in (0, 1))
    return on_a, on_b


@dataclass(frozen=True)
class CellFunction:
    """Boolean behaviour of one library cell.

    ``kind`` is one of ``tie0``, ``tie1``, ``buf``, ``inv``, ``gate2``,
    ``half_adder``, ``full_adder``; ``truth_table`` is set for ``gate2``.
    """

    kind: str
    truth_table: int | None = None

    @property
    def input_ports(self) -> tuple[str, ...]:
        return {
            "tie0": (),
            "tie1": (),
            "buf": ("A",),
            "inv": ("A",),
            "gate2": ("A", "B"),
            "half_adder": ("A", "B"),
            "full_adder": ("A", "B", "CI"),
        }[self.kind]

    @property
    def output_ports(self) -> tuple[str, ...]:
        if self.kind in ("half_adder", "full_adder"):
            return ("S", "CO")
        return ("Y",)

    def evaluate(self, inputs: dict) -> dict:
        """Evaluate on 0/1 ints or uint8 arrays keyed by input port."""
        k = self.kind
        if k == "tie0":
            return {"Y": 0}
        if k == "tie1":
            return {"Y": 1}
        if k == "buf":
            return {"Y": inputs["A"]}
        if k == "inv":
            return {"Y": inputs["A"] ^ 1}
        if k == "gate2":
            return {"Y": hard_eval(self.truth_table, inputs["A"], inputs["B"])}
        a, b = inputs["A"], inputs["B"]
        if k == "half_adder":
            return {"S": a ^ b, "CO": a & b}
        ci = inputs["CI"]
        return {"S": a ^ b ^ ci, "CO": (a & b) | (a & ci) | (b & ci)}


@dataclass(frozen=True)
class CellMapping:
    gate: GateKind
    cells: tuple[str, ...]
    area: float

    def __post_init__(self):
        if not 1 <= len(self.cells) <= 2:
            raise LibraryError(f"gate {self.gate.truth_table}: expected 1 or 2 cells, got {len(self.cells)}")
        if not self.area > 0:
            raise LibraryError(f"gate {self.gate.truth_table}: area must be positive, got {self.area}")

    @property
    def inverted_input(self) -> str | None:
        if len(self.cells) == 1:
            return None
        return COMPOSITION_INVERTED_INPUT.get(self.gate, "A")


@dataclass(frozen=True)
class CellLibrary:
    name: str
    mappings: tuple[CellMapping, ...]
    half_adder: tuple[str, float]
    full_adder: tuple[str, float]
    cell_areas: dict[str, float] = field(default_factory=dict, compare=False)
    cell_functions: dict[str, CellFunction] = field(default_factory=dict, compare=False)

    def mapping(self, gate: int) -> CellMapping:
        return self.mappings[int(gate)]

    def area_vector(self) -> np.ndarray:
        return np.array([m.area for m in self.mappings], dtype=np.float64)

    def cell_area(self, cell: str) -> float:
        try:
            return self.cell_areas[cell]
        except KeyError:
            raise LibraryError(f"unknown cell {cell!r} in library {self.name!r}") from None

    def cell_function(self, cell: str) -> CellFunction:
        try:
            return self.cell_functions[cell]
        except KeyError:
            raise LibraryError(f"unknown cell {cell!r} in library {self.name!r}") from None


def area_vector(lib: CellLibrary) -> np.ndarray:
    """Per-gate area in square microns, ordered by gate index."""
    return lib.area_vector()


def _bind(table: dict, cell: str, value, what: str):
    old = table.setdefault(cell, value)
    if old != value:
        raise LibraryError(f"cell {cell!r} has conflicting {what}: {old} vs {value}")


def _infer_cells(mappings, half_adder, full_adder):
    functions: dict[str, CellFunction] = {}
    for m in mappings:
        tt = int(m.gate)
        if len(m.cells) == 1:
            on_a, on_b = _depends(tt)
            if not (on_a or on_b):
                fn = CellFunction("tie1" if tt == 15 else "tie0")
            elif on_a and on_b:
                fn = CellFunction("gate2", tt)
            else:
                # single-input function: buffer or inverter of the used input
                fn = CellFunction("buf" if tt in (GateKind.A, GateKind.B) else "inv")
            _bind(functions, m.cells[0], fn, "function")
        else:
            inv, second = m.cells
            _bind(functions, inv, CellFunction("inv"), "function")
            # second cell g satisfies g(~a, b) = f(a, b) (or the B-side analogue)
            tt2 = 0
            for x in (0, 1):
                for y in (0, 1):
                    a, b = (x ^ 1, y) if m.inverted_input == "A" else (x, y ^ 1)
                    tt2 |= hard_eval(tt, a, b) << (3 - (2 * x + y))
            _bind(functions, second, CellFunction("gate2", tt2), "function")
    _bind(functions, half_adder[0], CellFunction("half_adder"), "function")
    _bind(functions, full_adder[0], CellFunction("full_adder"), "function")

    areas: dict[str, float] = {}
    for m in mappings:
        if len(m.cells) == 1:
            _bind(areas, m.cells[0], m.area, "area")
    for cell, area in (half_adder, full_adder):
        _bind(areas, cell, area, "area")
    for m in mappings:
        if len(m.cells) == 2:
            known = [c for c in m.cells if c in areas]
            if len(known) == 2:
                total = sum(areas[c] for c in m.cells)
                if not math.isclose(total, m.area, abs_tol=1e-6):
                    raise LibraryError(
                        f"gate {m.gate.truth_table}: area {m.area} != sum of {'+'.join(m.cells)} ({total:.6g})"
                    )
            elif len(known) == 1:
                other = m.cells[1] if m.cells[0] in areas else m.cells[0]
                areas[other] = m.area - areas[known[0]]
            else:
                raise LibraryError(f"gate {m.gate.truth_table}: cannot split area of {'+'.join(m.cells)}")
    return functions, areas


def parse_library(text: str, name: str = "library") -> CellLibrary:
    rows: dict[int, CellMapping] = {}
    adders: dict[str, tuple[str, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise LibraryError(f"line {lineno}: expected 3 columns, got {len(parts)}: {raw!r}")
        key, cells, area_s = parts
        try:
            area = float(area_s)
        except ValueError:
            raise LibraryError(f"line {lineno}: bad area {area_s!r}") from None
        if not (area > 0 and math.isfinite(area)):
            raise LibraryError(f"line {lineno}: area must be positive, got {area_s}")
        names = tuple(c.strip() for c in cells.split("+"))
        if any(not c for c in names):
            raise LibraryError(f"line {lineno}: empty cell name in {cells!r}")
        if key in ("HALFADDER", "FULLADDER"):
            if len(names) != 1:
                raise LibraryError(f"line {lineno}: {key} must name exactly one cell")
            if key in adders:
                raise LibraryError(f"line {lineno}: duplicate {key} row")
            adders[key] = (names[0], area)
            continue
        if len(key) != 4 or set(key) - {"0", "1"}:
            raise LibraryError(f"line {lineno}: unknown row key / malformed truth table {key!r}")
        gate = int(key, 2)
        if gate in rows:
            raise LibraryError(f"line {lineno}: duplicate gate {key}")
        if len(names) > 2:
            raise LibraryError(f"line {lineno}: at most two cells per gate")
        rows[gate] = CellMapping(GateKind(gate), names, area)

    for g in range(NUM_GATES):
        if g not in rows:
            raise LibraryError(f"missing gate {truth_table_string(g)}")
    for key in ("HALFADDER", "FULLADDER"):
        if key not in adders:
            raise LibraryError(f"missing {key} row")
    mappings = tuple(rows[g] for g in range(NUM_GATES))
    functions, areas = _infer_cells(mappings, adders["HALFADDER"], adders["FULLADDER"])
    return CellLibrary(name, mappings, adders["HALFADDER"], adders["FULLADDER"], areas, functions)


def load_library(path) -> CellLibrary:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"library not found: {path}")
    name = path.name.split(".")[0]
    return parse_library(path.read_text(encoding="utf-8"), name=name)


REFERENCE_LIBRARY_PATH = Path(str(resources.files("silicon_dlgn") / "data" / "sky130_cadence.cells"))


def reference_library() -> CellLibrary:
    """The bundled SkyWater 130nm Cadence mapping."""
    return load_library(REFERENCE_LIBRARY_PATH)
