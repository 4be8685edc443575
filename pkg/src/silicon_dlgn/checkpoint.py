"""JSON checkpoints for relaxed and discretized networks.

Floats are written with Python's shortest round-trip repr, one neuron per
line, so saving a loaded checkpoint reproduces the file byte for byte.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .core import HardNetwork, Network

FORMAT = "silicon-dlgn-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _dump_layer(layer_doc: dict) -> str:
    lines = ["  {"]
    lines.append(f'   "in_a": {json.dumps(layer_doc["in_a"])},')
    lines.append(f'   "in_b": {json.dumps(layer_doc["in_b"])},')
    if "gates" in layer_doc:
        lines.append(f'   "gates": {json.dumps(layer_doc["gates"])},')
    z_rows = ",\n".join("    " + json.dumps(row) for row in layer_doc["z"])
    lines.append('   "z": [\n' + z_rows + "\n   ]")
    lines.append("  }")
    return "\n".join(lines)


def dumps(net: Network, metadata: dict | None = None, hard: HardNetwork | None = None) -> str:
    meta = {
        "seed": net.seed,
        "input_width": net.input_width,
        "widths": net.layer_widths,
        "num_classes": net.num_classes,
        "tau": net.tau,
    }
    meta.update(metadata or {})
    layers = []
    for i, layer in enumerate(net.layers):
        doc = {
            "in_a": [int(v) for v in layer.in_a.tolist()],
            "in_b": [int(v) for v in layer.in_b.tolist()],
            "z": layer.weights.detach().cpu().to(torch.float64).tolist(),
        }
        if hard is not None:
            doc["gates"] = [int(g) for g in hard.gates[i]]
        layers.append(doc)
    head = json.dumps(
        {"format": FORMAT, "version": VERSION, "discretized": hard is not None, "metadata": meta},
        indent=1,
        sort_keys=True,
    )
    body = ",\n".join(_dump_layer(d) for d in layers)
    return head[:-2] + ',\n "layers": [\n' + body + "\n ]\n}\n"


def save(path, net: Network, metadata: dict | None = None, hard: HardNetwork | None = None) -> None:
    Path(path).write_text(dumps(net, metadata, hard), encoding="utf-8")


def loads(text: str, dtype=torch.float32):
    """Parse a checkpoint; returns ``(network, hard_network_or_None, metadata)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a silicon-dlgn checkpoint")
    meta = doc["metadata"]
    layers = doc["layers"]
    widths = [len(l["z"]) for l in layers]
    if widths != meta["widths"]:
        raise CheckpointError(f"layer widths {widths} disagree with metadata {meta['widths']}")
    wiring = [(np.array(l["in_a"], dtype=np.int64), np.array(l["in_b"], dtype=np.int64)) for l in layers]
    z = [np.array(l["z"], dtype=np.float64) for l in layers]
    net = Network(
        meta["input_width"], widths, meta["num_classes"], tau=meta["tau"], seed=meta["seed"],
        dtype=dtype, wiring=wiring, z=z,
    )
    hard = None
    if doc.get("discretized"):
        hard = HardNetwork(meta["input_width"], [l["gates"] for l in layers], wiring, meta["num_classes"])
    return net, hard, meta


def load(path, dtype=torch.float32):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_text(encoding="utf-8"), dtype=dtype)
