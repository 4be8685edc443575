"""Bit-vector datasets: MNIST (IDX files), raw text files, and toy boolean tasks."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DEFAULT_THRESHOLD = 127


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    bits: np.ndarray  # (n, width) uint8 in {0, 1}
    labels: np.ndarray  # (n,) int64
    num_classes: int
    split: str = "train"
    # optional real-valued inputs in [0, 1] for relaxed training; hard evaluation always uses ``bits``
    real: np.ndarray | None = None

    def __post_init__(self):
        if self.bits.ndim != 2 or len(self.bits) == 0:
            raise DatasetError("dataset must be a non-empty 2-D bit array")
        if len(self.labels) != len(self.bits):
            raise DatasetError("bits and labels differ in length")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DatasetError("label out of range")
        if self.real is not None and self.real.shape != self.bits.shape:
            raise DatasetError("real-valued inputs must match the bit array's shape")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def __len__(self) -> int:
        return len(self.bits)

    def subset(self, n: int) -> "Dataset":
        real = None if self.real is None else self.real[:n]
        return Dataset(self.bits[:n], self.labels[:n], self.num_classes, self.split, real)

    def relaxed_inputs(self) -> np.ndarray:
        return self.bits if self.real is None else self.real


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    data = Path(path).read_bytes()
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DatasetError(f"{path}: truncated IDX header")
    got = struct.unpack(">I", data[:4])[0]
    if got != magic:
        raise DatasetError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise DatasetError(f"{path}: truncated, expected {size} bytes of data")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def binarize(pixels: np.ndarray, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """1 iff pixel > threshold."""
    return (np.asarray(pixels) > threshold).astype(np.uint8)


def load_mnist(
    images_path, labels_path, threshold: int = DEFAULT_THRESHOLD, split: str = "train", continuous: bool = False
) -> Dataset:
    """Binarized MNIST; ``continuous`` also keeps pixels/255 as the relaxed training input."""
    if not 0 <= threshold <= 255:
        raise DatasetError("threshold must be in 0..255")
    for p in (images_path, labels_path):
        if not Path(p).is_file():
            raise FileNotFoundError(f"MNIST file not found: {p}")
    images = _read_idx(images_path, IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise DatasetError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    pixels = images.reshape(len(images), -1)
    real = (pixels / 255.0).astype(np.float32) if continuous else None
    return Dataset(binarize(pixels, threshold), labels.astype(np.int64), 10, split, real)


def load_raw(path, split: str = "train", num_classes: int | None = None) -> Dataset:
    """Read ``width,label,bits`` lines; bits are a 0/1 string, MSB-left (last char is bit 0)."""
    rows, labels, width = [], [], None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            w_s, label_s, bits_s = (p.strip() for p in line.split(","))
            w = int(w_s)
            label = int(label_s)
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: expected 'width,label,bits'") from None
        if len(bits_s) != w or set(bits_s) - {"0", "1"}:
            raise DatasetError(f"{path}:{lineno}: bit string does not match width {w}")
        if width is None:
            width = w
        elif w != width:
            raise DatasetError(f"{path}:{lineno}: width {w} differs from {width}")
        rows.append((np.frombuffer(bits_s.encode(), dtype=np.uint8) - ord("0"))[::-1])
        labels.append(label)
    if not rows:
        raise DatasetError(f"{path}: no samples")
    labels = np.array(labels, dtype=np.int64)
    return Dataset(np.stack(rows), labels, num_classes or int(labels.max()) + 1, split)


def save_raw(path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for bits, label in zip(data.bits, data.labels):
            fh.write(f"{data.width},{int(label)},{''.join(map(str, bits[::-1].tolist()))}\n")


TOY_TASKS = {
    "xor2": (2, lambda x: x[:, 0] ^ x[:, 1]),
    "parity3": (3, lambda x: x[:, 0] ^ x[:, 1] ^ x[:, 2]),
    "constant": (2, lambda x: np.zeros(len(x), dtype=np.int64)),
}


def make_toy(task: str, n: int, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Enumerated patterns of a small boolean task, repeated to ``n`` samples.

    Labels are flipped with probability ``noise``.
    """
    if task not in TOY_TASKS:
        raise DatasetError(f"unknown toy task {task!r}; choose from {sorted(TOY_TASKS)}")
    if not 0 <= noise < 0.5:
        raise DatasetError("noise rate must be in [0, 0.5)")
    width, fn = TOY_TASKS[task]
    patterns = ((np.arange(2**width)[:, None] >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)
    bits = patterns[np.arange(n) % len(patterns)]
    labels = fn(bits.astype(np.int64)).astype(np.int64)
    if noise > 0:
        rng = np.random.default_rng(seed)
        flip = rng.random(n) < noise
        labels = np.where(flip, 1 - labels, labels)
    return Dataset(bits, labels, 2, "train")
