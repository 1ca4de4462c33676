"""Datasets: MNIST IDX files, synthetic Gaussian blobs, deterministic splits.

Every dataset keeps its inputs in [0,1]^d as a (n, d) float64 array.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .rng import SeededRng

__all__ = [
    "Dataset",
    "DataFormatError",
    "load_mnist_idx",
    "write_mnist_idx",
    "make_blobs",
    "make_digits784",
    "split",
    "onehot",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class DataFormatError(Exception):
    """File does not follow the expected on-disk format."""


def onehot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class Dataset:
    """Classification dataset with normalized inputs.

    inputs: (n, d) float64 in [0,1]; labels: (n,) int class indices < C.
    """

    name: str
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be (n, d), got {self.inputs.shape}")
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels lengths differ")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ValueError("inputs must lie in [0,1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels must be class indices < n_classes")

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def onehot(self) -> np.ndarray:
        return onehot(self.labels, self.n_classes)

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(name or self.name, self.inputs[idx], self.labels[idx], self.n_classes)


def _read_u32s(raw: bytes, count: int, path) -> tuple[int, ...]:
    need = 4 * count
    if len(raw) < need:
        raise DataFormatError(f"{path}: truncated header")
    return struct.unpack(f">{count}I", raw[:need])


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Parse the big-endian IDX image/label pair into a Dataset.

    Pixel bytes are scaled by 1/255; images are flattened to d = rows*cols.
    """
    with open(images_path, "rb") as f:
        raw_img = f.read()
    with open(labels_path, "rb") as f:
        raw_lab = f.read()
    magic, n_img, rows, cols = _read_u32s(raw_img, 4, images_path)
    if magic != IMAGES_MAGIC:
        raise DataFormatError(f"{images_path}: bad magic 0x{magic:08x} (want 0x{IMAGES_MAGIC:08x})")
    d = rows * cols
    pixels = raw_img[16:]
    if len(pixels) != n_img * d:
        raise DataFormatError(f"{images_path}: expected {n_img * d} pixel bytes, found {len(pixels)}")
    magic_l, n_lab = _read_u32s(raw_lab, 2, labels_path)
    if magic_l != LABELS_MAGIC:
        raise DataFormatError(f"{labels_path}: bad magic 0x{magic_l:08x} (want 0x{LABELS_MAGIC:08x})")
    body = raw_lab[8:]
    if len(body) != n_lab:
        raise DataFormatError(f"{labels_path}: expected {n_lab} label bytes, found {len(body)}")
    if n_img != n_lab:
        raise DataFormatError(f"image/label counts differ: {n_img} vs {n_lab}")
    inputs = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64).reshape(n_img, d) / 255.0
    labels = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    return Dataset("mnist", inputs, labels, 10)


def write_mnist_idx(data: Dataset, images_path, labels_path, side: int | None = None) -> float:
    """Quantize a dataset to IDX bytes; returns the max L-inf rounding error.

    Rounding to the nearest byte perturbs each pixel by at most 1/510, so
    reloading is identity up to that quantization.
    """
    n, d = data.inputs.shape
    if side is None:
        side = int(round(np.sqrt(d)))
    if side * side != d:
        raise ValueError(f"d={d} is not a square image; pass side explicitly")
    quant = np.rint(data.inputs * 255.0).astype(np.uint8)
    err = float(np.abs(quant.astype(np.float64) / 255.0 - data.inputs).max()) if n else 0.0
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IMAGES_MAGIC, n, side, side))
        f.write(quant.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", LABELS_MAGIC, n))
        f.write(data.labels.astype(np.uint8).tobytes())
    return err


def make_blobs(n_per_class: int, centers, sigma: float, seed: int) -> Dataset:
    """Gaussian blobs around the given centers, clamped into [0,1]^d."""
    centers = [np.asarray(c, dtype=np.float64) for c in centers]
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = centers[0].shape[0]
    for i, a in enumerate(centers):
        if a.shape != (d,):
            raise ValueError("centers must share one dimension")
        for b in centers[:i]:
            if np.array_equal(a, b):
                raise ValueError("centers must be distinct")
    rng = SeededRng(seed).spawn("blobs")
    xs, ys = [], []
    for label, c in enumerate(centers):
        noise = rng.standard_normal((n_per_class, d)) * sigma
        xs.append(np.clip(c + noise, 0.0, 1.0))
        ys.append(np.full(n_per_class, label, dtype=np.int64))
    return Dataset("blobs", np.concatenate(xs), np.concatenate(ys), len(centers))


def split(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive, seeded-shuffle split; first part gets ``fraction``."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0,1)")
    n = len(data)
    k = int(round(n * fraction))
    if k == 0 or k == n:
        raise ValueError(f"split of {n} at fraction {fraction} leaves an empty part")
    order = SeededRng(seed).spawn("split").permutation(n)
    return (
        data.subset(order[:k], f"{data.name}-a"),
        data.subset(order[k:], f"{data.name}-b"),
    )


def make_digits784(n_examples: int = 10000, seed: int = 0) -> Dataset:
    """Handwritten-digit stand-in at MNIST dimensionality (d=784).

    Upsamples sklearn's bundled 8x8 digit scans to 28x28 and augments them
    with seeded +-2px shifts until ``n_examples`` images exist.  Useful when
    no MNIST IDX files are available; requires scikit-learn.
    """
    try:
        from sklearn.datasets import load_digits
    except ImportError as exc:  # pragma: no cover
        raise ImportError("make_digits784 needs scikit-learn (pip install advchain[digits])") from exc
    raw = load_digits()
    base = raw.images / 16.0  # (1797, 8, 8) in [0,1]
    labels = raw.target.astype(np.int64)
    # nearest-neighbour 8->32 then center-crop to 28
    up = np.kron(base, np.ones((4, 4)))[:, 2:30, 2:30]
    rng = SeededRng(seed).spawn("digits784")
    xs = [up]
    ys = [labels]
    total = len(labels)
    while total < n_examples:
        dx, dy = (int(v) for v in rng.integers(-2, 3, size=2))
        shifted = np.roll(np.roll(up, dx, axis=1), dy, axis=2)
        if dx > 0:
            shifted[:, :dx, :] = 0.0
        elif dx < 0:
            shifted[:, dx:, :] = 0.0
        if dy > 0:
            shifted[:, :, :dy] = 0.0
        elif dy < 0:
            shifted[:, :, dy:] = 0.0
        xs.append(shifted)
        ys.append(labels)
        total += len(labels)
    inputs = np.concatenate(xs).reshape(-1, 784)
    all_labels = np.concatenate(ys)
    order = rng.permutation(total)[:n_examples]
    return Dataset("digits784", inputs[order], all_labels[order], 10)
