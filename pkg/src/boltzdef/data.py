"""Dataset ingestion and preparation.

Reads IDX-format image/label files, produces the two pipeline variants
(28x28 grayscale, 7x7 binarized) and assembles visible vectors by
concatenating image pixels with one-hot labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_DATASET_MAGIC = b"BDDS"
_DATASET_VERSION = 1


class IdxFormatError(ValueError):
    """Raised for malformed IDX files (bad magic, truncation)."""


@dataclass(frozen=True)
class Image:
    """A flat pixel vector with its grid geometry. Pixels live in [0,1]."""

    pixels: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", px)
        if px.ndim != 1 or px.size != self.width * self.height:
            raise ValueError(
                f"pixel count {px.size} does not match {self.width}x{self.height}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixels must lie in [0, 1]")

    def grid(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)


@dataclass(frozen=True)
class VisibleVector:
    """Image pixels followed by a one-hot label block."""

    values: np.ndarray
    image_dim: int
    label_dim: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.image_dim + self.label_dim,):
            raise ValueError(
                f"expected length {self.image_dim + self.label_dim}, got {vals.shape}"
            )

    def image_part(self) -> np.ndarray:
        return self.values[: self.image_dim]

    def label_part(self) -> np.ndarray:
        return self.values[self.image_dim :]


@dataclass(frozen=True)
class Dataset:
    """Images stored row-wise as an (n, width*height) matrix plus labels."""

    pixels: np.ndarray
    labels: np.ndarray
    width: int
    height: int
    num_classes: int = 10

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        lb = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "labels", lb)
        if px.ndim != 2 or px.shape[1] != self.width * self.height:
            raise ValueError(f"pixel matrix shape {px.shape} inconsistent with dims")
        if lb.shape != (px.shape[0],):
            raise ValueError(
                f"{px.shape[0]} images but {lb.shape[0]} labels"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixels must lie in [0, 1]")
        if lb.size and (lb.min() < 0 or lb.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def image(self, i: int) -> Image:
        return Image(self.pixels[i], self.width, self.height)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.pixels[idx], self.labels[idx], self.width, self.height,
                       self.num_classes)


def _read_exact(buf: bytes, offset: int, count: int, path) -> bytes:
    if offset + count > len(buf):
        raise IdxFormatError(f"{path}: truncated file (wanted {count} bytes at {offset})")
    return buf[offset : offset + count]


def load_idx(image_path, label_path, num_classes: int = 10) -> Dataset:
    """Load an MNIST-layout IDX image/label file pair.

    Pixels are scaled from [0,255] bytes to [0,1] by exact division;
    item order is preserved.
    """
    with open(image_path, "rb") as f:
        ibuf = f.read()
    with open(label_path, "rb") as f:
        lbuf = f.read()

    magic, n, rows, cols = struct.unpack(">IIII", _read_exact(ibuf, 0, 16, image_path))
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{image_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    raw = _read_exact(ibuf, 16, n * rows * cols, image_path)

    lmagic, ln = struct.unpack(">II", _read_exact(lbuf, 0, 8, label_path))
    if lmagic != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"{label_path}: bad label magic 0x{lmagic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    lraw = _read_exact(lbuf, 8, ln, label_path)

    if n != ln:
        raise ValueError(f"image count {n} does not match label count {ln}")

    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64).reshape(n, rows * cols)
    pixels /= 255.0
    labels = np.frombuffer(lraw, dtype=np.uint8).astype(np.int64)
    return Dataset(pixels, labels, width=cols, height=rows, num_classes=num_classes)


def write_idx(ds: Dataset, image_path, label_path) -> None:
    """Write a dataset back to the IDX pair format (inverse of load_idx)."""
    n = len(ds)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, ds.height, ds.width))
        f.write(np.round(ds.pixels * 255.0).astype(np.uint8).tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def downscale_binarize(img: Image, threshold: float = 0.5) -> Image:
    """Downscale a 28x28 image to 7x7 binary via 4x4 block means.

    An output pixel is 1 exactly when its source block mean exceeds
    `threshold`.
    """
    if (img.width, img.height) != (28, 28):
        raise ValueError(f"expected 28x28 input, got {img.width}x{img.height}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    blocks = img.grid().reshape(7, 4, 7, 4).mean(axis=(1, 3))
    out = (blocks > threshold).astype(np.float64)
    return Image(out.ravel(), 7, 7)


def downscale_binarize_dataset(ds: Dataset, threshold: float = 0.5) -> Dataset:
    if (ds.width, ds.height) != (28, 28):
        raise ValueError(f"expected 28x28 dataset, got {ds.width}x{ds.height}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    n = len(ds)
    blocks = ds.pixels.reshape(n, 7, 4, 7, 4).mean(axis=(2, 4))
    out = (blocks > threshold).astype(np.float64).reshape(n, 49)
    return Dataset(out, ds.labels, 7, 7, ds.num_classes)


def concat_label(img: Image, label: int, num_classes: int) -> VisibleVector:
    """Concatenate image pixels with a one-hot label block."""
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    onehot = np.zeros(num_classes)
    onehot[label] = 1.0
    return VisibleVector(np.concatenate([img.pixels, onehot]),
                         image_dim=img.pixels.size, label_dim=num_classes)


def visible_matrix(ds: Dataset) -> np.ndarray:
    """All dataset items as visible vectors: pixels || one-hot(label)."""
    n = len(ds)
    onehot = np.zeros((n, ds.num_classes))
    onehot[np.arange(n), ds.labels] = 1.0
    return np.concatenate([ds.pixels, onehot], axis=1)


def batches(ds: Dataset, size: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled partition of dataset indices.

    The remainder batch is kept, so every index appears exactly once.
    """
    if size < 1:
        raise ValueError(f"batch size must be >= 1, got {size}")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return [perm[i : i + size] for i in range(0, len(perm), size)]


def save_dataset(ds: Dataset, path) -> None:
    """Write the internal dataset container.

    Layout: magic b"BDDS", version byte, little-endian uint32
    (n, width, height, num_classes), pixel payload as float64, labels
    as int64.
    """
    with open(path, "wb") as f:
        f.write(_DATASET_MAGIC)
        f.write(bytes([_DATASET_VERSION]))
        f.write(struct.pack("<IIII", len(ds), ds.width, ds.height, ds.num_classes))
        f.write(ds.pixels.astype("<f8").tobytes())
        f.write(ds.labels.astype("<i8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != _DATASET_MAGIC:
        raise IdxFormatError(f"{path}: not a dataset container (magic {buf[:4]!r})")
    if buf[4] != _DATASET_VERSION:
        raise IdxFormatError(f"{path}: unsupported container version {buf[4]}")
    n, width, height, num_classes = struct.unpack("<IIII", _read_exact(buf, 5, 16, path))
    d = width * height
    off = 21
    pixels = np.frombuffer(_read_exact(buf, off, n * d * 8, path), dtype="<f8")
    off += n * d * 8
    labels = np.frombuffer(_read_exact(buf, off, n * 8, path), dtype="<i8")
    return Dataset(pixels.reshape(n, d).copy(), labels.copy(), width, height, num_classes)
