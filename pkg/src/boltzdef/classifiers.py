"""The two classifier families behind one differentiable contract.

A classifier exposes `logits`, `loss_input_gradient` (cross-entropy over
softmax logits, differentiated w.r.t. pixels) and `logit_input_gradient`
(one logit differentiated w.r.t. pixels). Free-energy classification
scores each label by the negative free energy of the image concatenated
with that label; the baseline is a small ReLU feedforward net trained by
manual backpropagation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .data import Dataset, Image
from .rbm import Rbm, load_rbm

_NET_MAGIC = b"BDNN"
_NET_VERSION = 1


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@runtime_checkable
class DifferentiableClassifier(Protocol):
    num_classes: int
    input_dim: int

    def logits(self, pixels: np.ndarray) -> np.ndarray: ...
    def loss_input_gradient(self, pixels: np.ndarray, label: int) -> np.ndarray: ...
    def logit_input_gradient(self, pixels: np.ndarray, class_index: int) -> np.ndarray: ...


def _pixels_of(img) -> np.ndarray:
    return img.pixels if isinstance(img, Image) else np.asarray(img, dtype=np.float64)


def predict(clf, img) -> int:
    """Argmax of logits; ties resolve to the smallest label index."""
    return int(np.argmax(clf.logits(_pixels_of(img))))


def accuracy(clf, ds: Dataset) -> float:
    preds = np.argmax(clf.logits_batch(ds.pixels), axis=1)
    return float(np.mean(preds == ds.labels))


@dataclass
class FreeEnergyClassifier:
    """Scores label y by -F(image || one-hot(y)); lowest free energy wins."""

    rbm: Rbm
    num_classes: int

    def __post_init__(self):
        if self.rbm.num_visible <= self.num_classes:
            raise ValueError("RBM visible layer smaller than the label block")
        self.input_dim = self.rbm.num_visible - self.num_classes

    def _stack(self, pixels: np.ndarray) -> np.ndarray:
        if pixels.shape != (self.input_dim,):
            raise ValueError(f"expected {self.input_dim} pixels, got {pixels.shape}")
        block = np.tile(pixels, (self.num_classes, 1))
        return np.concatenate([block, np.eye(self.num_classes)], axis=1)

    def logits(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        return -self.rbm.free_energy(self._stack(pixels))

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        out = np.empty((n, self.num_classes))
        for y in range(self.num_classes):
            onehot = np.zeros((n, self.num_classes))
            onehot[:, y] = 1.0
            out[:, y] = -self.rbm.free_energy(np.concatenate([x, onehot], axis=1))
        return out

    def logit_input_gradient(self, pixels: np.ndarray, class_index: int) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        if not 0 <= class_index < self.num_classes:
            raise ValueError(f"class {class_index} out of range")
        row = self._stack(pixels)[class_index]
        return -self.rbm.free_energy_input_gradient(row)[: self.input_dim]

    def loss_input_gradient(self, pixels: np.ndarray, label: int) -> np.ndarray:
        """Pixel gradient of cross-entropy over softmax(-F(x||y)).

        The label block is model input, not a variable: the returned
        gradient has image length only.
        """
        pixels = np.asarray(pixels, dtype=np.float64)
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} out of range")
        stacked = self._stack(pixels)
        p = softmax(-self.rbm.free_energy(stacked))
        p[label] -= 1.0
        # d logit_y / dx = -dF/dx restricted to the image block
        dlogits = -self.rbm.free_energy_input_gradient(stacked)[:, : self.input_dim]
        return p @ dlogits


@dataclass(frozen=True)
class BaselineConfig:
    hidden: tuple[int, ...] = (64,)
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.3
    seed: int = 0


@dataclass
class BaselineNet:
    """ReLU feedforward net with linear output, trained by hand-rolled SGD."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_accuracy: float | None = None
    eval_accuracy: float | None = None

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"bias {b.shape} does not match weight {w.shape}")
        for w_in, w_out in zip(self.weights, self.weights[1:]):
            if w_in.shape[1] != w_out.shape[0]:
                raise ValueError("consecutive layer dims do not match")
        self.input_dim = self.weights[0].shape[0]
        self.num_classes = self.weights[-1].shape[1]

    def _forward(self, x: np.ndarray):
        """Returns (activations per layer incl. input, pre-activations)."""
        acts, zs = [x], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            zs.append(z)
            acts.append(z if i == len(self.weights) - 1 else np.maximum(z, 0.0))
        return acts, zs

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self._forward(x)[0][-1]

    def logits(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.shape != (self.input_dim,):
            raise ValueError(f"expected {self.input_dim} pixels, got {pixels.shape}")
        return self.logits_batch(pixels[None, :])[0]

    def _input_gradient(self, pixels: np.ndarray, delta_out: np.ndarray) -> np.ndarray:
        acts, zs = self._forward(np.asarray(pixels, dtype=np.float64)[None, :])
        delta = delta_out[None, :]
        for i in range(len(self.weights) - 1, 0, -1):
            delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0)
        return (delta @ self.weights[0].T)[0]

    def loss_input_gradient(self, pixels: np.ndarray, label: int) -> np.ndarray:
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} out of range")
        p = softmax(self.logits(pixels))
        p[label] -= 1.0
        return self._input_gradient(pixels, p)

    def loss_input_gradient_batch(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Cross-entropy pixel gradients for a whole batch at once."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts, zs = self._forward(x)
        delta = softmax(acts[-1])
        delta[np.arange(x.shape[0]), labels] -= 1.0
        for i in range(len(self.weights) - 1, 0, -1):
            delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0)
        return delta @ self.weights[0].T

    def train_step(self, xb: np.ndarray, onehot: np.ndarray,
                   weights: np.ndarray, lr: float) -> None:
        """One weighted SGD step on softmax cross-entropy."""
        wsum = weights.sum()
        if wsum == 0.0:
            return
        acts, zs = self._forward(xb)
        delta = (softmax(acts[-1]) - onehot) * (weights / wsum)[:, None]
        for i in range(len(self.weights) - 1, -1, -1):
            gw = acts[i].T @ delta
            gb = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0)
            self.weights[i] -= lr * gw
            self.biases[i] -= lr * gb

    def logit_input_gradient(self, pixels: np.ndarray, class_index: int) -> np.ndarray:
        if not 0 <= class_index < self.num_classes:
            raise ValueError(f"class {class_index} out of range")
        delta = np.zeros(self.num_classes)
        delta[class_index] = 1.0
        return self._input_gradient(pixels, delta)


def init_baseline(input_dim: int, hidden: tuple[int, ...], num_classes: int,
                  rng: np.random.Generator) -> BaselineNet:
    sizes = (input_dim, *hidden, num_classes)
    weights, biases = [], []
    for d_in, d_out in zip(sizes, sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return BaselineNet(weights, biases)


def baseline_train(cfg: BaselineConfig, ds: Dataset,
                   rng: np.random.Generator | None = None,
                   eval_ds: Dataset | None = None,
                   sample_weights: np.ndarray | None = None) -> BaselineNet:
    """Mini-batch SGD with manual backpropagation on softmax cross-entropy.

    `sample_weights` (optional, per example) reweight the batch loss;
    used by adversarial training to mix clean and crafted examples.
    """
    if len(ds) == 0:
        raise ValueError("empty dataset")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    net = init_baseline(ds.pixels.shape[1], cfg.hidden, ds.num_classes, rng)
    x_all, y_all = ds.pixels, ds.labels
    if sample_weights is None:
        weights_all = np.ones(len(ds))
    else:
        weights_all = np.asarray(sample_weights, dtype=np.float64)
        if weights_all.shape != (len(ds),):
            raise ValueError("sample_weights length does not match dataset")

    onehot = np.zeros((len(ds), ds.num_classes))
    onehot[np.arange(len(ds)), y_all] = 1.0

    for _ in range(cfg.epochs):
        order = rng.permutation(len(ds))
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            net.train_step(x_all[idx], onehot[idx], weights_all[idx],
                           cfg.learning_rate)

    preds = np.argmax(net.logits_batch(x_all), axis=1)
    net.train_accuracy = float(np.mean(preds == y_all))
    if eval_ds is not None:
        net.eval_accuracy = accuracy(net, eval_ds)
    return net


def save_baseline(net: BaselineNet, path, metadata: dict | None = None) -> None:
    """Net container: magic, version, layer count, dims, then per-layer
    row-major weights and biases as little-endian float64."""
    path = Path(path)
    parts = [_NET_MAGIC, bytes([_NET_VERSION]),
             struct.pack("<I", len(net.weights))]
    for w in net.weights:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in zip(net.weights, net.biases):
        parts.append(w.astype("<f8").tobytes())
        parts.append(b.astype("<f8").tobytes())
    path.write_bytes(b"".join(parts))
    side = dict(metadata or {})
    side["layers"] = [list(w.shape) for w in net.weights]
    if net.train_accuracy is not None:
        side["train_accuracy"] = net.train_accuracy
    if net.eval_accuracy is not None:
        side["eval_accuracy"] = net.eval_accuracy
    path.with_name(path.name + ".json").write_text(json.dumps(side, indent=2))


def load_baseline(path) -> BaselineNet:
    buf = Path(path).read_bytes()
    if buf[:4] != _NET_MAGIC:
        raise ValueError(f"{path}: not a baseline net container")
    if buf[4] != _NET_VERSION:
        raise ValueError(f"{path}: unsupported net version {buf[4]}")
    (n_layers,) = struct.unpack("<I", buf[5:9])
    dims, off = [], 9
    for _ in range(n_layers):
        dims.append(struct.unpack("<II", buf[off : off + 8]))
        off += 8
    weights, biases = [], []
    for d_in, d_out in dims:
        w = np.frombuffer(buf, dtype="<f8", count=d_in * d_out, offset=off)
        off += 8 * d_in * d_out
        b = np.frombuffer(buf, dtype="<f8", count=d_out, offset=off)
        off += 8 * d_out
        weights.append(w.reshape(d_in, d_out).copy())
        biases.append(b.copy())
    return BaselineNet(weights, biases)


def load_classifier(path):
    """Open either model container; the 4-byte magic selects the kind."""
    path = Path(path)
    magic = path.read_bytes()[:4]
    if magic == _NET_MAGIC:
        return load_baseline(path)
    if magic == b"BDRM":
        model, meta = load_rbm(path)
        num_classes = meta.get("num_classes")
        if num_classes is None:
            raise ValueError(f"{path}: RBM sidecar lacks num_classes")
        return FreeEnergyClassifier(model, int(num_classes))
    raise ValueError(f"{path}: unknown model container magic {magic!r}")
