"""Restricted Boltzmann machine parameterization and analytic quantities.

Energy, free energy, conditionals, negative log-likelihood, and the
parameter- and input-space gradients. Everything here is exact math on
the model; sampling-based estimation lives in `samplers`.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MODEL_MAGIC = b"BDRM"
_MODEL_VERSION = 1

ENUMERATION_LIMIT = 20  # partition/exact-moment ops refuse larger visible layers


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z: np.ndarray) -> np.ndarray:
    """log(1+e^z) without overflow (logaddexp handles both tails)."""
    return np.logaddexp(0.0, z)


def all_binary_vectors(n: int) -> np.ndarray:
    """All 2^n binary vectors as a (2^n, n) float matrix, lexicographic."""
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"refusing to enumerate 2^{n} configurations")
    idx = np.arange(2**n, dtype=np.uint32)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return bits.astype(np.float64)


@dataclass
class Rbm:
    """Model parameters: w couples visible i to hidden j; b, c are biases."""

    w: np.ndarray  # (V, H)
    b: np.ndarray  # (V,)
    c: np.ndarray  # (H,)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        v, h = self.w.shape
        if self.b.shape != (v,) or self.c.shape != (h,):
            raise ValueError(
                f"bias shapes {self.b.shape}/{self.c.shape} do not match weights {self.w.shape}"
            )
        if not (np.isfinite(self.w).all() and np.isfinite(self.b).all()
                and np.isfinite(self.c).all()):
            raise ValueError("parameters must be finite")

    @property
    def num_visible(self) -> int:
        return self.w.shape[0]

    @property
    def num_hidden(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "Rbm":
        return Rbm(self.w.copy(), self.b.copy(), self.c.copy())

    def _check_visible(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.num_visible:
            raise ValueError(f"visible dim {x.shape[-1]} != {self.num_visible}")
        return x

    def _check_hidden(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] != self.num_hidden:
            raise ValueError(f"hidden dim {h.shape[-1]} != {self.num_hidden}")
        return h

    def energy(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Joint energy -x.b - h.c - x.W.h; broadcasts over leading axes."""
        x = self._check_visible(x)
        h = self._check_hidden(h)
        return -(x @ self.b) - (h @ self.c) - np.einsum("...i,ij,...j->...", x, self.w, h)

    def free_energy(self, x: np.ndarray) -> np.ndarray:
        """Effective energy with hidden units summed out analytically.

        F(x) = -x.b - sum_j log(1 + exp(c_j + (x W)_j)), valid for
        continuous x in [0,1]^V as well as binary inputs.
        """
        x = self._check_visible(x)
        return -(x @ self.b) - softplus(self.c + x @ self.w).sum(axis=-1)

    def hidden_conditional(self, x: np.ndarray) -> np.ndarray:
        """p(h_j = 1 | x) for each hidden unit."""
        x = self._check_visible(x)
        return sigmoid(self.c + x @ self.w)

    def visible_conditional(self, h: np.ndarray) -> np.ndarray:
        """p(x_i = 1 | h) for each visible unit."""
        h = self._check_hidden(h)
        return sigmoid(self.b + h @ self.w.T)

    def free_energy_input_gradient(self, x: np.ndarray) -> np.ndarray:
        """dF/dx_i = -b_i - sum_j w_ij sigmoid(c_j + (x W)_j)."""
        x = self._check_visible(x)
        return -self.b - self.hidden_conditional(x) @ self.w.T


def init_rbm(num_visible: int, num_hidden: int, rng: np.random.Generator,
             weight_std: float = 0.01) -> Rbm:
    """Small Gaussian weights, zero biases; keeps early chains well mixed."""
    w = rng.normal(0.0, weight_std, size=(num_visible, num_hidden))
    return Rbm(w, np.zeros(num_visible), np.zeros(num_hidden))


@dataclass(frozen=True)
class Moments:
    """Sufficient statistics <x_i>, <h_j>, <x_i h_j> under one distribution."""

    v: np.ndarray   # (V,)
    h: np.ndarray   # (H,)
    vh: np.ndarray  # (V, H)
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        for arr in (self.v, self.h, self.vh):
            if arr.size and (arr.min() < -1e-12 or arr.max() > 1.0 + 1e-12):
                raise ValueError("moment entries must lie in [0, 1]")


@dataclass(frozen=True)
class GradientEstimate:
    """Paired positive-phase (data) and negative-phase (model) statistics."""

    pos_v: np.ndarray
    pos_h: np.ndarray
    pos_vh: np.ndarray
    neg_v: np.ndarray
    neg_h: np.ndarray
    neg_vh: np.ndarray
    n_pos: int
    n_neg: int

    @classmethod
    def from_moments(cls, pos: Moments, neg: Moments) -> "GradientEstimate":
        return cls(pos.v, pos.h, pos.vh, neg.v, neg.h, neg.vh, pos.n, neg.n)


@dataclass(frozen=True)
class RbmGradient:
    """Loss gradient in parameter shape."""

    w: np.ndarray
    b: np.ndarray
    c: np.ndarray


def data_moments(m: Rbm, batch: np.ndarray) -> Moments:
    """Positive phase: batch means with mean-field hidden probabilities."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    if batch.shape[1] != m.num_visible:
        raise ValueError(f"batch dim {batch.shape[1]} != {m.num_visible}")
    ph = m.hidden_conditional(batch)
    n = batch.shape[0]
    return Moments(batch.mean(axis=0), ph.mean(axis=0), batch.T @ ph / n, n)


def loss_gradient(m: Rbm, stats: GradientEstimate) -> RbmGradient:
    """Negative log-likelihood gradient from positive/negative statistics."""
    if stats.pos_vh.shape != m.w.shape or stats.neg_vh.shape != m.w.shape:
        raise ValueError(
            f"moment shape {stats.pos_vh.shape} does not match model {m.w.shape}"
        )
    return RbmGradient(
        w=-(stats.pos_vh - stats.neg_vh),
        b=-(stats.pos_v - stats.neg_v),
        c=-(stats.pos_h - stats.neg_h),
    )


def log_partition_function(m: Rbm) -> float:
    """log Z via enumeration over visible configs, hidden summed analytically."""
    if m.num_visible > ENUMERATION_LIMIT:
        raise ValueError(
            f"partition function enumeration capped at V <= {ENUMERATION_LIMIT}"
        )
    xs = all_binary_vectors(m.num_visible)
    neg_f = -m.free_energy(xs)
    peak = neg_f.max()
    return float(peak + np.log(np.exp(neg_f - peak).sum()))


def partition_function(m: Rbm) -> float:
    return float(np.exp(log_partition_function(m)))


def nll_loss(m: Rbm, visible_set: np.ndarray, z: float) -> float:
    """Mean negative log-likelihood: log z + mean free energy of the set."""
    if z <= 0:
        raise ValueError(f"partition value must be positive, got {z}")
    visible_set = np.atleast_2d(visible_set)
    return float(np.log(z) + m.free_energy(visible_set).mean())


def save_rbm(m: Rbm, path, metadata: dict | None = None) -> None:
    """Serialize model: magic, version, V, H, then w (row-major), b, c as
    little-endian float64. Metadata goes to a JSON sidecar `<path>.json`.
    """
    path = Path(path)
    payload = (
        _MODEL_MAGIC
        + bytes([_MODEL_VERSION])
        + struct.pack("<II", m.num_visible, m.num_hidden)
        + m.w.astype("<f8").tobytes()
        + m.b.astype("<f8").tobytes()
        + m.c.astype("<f8").tobytes()
    )
    path.write_bytes(payload)
    side = dict(metadata or {})
    side["digest"] = hashlib.sha256(payload).hexdigest()[:16]
    side["shape"] = [m.num_visible, m.num_hidden]
    path.with_name(path.name + ".json").write_text(json.dumps(side, indent=2))


def load_rbm(path) -> tuple[Rbm, dict]:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:4] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not an RBM container (magic {buf[:4]!r})")
    if buf[4] != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {buf[4]}")
    v, h = struct.unpack("<II", buf[5:13])
    need = 13 + 8 * (v * h + v + h)
    if len(buf) < need:
        raise ValueError(f"{path}: truncated model file")
    off = 13
    w = np.frombuffer(buf, dtype="<f8", count=v * h, offset=off).reshape(v, h)
    off += 8 * v * h
    b = np.frombuffer(buf, dtype="<f8", count=v, offset=off)
    off += 8 * v
    c = np.frombuffer(buf, dtype="<f8", count=h, offset=off)
    meta_path = path.with_name(path.name + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Rbm(w.copy(), b.copy(), c.copy()), meta
