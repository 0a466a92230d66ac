"""Baseline defences: dataset transforms and adversarial training.

Feature squeezing and spatial smoothing are per-image preprocessing;
adversarial training retrains the baseline net on a weighted union of
clean and attacked examples. The generative defence is the absence of a
transform: the RBM trains on the original data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .attacks import AttackSpec, run_attack
from .classifiers import (
    BaselineConfig,
    BaselineNet,
    accuracy,
    baseline_train,
    init_baseline,
)
from .data import Dataset, Image

DEFENCE_KINDS = (
    "adversarial_training",
    "feature_squeezing",
    "spatial_smoothing",
    "random_pad",
    "none",
)


@dataclass(frozen=True)
class DefenceSpec:
    kind: str
    bits: int = 4           # feature_squeezing
    window: int = 3         # spatial_smoothing
    mix_ratio: float = 0.5  # adversarial_training
    online: bool = False    # adversarial_training: per-batch re-crafting
    max_shift: int = 2      # random_pad

    def __post_init__(self):
        if self.kind not in DEFENCE_KINDS:
            raise ValueError(f"unknown defence kind {self.kind!r}")
        if not 1 <= self.bits <= 8:
            raise ValueError(f"bit depth must lie in [1, 8], got {self.bits}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ValueError(f"mix ratio must lie in [0, 1], got {self.mix_ratio}")


def feature_squeeze(img: Image, bits: int) -> Image:
    """Reduce bit depth: round each pixel to the nearest of 2^bits levels."""
    if not 1 <= bits <= 8:
        raise ValueError(f"bit depth must lie in [1, 8], got {bits}")
    levels = 2**bits - 1
    squeezed = np.floor(img.pixels * levels + 0.5) / levels  # round half up
    return Image(squeezed, img.width, img.height)


def spatial_smooth(img: Image, window: int) -> Image:
    """Median filter over a window x window neighborhood, edge-replicated."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    if window == 1:
        return img
    pad = window // 2
    grid = np.pad(img.grid(), pad, mode="edge")
    h, w = img.height, img.width
    windows = np.lib.stride_tricks.sliding_window_view(grid, (window, window))
    out = np.median(windows.reshape(h, w, -1), axis=2)
    return Image(out.ravel(), img.width, img.height)


def random_pad(img: Image, rng: np.random.Generator, max_shift: int = 2) -> Image:
    """Randomized translate-within-padding transform (optional defence;
    excluded from the headline matrix)."""
    dx, dy = rng.integers(-max_shift, max_shift + 1, size=2)
    grid = np.pad(img.grid(), max_shift, mode="constant")
    y0, x0 = max_shift + dy, max_shift + dx
    out = grid[y0 : y0 + img.height, x0 : x0 + img.width]
    return Image(out.ravel(), img.width, img.height)


def apply_defence(ds: Dataset, spec: DefenceSpec,
                  rng: np.random.Generator | None = None) -> Dataset:
    """Per-image transform for squeezing/smoothing/padding; pass-through
    for adversarial training (a training-time defence) and for `none`."""
    if spec.kind in ("none", "adversarial_training"):
        return ds
    out = np.empty_like(ds.pixels)
    for i in range(len(ds)):
        img = ds.image(i)
        if spec.kind == "feature_squeezing":
            img = feature_squeeze(img, spec.bits)
        elif spec.kind == "spatial_smoothing":
            img = spatial_smooth(img, spec.window)
        else:
            if rng is None:
                raise ValueError("random_pad needs a generator")
            img = random_pad(img, rng, spec.max_shift)
        out[i] = img.pixels
    return Dataset(out, ds.labels, ds.width, ds.height, ds.num_classes)


def adversarial_training(ds: Dataset, attack: AttackSpec, clf_cfg: BaselineConfig,
                         mix_ratio: float, rng: np.random.Generator,
                         eval_ds: Dataset | None = None,
                         online: bool = False) -> BaselineNet:
    """Train on a weighted mix of clean and attacked examples.

    Clean examples carry weight (1 - mix_ratio), crafted ones mix_ratio.
    Default (offline): train an undefended net, craft adversarials for
    the whole training set once, retrain from scratch on the weighted
    union. With `online=True` the adversarials are instead re-crafted
    against the current parameters every batch, which yields a far more
    robust net but is only tractable for the single-step fgsm spec.

    A zero mix ratio is exactly plain training either way.
    """
    if not 0.0 <= mix_ratio <= 1.0:
        raise ValueError(f"mix ratio must lie in [0, 1], got {mix_ratio}")
    if mix_ratio == 0.0:
        return baseline_train(clf_cfg, ds, rng, eval_ds=eval_ds)
    seed = int(rng.integers(2**63))
    if online and attack.kind in ("fgsm", "clean"):
        return _online_adversarial_training(ds, attack, clf_cfg, mix_ratio,
                                            np.random.default_rng(seed), eval_ds)
    return _offline_adversarial_training(ds, attack, clf_cfg, mix_ratio, seed,
                                         eval_ds)


def _online_adversarial_training(ds, attack, clf_cfg, mix_ratio, rng, eval_ds):
    epsilon = attack.epsilon if attack.kind == "fgsm" else 0.0
    net = init_baseline(ds.pixels.shape[1], clf_cfg.hidden, ds.num_classes, rng)
    onehot = np.zeros((len(ds), ds.num_classes))
    onehot[np.arange(len(ds)), ds.labels] = 1.0
    for _ in range(clf_cfg.epochs):
        order = rng.permutation(len(ds))
        for start in range(0, order.size, clf_cfg.batch_size):
            idx = order[start : start + clf_cfg.batch_size]
            xb, tb = ds.pixels[idx], onehot[idx]
            grad = net.loss_input_gradient_batch(xb, ds.labels[idx])
            adv = np.clip(xb + epsilon * np.sign(grad), 0.0, 1.0)
            net.train_step(
                np.concatenate([xb, adv]),
                np.concatenate([tb, tb]),
                np.concatenate([np.full(len(idx), 1.0 - mix_ratio),
                                np.full(len(idx), mix_ratio)]),
                clf_cfg.learning_rate,
            )
    preds = np.argmax(net.logits_batch(ds.pixels), axis=1)
    net.train_accuracy = float(np.mean(preds == ds.labels))
    if eval_ds is not None:
        net.eval_accuracy = accuracy(net, eval_ds)
    return net


def _offline_adversarial_training(ds, attack, clf_cfg, mix_ratio, seed, eval_ds):
    base = baseline_train(clf_cfg, ds, np.random.default_rng(seed), eval_ds=eval_ds)
    adv_pixels = np.empty_like(ds.pixels)
    failures = 0
    for i in range(len(ds)):
        res = run_attack(attack, base, ds.image(i), int(ds.labels[i]))
        adv_pixels[i] = res.adversarial.pixels
        failures += not res.success
    if failures == len(ds):
        warnings.warn("adversarial training is degenerate: the attack never "
                      "succeeded, augmentation adds no new information")

    union = Dataset(
        np.concatenate([ds.pixels, adv_pixels]),
        np.concatenate([ds.labels, ds.labels]),
        ds.width, ds.height, ds.num_classes,
    )
    weights = np.concatenate([
        np.full(len(ds), 1.0 - mix_ratio),
        np.full(len(ds), mix_ratio),
    ])
    return baseline_train(clf_cfg, union, np.random.default_rng(seed),
                          eval_ds=eval_ds, sample_weights=weights)
