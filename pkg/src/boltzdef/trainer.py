"""RBM training loop: Adam updates over backend-estimated gradients.

Supports a classical bootstrap phase before switching to the configured
backend (e.g. PCD for a fixed number of epochs, then annealer-style
sampling for the remainder).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, visible_matrix
from .rbm import (
    GradientEstimate,
    Rbm,
    RbmGradient,
    data_moments,
    init_rbm,
    loss_gradient,
    save_rbm,
)
from .samplers import SamplerSpec, make_negative_sampler


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 10
    learning_rate: float = 0.01
    hidden_units: int = 40
    sampler: SamplerSpec = field(default_factory=lambda: SamplerSpec("pcd", k=50))
    bootstrap_epochs: int = 0
    bootstrap_sampler: SamplerSpec = field(default_factory=lambda: SamplerSpec("pcd", k=50))
    bootstrap_batch_size: int | None = None             # None: keep batch_size
    post_bootstrap_learning_rate: float | None = None   # None: keep learning_rate
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_std: float = 0.01
    holdout_fraction: float = 0.1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.hidden_units < 1:
            raise ValueError("epochs >= 0, batch_size >= 1, hidden_units >= 1 required")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if (self.post_bootstrap_learning_rate is not None
                and self.post_bootstrap_learning_rate <= 0):
            raise ValueError("post_bootstrap_learning_rate must be positive")
        if self.bootstrap_batch_size is not None and self.bootstrap_batch_size < 1:
            raise ValueError("bootstrap_batch_size must be >= 1")
        if not 0 <= self.bootstrap_epochs <= self.epochs:
            raise ValueError(
                f"bootstrap_epochs {self.bootstrap_epochs} outside [0, {self.epochs}]"
            )
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")


@dataclass
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    m_c: np.ndarray
    v_c: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, model: Rbm) -> "AdamState":
        return cls(
            np.zeros_like(model.w), np.zeros_like(model.w),
            np.zeros_like(model.b), np.zeros_like(model.b),
            np.zeros_like(model.c), np.zeros_like(model.c),
        )


def adam_update(state: AdamState, grad: RbmGradient, lr: float,
                beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> tuple[RbmGradient, AdamState]:
    """One Adam step; returns the parameter delta and the advanced state.

    delta = -lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments.
    """
    if grad.w.shape != state.m_w.shape:
        raise ValueError(
            f"gradient shape {grad.w.shape} does not match state {state.m_w.shape}"
        )
    t = state.step + 1

    def _one(m, v, g):
        m_new = beta1 * m + (1 - beta1) * g
        v_new = beta2 * v + (1 - beta2) * g * g
        m_hat = m_new / (1 - beta1**t)
        v_hat = v_new / (1 - beta2**t)
        return -lr * m_hat / (np.sqrt(v_hat) + eps), m_new, v_new

    dw, mw, vw = _one(state.m_w, state.v_w, grad.w)
    db, mb, vb = _one(state.m_b, state.v_b, grad.b)
    dc, mc, vc = _one(state.m_c, state.v_c, grad.c)
    return RbmGradient(dw, db, dc), AdamState(mw, vw, mb, vb, mc, vc, t)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    backend: str
    reconstruction_error: float
    free_energy_gap: float
    wall_time: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def backend_switch_epoch(self) -> int | None:
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.backend != prev.backend:
                return cur.epoch
        return None

    def digest(self) -> dict:
        if not self.records:
            return {"epochs": 0}
        last = self.records[-1]
        return {
            "epochs": len(self.records),
            "final_backend": last.backend,
            "final_reconstruction_error": last.reconstruction_error,
            "final_free_energy_gap": last.free_energy_gap,
        }


def _as_visible(dataset) -> np.ndarray:
    if isinstance(dataset, Dataset):
        return visible_matrix(dataset)
    x = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    return x


def train(cfg: TrainConfig, dataset, rng: np.random.Generator | None = None,
          checkpoint_dir=None) -> tuple[Rbm, TrainHistory]:
    """Train an RBM on a Dataset (pixels || one-hot label) or a raw
    (n, V) visible matrix.

    Deterministic for a fixed config seed; the backend switches from the
    bootstrap sampler to the configured one after `bootstrap_epochs`.
    """
    x_all = _as_visible(dataset)
    if rng is None:
        ss = np.random.SeedSequence(cfg.seed)
    else:
        ss = np.random.SeedSequence(int(rng.integers(2**63)))
    init_ss, split_ss, boot_ss, main_ss, shuffle_ss = ss.spawn(5)

    n = x_all.shape[0]
    n_hold = int(round(cfg.holdout_fraction * n))
    perm = np.random.default_rng(split_ss).permutation(n)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if train_idx.size == 0:
        raise ValueError("holdout fraction leaves no training data")
    x_train, x_hold = x_all[train_idx], x_all[hold_idx]
    monitor = x_train[: min(256, x_train.shape[0])]

    model = init_rbm(x_all.shape[1], cfg.hidden_units, np.random.default_rng(init_ss),
                     cfg.weight_std)
    adam = AdamState.zeros(model)
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history

    boot_backend = make_negative_sampler(cfg.bootstrap_sampler,
                                         np.random.default_rng(boot_ss))
    main_backend = make_negative_sampler(cfg.sampler, np.random.default_rng(main_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)

    post_lr = (cfg.learning_rate if cfg.post_bootstrap_learning_rate is None
               else cfg.post_bootstrap_learning_rate)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        bootstrapping = epoch < cfg.bootstrap_epochs
        if 0 < cfg.bootstrap_epochs == epoch:
            # fresh optimizer state: the moment accumulators are calibrated
            # to the bootstrap backend's gradient scale, and carrying them
            # across the switch turns the new backend's first updates into
            # arbitrarily amplified steps
            adam = AdamState.zeros(model)
        backend = boot_backend if bootstrapping else main_backend
        lr = cfg.learning_rate if bootstrapping else post_lr
        batch = (cfg.bootstrap_batch_size if bootstrapping
                 and cfg.bootstrap_batch_size is not None else cfg.batch_size)
        order = shuffle_rng.permutation(x_train.shape[0])
        for start in range(0, order.size, batch):
            xb = x_train[order[start : start + batch]]
            pos = data_moments(model, xb)
            neg = backend.moments(model, xb)
            grad = loss_gradient(model, GradientEstimate.from_moments(pos, neg))
            delta, adam = adam_update(adam, grad, lr,
                                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            model.w += delta.w
            model.b += delta.b
            model.c += delta.c

        recon = model.visible_conditional(model.hidden_conditional(monitor))
        recon_err = float(np.mean((monitor - recon) ** 2))
        if x_hold.shape[0]:
            gap = float(model.free_energy(x_hold).mean()
                        - model.free_energy(monitor).mean())
        else:
            gap = float("nan")
        history.records.append(EpochRecord(
            epoch=epoch, backend=backend.label,
            reconstruction_error=recon_err, free_energy_gap=gap,
            wall_time=time.perf_counter() - t0,
        ))
        if (checkpoint_dir is not None and cfg.checkpoint_every
                and (epoch + 1) % cfg.checkpoint_every == 0):
            out = Path(checkpoint_dir) / f"checkpoint_{epoch + 1:04d}.rbm"
            save_rbm(model, out, metadata={"epoch": epoch + 1,
                                           "history": history.digest()})

    return model, history
