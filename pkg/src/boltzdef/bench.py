"""Attack x defence robustness matrix.

Pipeline: train defended baseline nets and RBM classifiers, craft 1:1
adversarial datasets per attack, evaluate every (attack, defence) cell,
and report an accuracy matrix with per-cell metadata. Baseline cells are
white-box (crafted on the defended net itself); RBM cells are evaluated
in transfer mode (crafted on the undefended surrogate net from the clean
test set) and optionally in direct mode (crafted on the RBM's own
free-energy gradients).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .attacks import AttackResult, AttackSpec, CwConfig, run_attack
from .classifiers import (
    BaselineConfig,
    FreeEnergyClassifier,
    baseline_train,
)
from .data import Dataset, load_dataset
from .defences import DefenceSpec, adversarial_training, apply_defence
from .samplers import AnnealerConfig, SamplerSpec
from .trainer import TrainConfig, train

_DEFENCE_NAMES = {
    "adversarial_training": "adv_training",
    "feature_squeezing": "feat_squeezing",
    "spatial_smoothing": "spatial_smoothing",
    "random_pad": "random_pad",
    "none": "none",
}

CSV_FIELDS = ("attack", "defence", "accuracy", "n", "success_rate",
              "l2_mean", "linf_mean", "mode")


def desk_rbm_config(seed: int = 0) -> TrainConfig:
    """PCD-trained classifier at desk scale (hidden 40, lr 0.01, batch 10, k 50).

    Expressed as a 100-epoch bootstrap with no continuation so that,
    for a fixed seed, the classical model is bit-identical to the
    annealer-backed model's starting point: the benchmark's RBM/QRBM
    comparison then isolates the annealer stage.
    """
    return TrainConfig(epochs=100, batch_size=10, learning_rate=0.01,
                       hidden_units=40, sampler=SamplerSpec("pcd", k=50),
                       bootstrap_epochs=100,
                       bootstrap_sampler=SamplerSpec("pcd", k=50),
                       bootstrap_batch_size=10, seed=seed)


def desk_qrbm_config(seed: int = 0) -> TrainConfig:
    """Annealer-sim backend bootstrapped by 100 classical epochs.

    The simulated device keeps a wide parameter range: trained-model
    Ising fields grow like b/2 + sum(w)/4 (tens, not units), and a
    hardware-like range of 1 clamps them so hard the sampled law no
    longer resembles the model. Range emulation stays available through
    the annealer config for experiments that want the distortion.
    """
    return TrainConfig(
        epochs=110, batch_size=1000, learning_rate=0.01, hidden_units=40,
        sampler=SamplerSpec("annealer_sim", annealer=AnnealerConfig(
            temperature=1.0, param_range=100.0, num_samples=500,
            num_spin_reversals=5, sweeps=10, rungs=50)),
        bootstrap_epochs=100,
        bootstrap_sampler=SamplerSpec("pcd", k=50),
        bootstrap_batch_size=10,
        post_bootstrap_learning_rate=0.001,
        seed=seed,
    )


def _desk_attacks() -> tuple[AttackSpec, ...]:
    return (
        AttackSpec("fgsm", epsilon=1.0, search=True),
        AttackSpec("deepfool"),
        AttackSpec("cw", cw=CwConfig(binary_search_steps=5, max_iterations=200,
                                     initial_c=1.0, lr=0.02)),
    )


def _desk_defences() -> tuple[DefenceSpec, ...]:
    return (
        DefenceSpec("adversarial_training", mix_ratio=0.5),
        DefenceSpec("feature_squeezing", bits=1),
        DefenceSpec("spatial_smoothing", window=3),
    )


@dataclass(frozen=True)
class BenchmarkConfig:
    train_data: str | None = None
    test_data: str | None = None
    variant: str = "7x7"
    train_size: int = 2000
    test_size: int = 500
    seed: int = 0
    eval_mode: str = "transfer"  # transfer | direct | both
    binarized_eval: bool = True
    attacks: tuple[AttackSpec, ...] = field(default_factory=_desk_attacks)
    defences: tuple[DefenceSpec, ...] = field(default_factory=_desk_defences)
    advtrain_attack: AttackSpec = field(default_factory=lambda: AttackSpec("fgsm", epsilon=0.3))  # fixed-eps crafting for the union
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    rbm: TrainConfig = field(default_factory=desk_rbm_config)
    qrbm: TrainConfig | None = field(default_factory=desk_qrbm_config)

    def __post_init__(self):
        if self.variant not in ("28x28", "7x7"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.eval_mode not in ("transfer", "direct", "both"):
            raise ValueError(f"unknown eval mode {self.eval_mode!r}")
        if not self.attacks or not self.defences:
            raise ValueError("attack and defence lists must be nonempty")


@dataclass(frozen=True)
class CellResult:
    attack: str
    defence: str
    accuracy: float
    n: int
    success_rate: float
    l2_mean: float
    linf_mean: float
    mode: str
    error: str = ""


@dataclass
class BenchmarkReport:
    cells: list[CellResult]
    config_digest: str
    meta: dict

    @property
    def complete(self) -> bool:
        return all(not c.error for c in self.cells)

    def cell(self, attack: str, defence: str, mode: str | None = None) -> CellResult:
        hits = [c for c in self.cells
                if c.attack == attack and c.defence == defence
                and (mode is None or c.mode == mode)]
        if not hits:
            raise KeyError(f"no cell ({attack}, {defence}, {mode})")
        return hits[0]

    def to_json(self) -> str:
        return json.dumps({
            "config_digest": self.config_digest,
            "meta": self.meta,
            "cells": [asdict(c) for c in self.cells],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        raw = json.loads(text)
        return cls([CellResult(**c) for c in raw["cells"]],
                   raw["config_digest"], raw["meta"])


def config_digest(cfg: BenchmarkConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _craft(spec: AttackSpec, clf, ds: Dataset) -> list[AttackResult]:
    return [run_attack(spec, clf, ds.image(i), int(ds.labels[i]))
            for i in range(len(ds))]


def _binarize(pixels: np.ndarray) -> np.ndarray:
    return (pixels > 0.5).astype(np.float64)


def _evaluate(results: list[AttackResult], model, ds: Dataset,
              attack: str, defence: str, mode: str,
              binarized: bool = False) -> CellResult:
    adv = np.stack([r.adversarial.pixels for r in results])
    if binarized:
        adv = _binarize(adv)
    preds = np.argmax(model.logits_batch(adv), axis=1)
    return CellResult(
        attack=attack,
        defence=defence,
        accuracy=float(np.mean(preds == ds.labels)),
        n=len(results),
        success_rate=float(np.mean([r.success for r in results])),
        l2_mean=float(np.mean([r.l2 for r in results])),
        linf_mean=float(np.mean([r.linf for r in results])),
        mode=mode + ("+binarized" if binarized else ""),
    )


def _failed_cell(attack: str, defence: str, mode: str, n: int, err: Exception) -> CellResult:
    return CellResult(attack, defence, float("nan"), n, float("nan"),
                      float("nan"), float("nan"), mode,
                      error=f"{type(err).__name__}: {err}")


def run_matrix(cfg: BenchmarkConfig, train_ds: Dataset | None = None,
               test_ds: Dataset | None = None, log=None) -> BenchmarkReport:
    """Execute the full pipeline deterministically from the master seed.

    Cell accuracy is the fraction of attacked test images the defended
    model still classifies correctly; a clean (no-perturbation) row is
    always included so robustness is read against its utility baseline.
    Stage failures mark the affected cells and leave the rest standing.
    """
    say = log if log is not None else (lambda msg: None)
    t_start = time.perf_counter()
    if train_ds is None:
        train_ds = load_dataset(cfg.train_data)
    if test_ds is None:
        test_ds = load_dataset(cfg.test_data)
    if cfg.train_size > len(train_ds) or cfg.test_size > len(test_ds):
        raise ValueError("subset sizes exceed the provided datasets")
    train_sub = train_ds.subset(np.arange(cfg.train_size))
    test_sub = test_ds.subset(np.arange(cfg.test_size))

    ss = np.random.SeedSequence(cfg.seed)
    rng_surrogate, rng_rbm, rng_qrbm, *rng_defences = ss.spawn(3 + len(cfg.defences))

    say(f"[bench] surrogate net on {len(train_sub)} clean examples")
    surrogate = baseline_train(cfg.baseline, train_sub,
                               np.random.default_rng(rng_surrogate), eval_ds=test_sub)

    defended: dict[str, tuple] = {}  # name -> (net | None, defended test, error)
    for spec, child in zip(cfg.defences, rng_defences):
        name = _DEFENCE_NAMES[spec.kind]
        rng = np.random.default_rng(child)
        try:
            say(f"[bench] training defended baseline: {name}")
            if spec.kind == "adversarial_training":
                net = adversarial_training(train_sub, cfg.advtrain_attack,
                                           cfg.baseline, spec.mix_ratio, rng,
                                           eval_ds=test_sub, online=spec.online)
                dtest = test_sub
            else:
                dtrain = apply_defence(train_sub, spec, rng)
                dtest = apply_defence(test_sub, spec, rng)
                net = baseline_train(cfg.baseline, dtrain, rng, eval_ds=dtest)
            defended[name] = (net, dtest, None)
        except Exception as err:  # cell-level failure isolation
            defended[name] = (None, test_sub, err)

    say(f"[bench] RBM classifier ({cfg.rbm.sampler.backend} backend)")
    rbm_models: dict[str, tuple] = {}
    try:
        model, hist = train(cfg.rbm, train_sub, np.random.default_rng(rng_rbm))
        rbm_models["rbm"] = (FreeEnergyClassifier(model, train_sub.num_classes), None)
    except Exception as err:
        rbm_models["rbm"] = (None, err)
    if cfg.qrbm is not None:
        say(f"[bench] RBM classifier ({cfg.qrbm.sampler.backend} backend, "
            f"{cfg.qrbm.bootstrap_epochs} bootstrap epochs)")
        try:
            qmodel, qhist = train(cfg.qrbm, train_sub, np.random.default_rng(rng_qrbm))
            rbm_models["qrbm"] = (FreeEnergyClassifier(qmodel, train_sub.num_classes), None)
        except Exception as err:
            rbm_models["qrbm"] = (None, err)

    attacks = [AttackSpec("clean")] + [a for a in cfg.attacks if a.kind != "clean"]
    want_binarized = cfg.binarized_eval and cfg.variant == "7x7"
    cells: list[CellResult] = []

    for aspec in attacks:
        say(f"[bench] attack row: {aspec.kind}")
        for name, (net, dtest, err) in defended.items():
            if err is not None:
                cells.append(_failed_cell(aspec.kind, name, "whitebox", len(test_sub), err))
                continue
            try:
                results = _craft(aspec, net, dtest)
                cells.append(_evaluate(results, net, dtest, aspec.kind, name, "whitebox"))
                if want_binarized:
                    cells.append(_evaluate(results, net, dtest, aspec.kind, name,
                                           "whitebox", binarized=True))
            except Exception as exc:
                cells.append(_failed_cell(aspec.kind, name, "whitebox", len(dtest), exc))

        transfer_results = None
        if cfg.eval_mode in ("transfer", "both"):
            try:
                transfer_results = _craft(aspec, surrogate, test_sub)
            except Exception as exc:
                transfer_results = exc
        for name, (fe, err) in rbm_models.items():
            if err is not None:
                for mode in (["transfer"] if cfg.eval_mode != "direct" else []) + (
                        ["direct"] if cfg.eval_mode in ("direct", "both") else []):
                    cells.append(_failed_cell(aspec.kind, name, mode, len(test_sub), err))
                continue
            if cfg.eval_mode in ("transfer", "both"):
                if isinstance(transfer_results, Exception):
                    cells.append(_failed_cell(aspec.kind, name, "transfer",
                                              len(test_sub), transfer_results))
                else:
                    cells.append(_evaluate(transfer_results, fe, test_sub,
                                           aspec.kind, name, "transfer"))
                    if want_binarized:
                        cells.append(_evaluate(transfer_results, fe, test_sub,
                                               aspec.kind, name, "transfer",
                                               binarized=True))
            if cfg.eval_mode in ("direct", "both"):
                try:
                    direct_results = _craft(aspec, fe, test_sub)
                    cells.append(_evaluate(direct_results, fe, test_sub,
                                           aspec.kind, name, "direct"))
                    if want_binarized:
                        cells.append(_evaluate(direct_results, fe, test_sub,
                                               aspec.kind, name, "direct",
                                               binarized=True))
                except Exception as exc:
                    cells.append(_failed_cell(aspec.kind, name, "direct",
                                              len(test_sub), exc))

    meta = {
        "version": __version__,
        "variant": cfg.variant,
        "train_size": cfg.train_size,
        "test_size": cfg.test_size,
        "eval_mode": cfg.eval_mode,
        "seed": cfg.seed,
        "wall_time_s": round(time.perf_counter() - t_start, 2),
        "surrogate_clean_accuracy": surrogate.eval_accuracy,
    }
    return BenchmarkReport(cells, config_digest(cfg), meta)


# ---------------------------------------------------------------------------
# Report output


def _csv_text(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_FIELDS)
    for c in report.cells:
        writer.writerow([c.attack, c.defence, repr(c.accuracy), c.n,
                         repr(c.success_rate), repr(c.l2_mean),
                         repr(c.linf_mean), c.mode])
    return buf.getvalue()


def _markdown_text(report: BenchmarkReport) -> str:
    modes = sorted({c.mode for c in report.cells})
    lines = [f"# Robustness matrix (digest {report.config_digest})", ""]
    for mode_tag in ("", "+binarized"):
        block_modes = [m for m in modes if m.endswith("+binarized") == bool(mode_tag)]
        if not block_modes:
            continue
        sub = [c for c in report.cells if c.mode in block_modes]
        attacks, defences = [], []
        for c in sub:
            if c.attack not in attacks:
                attacks.append(c.attack)
            if c.defence not in defences:
                defences.append(c.defence)
        lines.append(f"## {'Re-binarized inputs' if mode_tag else 'Continuous inputs'}")
        lines.append("| attack | " + " | ".join(defences) + " |")
        lines.append("|" + "---|" * (len(defences) + 1))
        for a in attacks:
            row = [a]
            for d in defences:
                hit = [c for c in sub if c.attack == a and c.defence == d]
                row.append("failed" if hit and hit[0].error
                           else f"{hit[0].accuracy * 100.0:.2f}%" if hit else "-")
            lines.append("| " + " | ".join(row) + " |")
        lines.append("")
    return "\n".join(lines)


def emit_report(report: BenchmarkReport, fmt: str, path) -> None:
    """Write the report as csv, json, or markdown."""
    if fmt == "csv":
        text = _csv_text(report)
    elif fmt == "json":
        text = report.to_json()
    elif fmt == "markdown":
        text = _markdown_text(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w") as f:
        f.write(text)


def report_from_csv(text: str) -> list[CellResult]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows and rows[0] == list(CSV_FIELDS):
        rows = rows[1:]
    return [CellResult(attack=a, defence=d, accuracy=float(acc), n=int(n),
                       success_rate=float(sr), l2_mean=float(l2),
                       linf_mean=float(li), mode=mode)
            for a, d, acc, n, sr, l2, li, mode in rows]
