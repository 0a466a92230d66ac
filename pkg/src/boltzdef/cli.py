"""Command-line harness: data preparation, training, evaluation, attacks,
defences, and the full benchmark matrix."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import run_attack
from .bench import config_digest, emit_report, run_matrix
from .classifiers import accuracy, load_classifier
from .config import (
    attack_spec_from_params,
    bench_config_from_keys,
    defence_spec_from_params,
    parse_flat_config,
    parse_params,
    train_config_from_keys,
)
from .data import (
    Dataset,
    downscale_binarize_dataset,
    load_dataset,
    load_idx,
    save_dataset,
)
from .defences import apply_defence
from .rbm import save_rbm
from .trainer import train

DATASET_FILENAME = "dataset.bdds"


def _dataset_path(directory) -> Path:
    return Path(directory) / DATASET_FILENAME


def _load_data_dir(directory) -> Dataset:
    return load_dataset(_dataset_path(directory))


def _write_data_dir(ds: Dataset, directory, meta: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = _dataset_path(directory)
    save_dataset(ds, out)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    return out


def cmd_data_prepare(args) -> int:
    ds = load_idx(args.images, args.labels)
    if args.variant == "7x7":
        ds = downscale_binarize_dataset(ds, args.threshold)
    out = _write_data_dir(ds, args.out, {
        "variant": args.variant,
        "threshold": args.threshold,
        "n": len(ds),
        "source_images": str(args.images),
        "source_labels": str(args.labels),
    })
    print(f"prepared {len(ds)} {ds.width}x{ds.height} images -> {out}")
    return 0


def cmd_train(args) -> int:
    kv = parse_flat_config(args.config) if args.config else {}
    cfg = train_config_from_keys(kv)
    ds = _load_data_dir(args.data)
    ckpt_dir = Path(args.out).parent if cfg.checkpoint_every else None
    model, history = train(cfg, ds, checkpoint_dir=ckpt_dir)
    save_rbm(model, args.out, metadata={
        "num_classes": ds.num_classes,
        "image_dim": ds.width * ds.height,
        "history": history.digest(),
        "config": kv,
    })
    last = history.records[-1] if history.records else None
    print(f"trained {model.num_visible}x{model.num_hidden} model -> {args.out}")
    if last:
        print(f"final epoch {last.epoch}: backend={last.backend} "
              f"recon_err={last.reconstruction_error:.5f} "
              f"fe_gap={last.free_energy_gap:.4f}")
    return 0


def cmd_eval(args) -> int:
    clf = load_classifier(args.model)
    ds = _load_data_dir(args.data)
    acc = accuracy(clf, ds)
    print(f"accuracy: {acc:.4f} ({int(round(acc * len(ds)))}/{len(ds)})")
    return 0


def cmd_attack(args) -> int:
    clf = load_classifier(args.model)
    ds = _load_data_dir(args.data)
    spec = attack_spec_from_params(args.attack, parse_params(args.params))
    adv = np.empty_like(ds.pixels)
    successes = 0
    l2s = []
    for i in range(len(ds)):
        res = run_attack(spec, clf, ds.image(i), int(ds.labels[i]))
        adv[i] = res.adversarial.pixels
        successes += res.success
        l2s.append(res.l2)
    out_ds = Dataset(adv, ds.labels, ds.width, ds.height, ds.num_classes)
    out = _write_data_dir(out_ds, args.out, {
        "attack": args.attack,
        "params": parse_params(args.params),
        "success_rate": successes / len(ds),
        "l2_mean": float(np.mean(l2s)),
        "n": len(ds),
    })
    print(f"{args.attack}: success rate {successes / len(ds):.3f}, "
          f"mean L2 {np.mean(l2s):.4f} -> {out}")
    return 0


def cmd_defend(args) -> int:
    ds = _load_data_dir(args.data)
    spec = defence_spec_from_params(args.defence, parse_params(args.params))
    rng = np.random.default_rng(args.seed)
    out_ds = apply_defence(ds, spec, rng)
    out = _write_data_dir(out_ds, args.out, {
        "defence": spec.kind,
        "params": parse_params(args.params),
        "n": len(out_ds),
    })
    note = " (pass-through)" if spec.kind in ("none", "adversarial_training") else ""
    print(f"{spec.kind}{note} -> {out}")
    return 0


def cmd_bench(args) -> int:
    kv = parse_flat_config(args.config)
    cfg = bench_config_from_keys(kv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_matrix(cfg, log=print)
    emit_report(report, "csv", out_dir / "report.csv")
    emit_report(report, "json", out_dir / "report.json")
    emit_report(report, "markdown", out_dir / "report.md")
    (out_dir / "manifest.json").write_text(json.dumps({
        "version": __version__,
        "config_digest": config_digest(cfg),
        "config_file": str(args.config),
        "keys": kv,
        "complete": report.complete,
        "meta": report.meta,
    }, indent=2))
    print((out_dir / "report.md").read_text())
    if not report.complete:
        failed = [c for c in report.cells if c.error]
        print(f"{len(failed)} cells failed:", file=sys.stderr)
        for c in failed:
            print(f"  {c.attack} x {c.defence} [{c.mode}]: {c.error}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltzdef",
        description="Boltzmann-machine classifiers under adversarial attack",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="dataset preparation")
    data_sub = data.add_subparsers(dest="data_command", required=True)
    prep = data_sub.add_parser("prepare", help="ingest IDX files into a container")
    prep.add_argument("--images", required=True)
    prep.add_argument("--labels", required=True)
    prep.add_argument("--variant", choices=("28x28", "7x7"), default="28x28")
    prep.add_argument("--threshold", type=float, default=0.5)
    prep.add_argument("--out", required=True)
    prep.set_defaults(func=cmd_data_prepare)

    tr = sub.add_parser("train", help="train an RBM classifier")
    tr.add_argument("--config")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="print a model's accuracy on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.set_defaults(func=cmd_eval)

    at = sub.add_parser("attack", help="craft a 1:1 adversarial dataset")
    at.add_argument("--model", required=True)
    at.add_argument("--data", required=True)
    at.add_argument("--attack", choices=("fgsm", "deepfool", "cw"), required=True)
    at.add_argument("--params", nargs="*", default=[])
    at.add_argument("--out", required=True)
    at.set_defaults(func=cmd_attack)

    de = sub.add_parser("defend", help="apply a defence transform to a dataset")
    de.add_argument("--data", required=True)
    de.add_argument("--defence", choices=("advtrain", "squeeze", "smooth", "randpad", "none"),
                    required=True)
    de.add_argument("--params", nargs="*", default=[])
    de.add_argument("--seed", type=int, default=0)
    de.add_argument("--out", required=True)
    de.set_defaults(func=cmd_defend)

    be = sub.add_parser("bench", help="run the attack x defence matrix")
    be.add_argument("--config", required=True)
    be.add_argument("--out", required=True)
    be.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
