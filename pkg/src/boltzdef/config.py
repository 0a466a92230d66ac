"""Flat key=value config files and the builders that consume them.

Files are plain text: one `key = value` per line, `#` comments. Values
parse as bool/int/float when they look like one, else strings. Nested
names use dotted keys (`sampler.backend`, `annealer_sim.temperature`,
`rbm.epochs`, ...).
"""

from __future__ import annotations

from pathlib import Path

from .attacks import AttackSpec, CwConfig
from .bench import BenchmarkConfig, desk_qrbm_config, desk_rbm_config
from .classifiers import BaselineConfig
from .defences import DefenceSpec
from .samplers import AnnealerConfig, SamplerSpec
from .trainer import TrainConfig

_DEFENCE_ALIASES = {
    "advtrain": "adversarial_training",
    "squeeze": "feature_squeezing",
    "smooth": "spatial_smoothing",
    "randpad": "random_pad",
    "none": "none",
}


def parse_value(raw: str):
    s = raw.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def parse_flat_config(path) -> dict:
    kv = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        kv[key.strip()] = parse_value(raw)
    return kv


def parse_params(pairs: list[str]) -> dict:
    """K=V pairs from the command line."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected K=V, got {pair!r}")
        key, raw = pair.split("=", 1)
        out[key.strip()] = parse_value(raw)
    return out


def _sub(kv: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in kv.items() if k.startswith(prefix)}


def sampler_spec_from_keys(kv: dict) -> SamplerSpec:
    backend = kv.get("sampler.backend", "pcd")
    ann = _sub(kv, "annealer_sim.")
    annealer = AnnealerConfig(
        temperature=ann.get("temperature", 1.0),
        param_range=ann.get("param_range", 1.0),
        num_samples=ann.get("num_samples", 500),
        num_spin_reversals=ann.get("spin_reversals", 5),
        sweeps=ann.get("sweeps", 2),
        rungs=ann.get("rungs", 20),
        t_hot=ann.get("t_hot", 10.0),
    )
    return SamplerSpec(backend=backend, k=kv.get("cd.k", 50), annealer=annealer)


def train_config_from_keys(kv: dict) -> TrainConfig:
    spec = sampler_spec_from_keys(kv)
    boot_kv = dict(kv)
    boot_kv["sampler.backend"] = kv.get("bootstrap.backend", "pcd")
    return TrainConfig(
        epochs=kv.get("epochs", 100),
        batch_size=kv.get("batch_size", 10),
        learning_rate=kv.get("learning_rate", 0.01),
        hidden_units=kv.get("hidden_units", 40),
        sampler=spec,
        bootstrap_epochs=kv.get("bootstrap_epochs", 0),
        bootstrap_sampler=sampler_spec_from_keys(boot_kv),
        bootstrap_batch_size=kv.get("bootstrap_batch_size"),
        post_bootstrap_learning_rate=kv.get("post_bootstrap_learning_rate"),
        seed=kv.get("seed", 0),
        adam_beta1=kv.get("adam_beta1", 0.9),
        adam_beta2=kv.get("adam_beta2", 0.999),
        adam_eps=kv.get("adam_eps", 1e-8),
        weight_std=kv.get("weight_std", 0.01),
        holdout_fraction=kv.get("holdout_fraction", 0.1),
        checkpoint_every=kv.get("checkpoint_every", 0),
    )


def attack_spec_from_params(kind: str, params: dict) -> AttackSpec:
    cw = CwConfig(
        binary_search_steps=params.get("binary_search_steps", 9),
        max_iterations=params.get("max_iterations", 1000),
        initial_c=params.get("initial_c", 1e-3),
        lr=params.get("lr", 0.01),
        confidence=params.get("confidence", 0.0),
    )
    return AttackSpec(
        kind=kind,
        epsilon=params.get("epsilon", 0.3),
        search=params.get("search", False),
        search_steps=params.get("search_steps", 100),
        max_iter=params.get("max_iter", 50),
        overshoot=params.get("overshoot", 0.02),
        cw=cw,
    )


def defence_spec_from_params(kind: str, params: dict) -> DefenceSpec:
    canonical = _DEFENCE_ALIASES.get(kind, kind)
    return DefenceSpec(
        kind=canonical,
        bits=params.get("bits", 4),
        window=params.get("window", 3),
        mix_ratio=params.get("mix", params.get("mix_ratio", 0.5)),
        online=params.get("online", False),
        max_shift=params.get("max_shift", 2),
    )


def baseline_config_from_keys(kv: dict, variant: str) -> BaselineConfig:
    default_hidden = "256" if variant == "28x28" else "64"
    hidden = tuple(int(h) for h in str(kv.get("baseline.hidden", default_hidden)).split(",") if h)
    return BaselineConfig(
        hidden=hidden,
        epochs=kv.get("baseline.epochs", 60),
        batch_size=kv.get("baseline.batch_size", 32),
        learning_rate=kv.get("baseline.learning_rate", 0.3),
        seed=kv.get("baseline.seed", 0),
    )


def _attack_from_keys(kind: str, kv: dict) -> AttackSpec:
    return attack_spec_from_params(kind, _sub(kv, f"{kind}."))


def bench_config_from_keys(kv: dict) -> BenchmarkConfig:
    variant = str(kv.get("variant", "7x7"))
    seed = kv.get("seed", 0)

    attack_names = [a.strip() for a in str(kv.get("attacks", "fgsm,deepfool,cw")).split(",") if a.strip()]
    attacks = tuple(_attack_from_keys(name, kv) for name in attack_names)

    defence_names = [d.strip() for d in str(kv.get("defences", "advtrain,squeeze,smooth")).split(",") if d.strip()]
    default_bits = 4 if variant == "28x28" else 1
    defences = []
    for name in defence_names:
        canonical = _DEFENCE_ALIASES.get(name, name)
        params = _sub(kv, f"{name}.")
        params.setdefault("bits", default_bits)
        defences.append(defence_spec_from_params(canonical, params))

    rbm_kv = _sub(kv, "rbm.")
    rbm_cfg = train_config_from_keys(rbm_kv) if rbm_kv else desk_rbm_config(seed)
    qrbm_cfg = None
    if kv.get("qrbm.enabled", True):
        qrbm_kv = _sub(kv, "qrbm.")
        qrbm_kv.pop("enabled", None)
        qrbm_cfg = train_config_from_keys(_with_qrbm_defaults(qrbm_kv)) if qrbm_kv \
            else desk_qrbm_config(seed)

    return BenchmarkConfig(
        train_data=kv.get("train_data"),
        test_data=kv.get("test_data"),
        variant=variant,
        train_size=kv.get("train_size", 2000),
        test_size=kv.get("test_size", 500),
        seed=seed,
        eval_mode=str(kv.get("mode", "transfer")),
        binarized_eval=kv.get("binarized_eval", True),
        attacks=attacks,
        defences=tuple(defences),
        advtrain_attack=_attack_from_keys(str(kv.get("advtrain.attack", "fgsm")), kv),
        baseline=baseline_config_from_keys(kv, variant),
        rbm=rbm_cfg,
        qrbm=qrbm_cfg,
    )


def _with_qrbm_defaults(kv: dict) -> dict:
    out = dict(kv)
    out.setdefault("sampler.backend", "annealer_sim")
    out.setdefault("epochs", 110)
    out.setdefault("bootstrap_epochs", 100)
    out.setdefault("batch_size", 1000)
    out.setdefault("bootstrap_batch_size", 10)
    return out
