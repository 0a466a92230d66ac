"""White-box attacks against any differentiable classifier.

All three attacks are deterministic given the classifier, operate on the
continuous [0,1] pixel box, and report perturbation norms plus the count
of gradient evaluations spent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import predict
from .data import Image

_ALREADY_ADVERSARIAL = "already adversarial"


@dataclass(frozen=True)
class AttackResult:
    adversarial: Image
    success: bool
    l0: float
    l2: float
    linf: float
    queries: int
    note: str = ""


def _result(clean: Image, adv_pixels: np.ndarray, success: bool, queries: int,
            note: str = "") -> AttackResult:
    adv_pixels = np.clip(adv_pixels, 0.0, 1.0)
    diff = adv_pixels - clean.pixels
    return AttackResult(
        adversarial=Image(adv_pixels, clean.width, clean.height),
        success=success,
        l0=float(np.count_nonzero(diff)),
        l2=float(np.linalg.norm(diff)),
        linf=float(np.max(np.abs(diff))) if diff.size else 0.0,
        queries=queries,
        note=note,
    )


def fgsm(clf, img: Image, label: int, epsilon: float) -> AttackResult:
    """Single-step sign attack: x + eps * sign(d loss / dx), boxed."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    note = _ALREADY_ADVERSARIAL if predict(clf, img) != label else ""
    g = clf.loss_input_gradient(img.pixels, label)
    adv = np.clip(img.pixels + epsilon * np.sign(g), 0.0, 1.0)
    success = predict(clf, adv) != label
    return _result(img, adv, success, queries=1, note=note)


def deepfool(clf, img: Image, label: int, max_iter: int = 50,
             overshoot: float = 0.02) -> AttackResult:
    """Iterative minimal-L2 attack via multiclass linearization.

    Each step projects onto the nearest linearized decision boundary
    (distance |f_k - f_k0| / ||grad f_k - grad f_k0||); the accumulated
    perturbation is applied with a (1+overshoot) factor and the loop
    stops at the first label flip.
    """
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    x0 = img.pixels
    k0 = predict(clf, x0)
    if k0 != label:
        return _result(img, x0.copy(), True, queries=0, note=_ALREADY_ADVERSARIAL)

    classes = clf.num_classes
    r_tot = np.zeros_like(x0)
    queries = 0
    note = ""
    for _ in range(max_iter):
        # the working iterate lives in the box, so the stop condition and
        # the returned example agree even when pixels sit on the box edge
        x = np.clip(x0 + (1.0 + overshoot) * r_tot, 0.0, 1.0)
        logits = clf.logits(x)
        if int(np.argmax(logits)) != k0:
            break
        grad_k0 = clf.logit_input_gradient(x, k0)
        queries += classes
        # movement out of the box is infeasible; restrict each linearized
        # projection to the free directions or the step never crosses
        best_dist, best_dir = np.inf, None
        for k in range(classes):
            if k == k0:
                continue
            wk = clf.logit_input_gradient(x, k) - grad_k0
            blocked = ((x <= 0.0) & (wk < 0.0)) | ((x >= 1.0) & (wk > 0.0))
            wk = np.where(blocked, 0.0, wk)
            norm = np.linalg.norm(wk)
            if norm < 1e-12:
                continue
            fk = logits[k] - logits[k0]
            dist = abs(fk) / norm
            if dist < best_dist:
                best_dist = dist
                best_dir = (abs(fk) / norm**2) * wk
        if best_dir is None:
            note = "zero gradient difference for every class"
            break
        r_tot = r_tot + best_dir

    adv = np.clip(x0 + (1.0 + overshoot) * r_tot, 0.0, 1.0)
    success = predict(clf, adv) != label
    return _result(img, adv, success, queries, note=note)


@dataclass(frozen=True)
class CwConfig:
    binary_search_steps: int = 9
    max_iterations: int = 1000
    initial_c: float = 1e-3
    lr: float = 0.01
    confidence: float = 0.0

    def __post_init__(self):
        if self.binary_search_steps < 1 or self.max_iterations < 1:
            raise ValueError("binary_search_steps and max_iterations must be >= 1")
        if self.initial_c <= 0 or self.lr <= 0 or self.confidence < 0:
            raise ValueError("initial_c, lr must be positive; confidence >= 0")


def carlini_wagner_l2(clf, img: Image, label: int,
                      cfg: CwConfig = CwConfig()) -> AttackResult:
    """L2 optimization attack in tanh space with binary search over c.

    Minimizes ||delta||^2 + c * max(Z_label - max_other + confidence, 0)
    over the tanh-reparameterized pixels; c doubles on failure and
    bisects once a success brackets it. Returns the lowest-L2 success,
    or the largest-c attempt on total failure.
    """
    x0 = img.pixels
    clean_logits = clf.logits(x0)
    others = np.delete(clean_logits, label)
    if int(np.argmax(clean_logits)) != label and (
            others.max() - clean_logits[label] > cfg.confidence):
        return _result(img, x0.copy(), True, queries=0, note=_ALREADY_ADVERSARIAL)

    # shrink strictly inside the box so arctanh is finite
    delta = 1e-6
    w0 = np.arctanh(2.0 * (x0 * (1.0 - 2.0 * delta) + delta) - 1.0)

    queries = 0
    best_adv, best_l2 = None, np.inf
    last_adv = x0.copy()
    lo, hi = 0.0, np.inf
    c = cfg.initial_c
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for _ in range(cfg.binary_search_steps):
        w = w0.copy()
        found = False
        # Adam on w: the tanh map has vanishing gradients at the box
        # corners, so unnormalized steps cannot move saturated pixels
        m_acc = np.zeros_like(w)
        v_acc = np.zeros_like(w)
        for t in range(1, cfg.max_iterations + 1):
            x = (np.tanh(w) + 1.0) / 2.0
            logits = clf.logits(x)
            k_other = int(np.argmax(np.where(np.arange(logits.size) == label,
                                             -np.inf, logits)))
            margin = logits[label] - logits[k_other] + cfg.confidence
            if margin <= 0:
                l2 = float(np.linalg.norm(x - x0))
                if l2 < best_l2:
                    best_l2, best_adv = l2, x.copy()
                found = True
            grad = 2.0 * (x - x0)
            if margin > 0:
                grad += c * (clf.logit_input_gradient(x, label)
                             - clf.logit_input_gradient(x, k_other))
                queries += 2
            grad_w = grad * (1.0 - np.tanh(w) ** 2) / 2.0
            m_acc = beta1 * m_acc + (1 - beta1) * grad_w
            v_acc = beta2 * v_acc + (1 - beta2) * grad_w**2
            m_hat = m_acc / (1 - beta1**t)
            v_hat = v_acc / (1 - beta2**t)
            w = w - cfg.lr * m_hat / (np.sqrt(v_hat) + eps)
        last_adv = (np.tanh(w) + 1.0) / 2.0
        if found:
            hi = c
            c = (lo + hi) / 2.0
        else:
            lo = c
            c = 2.0 * c if not np.isfinite(hi) else (lo + hi) / 2.0

    if best_adv is not None:
        return _result(img, best_adv, True, queries)
    return _result(img, last_adv, predict(clf, last_adv) != label, queries,
                   note="no success at any trade-off coefficient")


def fgsm_minimal(clf, img: Image, label: int, max_epsilon: float = 1.0,
                 steps: int = 100) -> AttackResult:
    """FGSM over an ascending epsilon grid, keeping the first success.

    Mirrors the usual attack-library semantics where the single-step
    attack is swept over epsilons and the smallest flipping perturbation
    is returned; falls back to the max-epsilon attempt on total failure.
    The sign direction is epsilon-independent, so one gradient serves
    the whole sweep.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if predict(clf, img) != label:
        return _result(img, img.pixels.copy(), True, queries=0,
                       note=_ALREADY_ADVERSARIAL)
    direction = np.sign(clf.loss_input_gradient(img.pixels, label))
    adv = img.pixels
    for eps in np.linspace(max_epsilon / steps, max_epsilon, steps):
        adv = np.clip(img.pixels + eps * direction, 0.0, 1.0)
        if predict(clf, adv) != label:
            return _result(img, adv, True, queries=1)
    return _result(img, adv, False, queries=1)


@dataclass(frozen=True)
class AttackSpec:
    """Named attack with its parameters, for the bench and CLI."""

    kind: str  # clean | fgsm | deepfool | cw
    epsilon: float = 0.3
    search: bool = False       # fgsm: minimal-epsilon sweep up to `epsilon`
    search_steps: int = 100
    max_iter: int = 50
    overshoot: float = 0.02
    cw: CwConfig = field(default_factory=CwConfig)

    def __post_init__(self):
        if self.kind not in ("clean", "fgsm", "deepfool", "cw"):
            raise ValueError(f"unknown attack kind {self.kind!r}")


def run_attack(spec: AttackSpec, clf, img: Image, label: int) -> AttackResult:
    if spec.kind == "clean":
        return fgsm(clf, img, label, 0.0)
    if spec.kind == "fgsm":
        if spec.search:
            return fgsm_minimal(clf, img, label, spec.epsilon, spec.search_steps)
        return fgsm(clf, img, label, spec.epsilon)
    if spec.kind == "deepfool":
        return deepfool(clf, img, label, spec.max_iter, spec.overshoot)
    return carlini_wagner_l2(clf, img, label, spec.cw)
