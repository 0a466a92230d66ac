"""Negative-phase estimation backends.

Four interchangeable strategies: CD-k chains seeded at data, persistent
chains (PCD), exact enumeration on tiny models, and a classical
annealer-style sampler that works in the +/-1 spin picture with
parameter scaling, clipping, and spin-reversal gauges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rbm import (
    ENUMERATION_LIMIT,
    Moments,
    GradientEstimate,
    Rbm,
    all_binary_vectors,
    data_moments,
    sigmoid,
)

BACKENDS = ("cd", "pcd", "exact", "annealer_sim")


def _bernoulli(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(p.shape) < p).astype(np.float64)


def gibbs_step(m: Rbm, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One block Gibbs update: h ~ p(h|x), then x' ~ p(x|h)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    h = _bernoulli(m.hidden_conditional(x2), rng)
    x_new = _bernoulli(m.visible_conditional(h), rng)
    return x_new[0] if squeeze else x_new


def cd_negative_moments(m: Rbm, batch: np.ndarray, k: int,
                        rng: np.random.Generator) -> Moments:
    """Negative statistics from k-step chains initialized at the batch."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    x = batch
    for _ in range(k):
        x = gibbs_step(m, x, rng)
    ph = m.hidden_conditional(x)
    n = x.shape[0]
    return Moments(x.mean(axis=0), ph.mean(axis=0), x.T @ ph / n, n)


def cd_k(m: Rbm, batch: np.ndarray, k: int, rng: np.random.Generator) -> GradientEstimate:
    """Contrastive divergence statistics.

    Positive phase uses mean-field hidden probabilities on the batch;
    negative phase averages over the k-step chain endpoints.
    """
    pos = data_moments(m, batch)
    neg = cd_negative_moments(m, batch, k, rng)
    return GradientEstimate.from_moments(pos, neg)


@dataclass
class ChainState:
    """Persistent chain endpoints plus the generator that advances them."""

    visible: np.ndarray  # (n_chains, V) binary
    rng: np.random.Generator

    def __post_init__(self):
        self.visible = np.atleast_2d(np.asarray(self.visible, dtype=np.float64))
        vals = np.unique(self.visible)
        if vals.size and not np.isin(vals, (0.0, 1.0)).all():
            raise ValueError("chain states must be binary")

    @property
    def n_chains(self) -> int:
        return self.visible.shape[0]


def pcd_step(m: Rbm, state: ChainState, k: int) -> tuple[Moments, ChainState]:
    """Advance persistent chains k Gibbs steps and read off negative stats."""
    if state is None or state.visible.size == 0:
        raise ValueError("persistent chains not initialized")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if state.visible.shape[1] != m.num_visible:
        raise ValueError(
            f"chain dim {state.visible.shape[1]} != model visible dim {m.num_visible}"
        )
    x = state.visible
    for _ in range(k):
        x = gibbs_step(m, x, state.rng)
    ph = m.hidden_conditional(x)
    n = x.shape[0]
    neg = Moments(x.mean(axis=0), ph.mean(axis=0), x.T @ ph / n, n)
    return neg, ChainState(x, state.rng)


def exact_model_moments(m: Rbm) -> Moments:
    """Exact Boltzmann moments via visible enumeration.

    Hidden units are summed out analytically, so cost is 2^V, not 2^(V+H).
    """
    if m.num_visible > ENUMERATION_LIMIT:
        raise ValueError(f"exact moments capped at V <= {ENUMERATION_LIMIT}")
    xs = all_binary_vectors(m.num_visible)
    neg_f = -m.free_energy(xs)
    neg_f -= neg_f.max()
    p = np.exp(neg_f)
    p /= p.sum()
    ph = m.hidden_conditional(xs)
    return Moments(p @ xs, p @ ph, xs.T @ (ph * p[:, None]), n=xs.shape[0])


# ---------------------------------------------------------------------------
# Spin picture


@dataclass(frozen=True)
class IsingModel:
    """Fields/couplings over +/-1 spins; visible-role spins come first.

    The binary <-> spin change of variables x = (1+s)/2 makes
    E_binary(x, h) = H(s) + offset with H(s) = h_fields.s + sum J_ij s_i s_j.
    """

    h_fields: np.ndarray
    couplings: dict[tuple[int, int], float]
    offset: float
    num_visible: int

    def __post_init__(self):
        object.__setattr__(self, "h_fields",
                           np.asarray(self.h_fields, dtype=np.float64))
        n = self.h_fields.size
        normed = {}
        for (i, j), val in self.couplings.items():
            if i == j:
                raise ValueError(f"self-coupling on spin {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"coupling ({i},{j}) outside {n} spins")
            normed[(min(i, j), max(i, j))] = float(val)
        object.__setattr__(self, "couplings", normed)
        if not 0 <= self.num_visible <= n:
            raise ValueError(f"num_visible {self.num_visible} outside [0, {n}]")

    @property
    def num_spins(self) -> int:
        return self.h_fields.size

    def energy(self, spins: np.ndarray) -> np.ndarray:
        """H(s) = h.s + sum_ij J_ij s_i s_j (offset not included)."""
        spins = np.atleast_2d(np.asarray(spins, dtype=np.float64))
        e = spins @ self.h_fields
        for (i, j), val in self.couplings.items():
            e += val * spins[:, i] * spins[:, j]
        return e if e.size > 1 else e[0]

    def is_bipartite(self) -> bool:
        v = self.num_visible
        return all((i < v) != (j < v) for i, j in self.couplings)

    def coupling_matrix(self) -> np.ndarray:
        """Dense visible-by-hidden coupling block (requires bipartite map)."""
        v, n = self.num_visible, self.num_spins
        jm = np.zeros((v, n - v))
        for (i, j), val in self.couplings.items():
            jm[i, j - v] = val
        return jm


def to_ising(m: Rbm) -> IsingModel:
    """Exact change of variables x_i = (1+s_i)/2 from binary units to spins."""
    v, h = m.num_visible, m.num_hidden
    h_vis = -(m.b / 2.0 + m.w.sum(axis=1) / 4.0)
    h_hid = -(m.c / 2.0 + m.w.sum(axis=0) / 4.0)
    couplings = {
        (i, v + j): -m.w[i, j] / 4.0
        for i in range(v) for j in range(h)
        if m.w[i, j] != 0.0
    }
    offset = -(m.b.sum() + m.c.sum()) / 2.0 - m.w.sum() / 4.0
    return IsingModel(np.concatenate([h_vis, h_hid]), couplings, float(offset), v)


def from_ising(im: IsingModel) -> Rbm:
    """Invert to_ising; rejects coupling maps that are not bipartite."""
    if not im.is_bipartite():
        raise ValueError("coupling map is not bipartite over visible/hidden roles")
    v = im.num_visible
    w = -4.0 * im.coupling_matrix()
    b = -2.0 * im.h_fields[:v] - w.sum(axis=1) / 2.0
    c = -2.0 * im.h_fields[v:] - w.sum(axis=0) / 2.0
    return Rbm(w, b, c)


def spin_reversal_transform(im: IsingModel, flip_mask: np.ndarray) -> IsingModel:
    """Gauge transform: flip chosen spins and compensate field/coupling signs.

    The Boltzmann distribution, pulled back through the flip, is unchanged.
    """
    mask = np.asarray(flip_mask).astype(bool)
    if mask.shape != (im.num_spins,):
        raise ValueError(f"mask length {mask.size} != {im.num_spins} spins")
    sign = np.where(mask, -1.0, 1.0)
    new_h = im.h_fields * sign
    new_j = {
        (i, j): (-val if mask[i] ^ mask[j] else val)
        for (i, j), val in im.couplings.items()
    }
    return IsingModel(new_h, new_j, im.offset, im.num_visible)


def scale_ising(im: IsingModel, factor: float) -> IsingModel:
    new_j = {k: v * factor for k, v in im.couplings.items()}
    return IsingModel(im.h_fields * factor, new_j, im.offset * factor, im.num_visible)


def ising_boltzmann_distribution(im: IsingModel, temperature: float = 1.0
                                 ) -> tuple[np.ndarray, np.ndarray]:
    """Exact Boltzmann law p(s) over all 2^N spin configurations.

    Enumeration-only test oracle; returns (configs as +/-1 rows, probs).
    """
    n = im.num_spins
    if n > 16:
        raise ValueError(f"refusing to enumerate 2^{n} spin configurations")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    spins = 2.0 * all_binary_vectors(n) - 1.0
    e = np.atleast_1d(im.energy(spins)) / temperature
    e -= e.min()
    p = np.exp(-e)
    p /= p.sum()
    return spins, p


# ---------------------------------------------------------------------------
# Annealer-style sampling


@dataclass(frozen=True)
class AnnealerConfig:
    """Knobs of the simulated annealing-style backend.

    `temperature` is the effective temperature the device-side model is
    rescaled for; `param_range` mimics hardware coupling bounds.
    """

    temperature: float = 1.0
    param_range: float = 1.0
    num_samples: int = 500
    num_spin_reversals: int = 5
    sweeps: int = 2
    rungs: int = 20
    t_hot: float = 10.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.param_range <= 0:
            raise ValueError("param_range must be positive")
        if self.num_samples < 1 or self.num_spin_reversals < 1:
            raise ValueError("num_samples and num_spin_reversals must be >= 1")
        if self.sweeps < 1 or self.rungs < 1:
            raise ValueError("sweeps and rungs must be >= 1")
        if self.t_hot < 1.0:
            raise ValueError("t_hot must be >= 1 (the ladder ends at 1)")


@dataclass(frozen=True)
class AnnealerResult:
    samples: np.ndarray        # (num_samples, V) binary visible configurations
    moments: Moments
    realized_scale: float
    max_clip_change: float     # largest relative parameter change from clipping
    warning: str | None = None


def _anneal_block(h_vis, h_hid, jm, n_chains, cfg, rng):
    """Run one gauge's chains down the temperature ladder; returns spins."""
    s_vis = rng.choice((-1.0, 1.0), size=(n_chains, h_vis.size))
    s_hid = rng.choice((-1.0, 1.0), size=(n_chains, h_hid.size))
    for temp in np.geomspace(cfg.t_hot, 1.0, cfg.rungs):
        for _ in range(cfg.sweeps):
            p_vis = sigmoid(-2.0 * (h_vis + s_hid @ jm.T) / temp)
            s_vis = np.where(rng.random(p_vis.shape) < p_vis, 1.0, -1.0)
            p_hid = sigmoid(-2.0 * (h_hid + s_vis @ jm) / temp)
            s_hid = np.where(rng.random(p_hid.shape) < p_hid, 1.0, -1.0)
    return s_vis, s_hid


def annealer_sample(m: Rbm, cfg: AnnealerConfig,
                    rng: np.random.Generator) -> AnnealerResult:
    """Draw joint samples annealer-style and estimate model moments.

    The model is converted to the spin picture, rescaled by 1/temperature,
    clipped into [-param_range, param_range], and sampled through a
    geometric temperature ladder (t_hot down to 1) with block-Gibbs
    sweeps, independently under each spin-reversal gauge. Samples are
    un-gauged, mapped back to binary, and pooled.

    Clipping that moves any parameter by more than 50% relative is not an
    error, but it means the sampled distribution is no longer the model's;
    the result carries a warning recording that.
    """
    im = to_ising(m)
    scale = 1.0 / cfg.temperature
    scaled = scale_ising(im, scale)
    r = cfg.param_range
    clipped_h = np.clip(scaled.h_fields, -r, r)
    clipped_j = {k: float(np.clip(v, -r, r)) for k, v in scaled.couplings.items()}

    changes = []
    for orig, new in zip(scaled.h_fields, clipped_h):
        if orig != 0.0:
            changes.append(abs(new - orig) / abs(orig))
    for key, orig in scaled.couplings.items():
        if orig != 0.0:
            changes.append(abs(clipped_j[key] - orig) / abs(orig))
    max_clip = max(changes, default=0.0)
    warning = None
    if max_clip > 0.5:
        warning = (
            f"clipping changed a parameter by {max_clip:.1%}; samples no longer "
            "follow the model distribution (temperature/range mismatch)"
        )

    device = IsingModel(clipped_h, clipped_j, scaled.offset, im.num_visible)
    v = im.num_visible
    counts = [len(part) for part in
              np.array_split(np.arange(cfg.num_samples), cfg.num_spin_reversals)]

    vis_parts, hid_parts = [], []
    for n_g in counts:
        if n_g == 0:
            continue
        mask = rng.integers(0, 2, size=device.num_spins).astype(bool)
        gauged = spin_reversal_transform(device, mask)
        s_vis, s_hid = _anneal_block(
            gauged.h_fields[:v], gauged.h_fields[v:], gauged.coupling_matrix(),
            n_g, cfg, rng,
        )
        sign = np.where(mask, -1.0, 1.0)
        vis_parts.append(s_vis * sign[:v])
        hid_parts.append(s_hid * sign[v:])

    x = (1.0 + np.concatenate(vis_parts)) / 2.0
    hb = (1.0 + np.concatenate(hid_parts)) / 2.0
    n = x.shape[0]
    moments = Moments(x.mean(axis=0), hb.mean(axis=0), x.T @ hb / n, n)
    return AnnealerResult(x, moments, scale, max_clip, warning)


# ---------------------------------------------------------------------------
# Backend selection


@dataclass(frozen=True)
class SamplerSpec:
    """Strategy descriptor for negative-phase estimation."""

    backend: str = "pcd"
    k: int = 50
    annealer: AnnealerConfig = field(default_factory=AnnealerConfig)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}, expected {BACKENDS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


class _CdBackend:
    label = "cd"

    def __init__(self, spec: SamplerSpec, rng: np.random.Generator):
        self.k = spec.k
        self.rng = rng

    def moments(self, m: Rbm, batch: np.ndarray) -> Moments:
        return cd_negative_moments(m, batch, self.k, self.rng)


class _PcdBackend:
    label = "pcd"

    def __init__(self, spec: SamplerSpec, rng: np.random.Generator):
        self.k = spec.k
        self.rng = rng
        self.state: ChainState | None = None

    def moments(self, m: Rbm, batch: np.ndarray) -> Moments:
        if self.state is None:
            # first call seeds the persistent chains from the data batch;
            # Bernoulli draw binarizes grayscale rows and is a no-op on binary ones
            seed = np.atleast_2d(np.asarray(batch, dtype=np.float64))
            self.state = ChainState(_bernoulli(seed, self.rng), self.rng)
        neg, self.state = pcd_step(m, self.state, self.k)
        return neg


class _ExactBackend:
    label = "exact"

    def __init__(self, spec: SamplerSpec, rng: np.random.Generator):
        pass

    def moments(self, m: Rbm, batch: np.ndarray) -> Moments:
        return exact_model_moments(m)


class _AnnealerBackend:
    label = "annealer_sim"

    def __init__(self, spec: SamplerSpec, rng: np.random.Generator):
        self.cfg = spec.annealer
        self.rng = rng
        self.last_result: AnnealerResult | None = None

    def moments(self, m: Rbm, batch: np.ndarray) -> Moments:
        self.last_result = annealer_sample(m, self.cfg, self.rng)
        return self.last_result.moments


_BACKEND_CLASSES = {
    "cd": _CdBackend,
    "pcd": _PcdBackend,
    "exact": _ExactBackend,
    "annealer_sim": _AnnealerBackend,
}


def make_negative_sampler(spec: SamplerSpec, rng: np.random.Generator):
    """Instantiate the negative-phase backend named by the spec."""
    return _BACKEND_CLASSES[spec.backend](spec, rng)
