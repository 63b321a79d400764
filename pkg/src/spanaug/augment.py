"""Spectral augmentation schemes: projected gradient optimization of edge-flip probabilities."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .graph import Graph, complement_direction, flip_edges, normalized_laplacian_matrix
from .spectral import (
    DegenerateSpectrumWarning,
    NoiseSpec,
    SpectralSelection,
    _min_gap,
    decompose,
    laplacian_chain,
    perturbed_adjacency,
)

log = logging.getLogger(__name__)

MODES = ("single", "double", "opposite")
INITS = ("zero_plus_jitter", "uniform_budget")


def project_to_S(raw: np.ndarray, epsilon: float, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Euclidean projection onto {s ∈ [0,1]^{n×n} : ‖s‖₁ ≤ ε}, symmetric with zero diagonal.

    Works on the upper triangle and mirrors it; the L1 budget counts both
    triangles.
    """
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.shape[0]
    iu = np.triu_indices(n, 1)
    upper = kernels.project_upper(np.ascontiguousarray(raw[iu]), float(epsilon), tol, max_iter)
    out = np.zeros((n, n))
    out[iu] = upper
    return out + out.T


def check_probability_matrix(delta: np.ndarray, epsilon: float, atol: float = 1e-8) -> None:
    if not np.array_equal(delta, delta.T):
        raise ValueError("probability matrix is not exactly symmetric")
    if np.any(np.diag(delta) != 0):
        raise ValueError("probability matrix has a nonzero diagonal")
    if delta.size and (delta.min() < 0 or delta.max() > 1):
        raise ValueError("probability matrix entries outside [0, 1]")
    if delta.sum() > epsilon + atol:
        raise ValueError(f"L1 norm {delta.sum():.6g} exceeds budget {epsilon:.6g}")


def pgd_step(delta: np.ndarray, grad: np.ndarray, lr: float, direction: str, epsilon: float,
             mask: np.ndarray | None = None) -> np.ndarray:
    """P_S[Δ ± η·grad]: ``ascent`` adds the gradient, ``descent`` subtracts it."""
    if direction not in ("ascent", "descent"):
        raise ValueError(f"direction must be 'ascent' or 'descent', got {direction!r}")
    sign = 1.0 if direction == "ascent" else -1.0
    raw = delta + sign * lr * grad
    if mask is not None:
        raw = raw * mask
    return project_to_S(raw, epsilon)


@dataclass
class SchemeConfig:
    mode: str = "opposite"
    epsilon: float = 1.0
    steps: int = 50
    lr: float = 1.0
    selection: SpectralSelection | None = None
    noise_eps: float = 1e-6
    noise_seed: int = 0
    init: str = "zero_plus_jitter"
    init_seed: int = 0
    removal_only: bool = False
    normalize_grad: bool = True
    swap_directions: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["selection"] = None if self.selection is None else self.selection.k
        return d


@dataclass
class AugmentationScheme:
    delta1: np.ndarray
    delta2: np.ndarray | None
    trajectory: list[dict]
    config: SchemeConfig
    lgs0: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.delta1.shape[0]

    def to_json(self) -> str:
        def triplets(d):
            if d is None:
                return None
            i, j = np.nonzero(np.triu(d, 1) > 1e-12)
            return [[int(a), int(b), float(d[a, b])] for a, b in zip(i, j)]

        payload = {
            "n": self.n,
            "epsilon": self.config.epsilon,
            "mode": self.config.mode,
            "seeds": {"noise": self.config.noise_seed, "init": self.config.init_seed},
            "config": self.config.to_dict(),
            "lgs0": self.lgs0,
            "delta1": triplets(self.delta1),
            "delta2": triplets(self.delta2),
            "trajectory": self.trajectory,
            "meta": self.meta,
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> AugmentationScheme:
        data = json.loads(text)
        n = data["n"]

        def dense(trip):
            if trip is None:
                return None
            d = np.zeros((n, n))
            for i, j, p in trip:
                d[i, j] = d[j, i] = p
            return d

        cfg = dict(data["config"])
        sel = cfg.pop("selection")
        cfg["selection"] = None if sel is None else SpectralSelection(sel)
        return cls(dense(data["delta1"]), dense(data["delta2"]), data["trajectory"],
                   SchemeConfig(**cfg), data["lgs0"], data.get("meta", {}))


def zero_scheme(n: int, epsilon: float = 0.0) -> AugmentationScheme:
    """Scheme whose views are always the input graph."""
    z = np.zeros((n, n))
    return AugmentationScheme(z, z.copy(), [], SchemeConfig(epsilon=epsilon, steps=1), 0.0, {"kind": "zero"})


class _Objective:
    """Spectrum of Lap(A + C∘Δ + noise) and its pullback, with one frozen noise draw."""

    def __init__(self, g: Graph, cfg: SchemeConfig):
        self.a = g.adjacency
        self.c = complement_direction(g)
        self.noise = NoiseSpec(cfg.noise_eps, cfg.noise_seed).matrix(g.n)
        self.sel = cfg.selection
        self.seed = cfg.noise_seed
        self.degenerate_hits = 0

    def spectrum(self, delta):
        a_prime = perturbed_adjacency(self.a, self.c, delta, self.noise)
        es = decompose(normalized_laplacian_matrix(a_prime), self.sel, seed=self.seed)
        if _min_gap(es.values) < 1e-10:
            self.degenerate_hits += 1
            warnings.warn("selected eigenvalues nearly repeated; gradient is not unique",
                          DegenerateSpectrumWarning, stacklevel=3)
        return a_prime, es

    def pullback(self, a_prime, es, weights):
        return laplacian_chain(a_prime, self.c, es.vectors, weights)


def _init_delta(g: Graph, cfg: SchemeConfig, seed: int, mask) -> np.ndarray:
    n = g.n
    if cfg.init == "uniform_budget":
        slots = mask.sum() if mask is not None else n * (n - 1)
        p = min(1.0, cfg.epsilon / slots) if slots else 0.0
        d = np.full((n, n), p)
        np.fill_diagonal(d, 0.0)
    else:
        hi = min(0.01, cfg.epsilon / n ** 2) if n else 0.0
        d = np.triu(np.random.default_rng(seed).uniform(0.0, hi, (n, n)), 1)
        d = d + d.T
    if mask is not None:
        d = d * mask
    return project_to_S(d, cfg.epsilon)


def _direction_grad(grad, cfg):
    if not cfg.normalize_grad:
        return grad
    norm = np.linalg.norm(grad)
    return grad / norm if norm > 0 else grad


def optimize_scheme(g: Graph, cfg: SchemeConfig) -> AugmentationScheme:
    """Optimize Δ₁ (and Δ₂) by projected gradient steps under budget ``cfg.epsilon``.

    single:   ascend ‖eig(Lap(A + C∘Δ₁)) − eig(Lap(A))‖², spectra paired by sorted index.
    double:   ascend ‖eig(Lap(A + C∘Δ₁)) − eig(Lap(A + C∘Δ₂))‖², one step on each per iteration.
    opposite: ascend L_GS for Δ₁ and descend it for Δ₂, run independently.
    """
    obj = _Objective(g, cfg)
    mask = None
    if cfg.removal_only:
        mask = (g.adjacency == 1).astype(float)
    _, es0 = obj.spectrum(np.zeros((g.n, g.n)))
    lam0 = es0.values
    lgs0 = float(np.sum(lam0 ** 2))
    # init seeds follow the step direction, so swapping directions swaps branches exactly
    seed_up, seed_down = cfg.init_seed, cfg.init_seed + 1

    def lgs(es):
        return float(np.sum(es.values ** 2))

    def record(t, es1, es2, objective):
        l1 = lgs(es1)
        l2 = lgs(es2) if es2 is not None else lgs0
        return {"step": t, "lgs1": l1, "lgs2": l2, "ratio1": l1 / lgs0, "ratio2": l2 / lgs0,
                "objective": objective}

    traj = []
    if cfg.mode == "single":
        d1 = _init_delta(g, cfg, seed_up, mask)
        ap, es = obj.spectrum(d1)
        for t in range(1, cfg.steps + 1):
            grad = obj.pullback(ap, es, 2.0 * (es.values - lam0))
            d1 = pgd_step(d1, _direction_grad(grad, cfg), cfg.lr, "ascent", cfg.epsilon, mask)
            ap, es = obj.spectrum(d1)
            traj.append(record(t, es, None, float(np.sum((es.values - lam0) ** 2))))
        d2 = None
    elif cfg.mode == "double":
        d1 = _init_delta(g, cfg, seed_up, mask)
        d2 = _init_delta(g, cfg, seed_down, mask)
        ap1, es1 = obj.spectrum(d1)
        ap2, es2 = obj.spectrum(d2)
        for t in range(1, cfg.steps + 1):
            grad1 = obj.pullback(ap1, es1, 2.0 * (es1.values - es2.values))
            d1 = pgd_step(d1, _direction_grad(grad1, cfg), cfg.lr, "ascent", cfg.epsilon, mask)
            ap1, es1 = obj.spectrum(d1)
            grad2 = obj.pullback(ap2, es2, -2.0 * (es1.values - es2.values))
            d2 = pgd_step(d2, _direction_grad(grad2, cfg), cfg.lr, "ascent", cfg.epsilon, mask)
            ap2, es2 = obj.spectrum(d2)
            traj.append(record(t, es1, es2, float(np.sum((es1.values - es2.values) ** 2))))
    else:
        dirs = ("descent", "ascent") if cfg.swap_directions else ("ascent", "descent")
        deltas = []
        branch_es = []
        for direction in dirs:
            d = _init_delta(g, cfg, seed_up if direction == "ascent" else seed_down, mask)
            ap, es = obj.spectrum(d)
            hist = []
            for _ in range(cfg.steps):
                grad = obj.pullback(ap, es, 2.0 * es.values)
                d = pgd_step(d, _direction_grad(grad, cfg), cfg.lr, direction, cfg.epsilon, mask)
                ap, es = obj.spectrum(d)
                hist.append(es)
            deltas.append(d)
            branch_es.append(hist)
        d1, d2 = deltas
        for t in range(cfg.steps):
            traj.append(record(t + 1, branch_es[0][t], branch_es[1][t], lgs(branch_es[0][t])))
    meta = {"degenerate_evaluations": obj.degenerate_hits, "m": g.m}
    return AugmentationScheme(d1, d2, traj, cfg, lgs0, meta)


def sample_view(g: Graph, delta: np.ndarray, seed) -> Graph:
    """One augmented view: flip each slot (i, j) with probability Δ_ij."""
    return flip_edges(g, delta, np.random.default_rng(seed))


class ProbabilitySummary(NamedTuple):
    mean_inter_remove: float
    mean_intra_remove: float
    mean_inter_add: float
    mean_intra_add: float


def inter_intra_probability_summary(g: Graph, delta: np.ndarray, labels) -> ProbabilitySummary:
    """Mean Δ over edge/non-edge slots split by whether endpoints share a cluster (NaN if empty)."""
    labels = np.asarray(labels)
    if len(labels) != g.n:
        raise ValueError("labels must have length n")
    iu = np.triu_indices(g.n, 1)
    p = delta[iu]
    edge = g.adjacency[iu] == 1
    same = labels[iu[0]] == labels[iu[1]]

    def mean(sel):
        return float(p[sel].mean()) if np.any(sel) else float("nan")

    return ProbabilitySummary(mean(edge & ~same), mean(edge & same), mean(~edge & ~same), mean(~edge & same))
