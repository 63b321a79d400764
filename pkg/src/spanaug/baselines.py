"""Reference augmentation schemes and the spectral clustering they depend on."""

from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.cluster.vq import kmeans2

from .augment import sample_view
from .graph import Graph, normalized_laplacian
from .spectral import eig_full, spectral_distance

log = logging.getLogger(__name__)


def uniform_scheme(g: Graph, sigma: float) -> np.ndarray:
    """Δ_ij = σ on existing edges, 0 elsewhere."""
    if not 0 <= sigma <= 1:
        raise ValueError("sigma must lie in [0, 1]")
    return sigma * (g.adjacency == 1)


def eigengap_k(g: Graph, max_k: int = 10) -> int:
    lam = np.linalg.eigvalsh(normalized_laplacian(g))[: min(max_k, g.n)]
    if len(lam) < 2:
        return 1
    return max(2, int(np.argmax(np.diff(lam))) + 1)


def spectral_clustering(g: Graph, k: int, seed: int = 0, restarts: int = 20, max_iter: int = 300) -> np.ndarray:
    """Ng-Jordan-Weiss clustering: row-normalized bottom-k eigenvectors, then k-means.

    Returns labels in [0, k), relabelled by first appearance so equal
    partitions give equal arrays.
    """
    if k > g.n:
        raise ValueError(f"k={k} exceeds n={g.n}")
    if k < 1:
        raise ValueError("k must be positive")
    emb = eig_full(normalized_laplacian(g)).vectors[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.where(norms > 1e-12, norms, 1.0)
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    with warnings.catch_warnings():
        # kmeans2 warns when a cluster empties; that restart simply loses
        warnings.simplefilter("ignore", UserWarning)
        for _ in range(restarts):
            centers, labels = kmeans2(emb, k, iter=max_iter, minit="++", seed=rng)
            if len(np.unique(labels)) < k:
                continue
            inertia = np.sum((emb - centers[labels]) ** 2)
            if inertia < best_inertia - 1e-12:
                best, best_inertia = labels, inertia
    if best is None:
        raise RuntimeError("k-means produced an empty cluster on every restart")
    _, first = np.unique(best, return_index=True)
    remap = np.empty(k, dtype=int)
    remap[np.argsort(first)] = np.arange(k)
    return remap[best]


def clustered_rates(m: int, m_inter: int, sigma: float) -> tuple[float, float]:
    """Removal probabilities (σ_inter, σ_intra) that keep σ·m expected removals.

    σ_inter = min(1.2σ, σm/m_inter), σ_intra = (σm − σ_inter·m_inter)/m_intra.
    σ_inter is capped at 1 before σ_intra is derived, so the expected count
    survives large σ; anything still outside [0, 1] is clamped with a warning.
    """
    m_intra = m - m_inter
    if m_inter == 0:
        return sigma, sigma
    s_inter = min(1.2 * sigma, sigma * m / m_inter, 1.0)
    s_intra = (sigma * m - s_inter * m_inter) / m_intra if m_intra else 0.0
    if not 0 <= s_inter <= 1 or not 0 <= s_intra <= 1:
        log.warning("clustered rates out of range (inter=%.4g, intra=%.4g); clamping", s_inter, s_intra)
        s_inter, s_intra = min(max(s_inter, 0.0), 1.0), min(max(s_intra, 0.0), 1.0)
    return s_inter, s_intra


def clustered_scheme(g: Graph, sigma: float, labels) -> np.ndarray:
    """Cluster-aware removal: inter-cluster edges removed more often, same expected count."""
    if not 0 <= sigma <= 1:
        raise ValueError("sigma must lie in [0, 1]")
    labels = np.asarray(labels)
    edge = g.adjacency == 1
    inter = edge & (labels[:, None] != labels[None, :])
    m_inter = int(np.triu(inter, 1).sum())
    s_inter, s_intra = clustered_rates(g.m, m_inter, sigma)
    return np.where(inter, s_inter, np.where(edge, s_intra, 0.0))


def compare_spectral_change(g: Graph, schemes: dict[str, np.ndarray], samples: int = 100,
                            seed: int = 0) -> list[dict]:
    """Mean and std of spectral_distance(g, view) over sampled views, per scheme.

    Sample ``i`` uses seed ``seed + i`` for every scheme.
    """
    if samples < 30:
        raise ValueError("need at least 30 samples")
    rows = []
    for name, delta in schemes.items():
        dist = np.array([spectral_distance(g, sample_view(g, delta, seed + i)) for i in range(samples)])
        rows.append({"scheme": name, "mean_distance": float(dist.mean()),
                     "std": float(dist.std(ddof=1)), "samples": samples})
    return rows
