"""Symmetric eigendecomposition, spectral-norm objective and graph spectral properties."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .graph import DEGREE_FLOOR, Graph, degrees, normalized_laplacian, normalized_laplacian_matrix

SYMMETRY_TOL = 1e-12
RITZ_TOL = 1e-10


class DegenerateSpectrumWarning(RuntimeWarning):
    """Selected eigenvalues are (nearly) repeated; per-eigenvector derivatives are ill-defined."""


class LanczosFallbackWarning(RuntimeWarning):
    pass


@dataclass
class EigenSystem:
    """Ascending eigenvalues with orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


@dataclass(frozen=True)
class SpectralSelection:
    """Keep the ``k`` lowest and ``k`` highest eigenvalues."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("selection needs k >= 1")

    def is_full(self, n: int) -> bool:
        return 2 * self.k >= n


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # first component with |x| > 1e-10 made positive, per column
    big = np.abs(vectors) > 1e-10
    first = np.argmax(big, axis=0)
    s = np.sign(vectors[first, np.arange(vectors.shape[1])])
    s[s == 0] = 1.0
    return vectors * s


def _check_symmetric(mat: np.ndarray) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got {mat.shape}")
    if mat.size and np.max(np.abs(mat - mat.T)) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric within 1e-12")


def eig_full(mat: np.ndarray) -> EigenSystem:
    mat = np.asarray(mat, dtype=np.float64)
    _check_symmetric(mat)
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    return EigenSystem(vals, _fix_signs(vecs), {"method": "full"})


# ---------------------------------------------------------------- Lanczos


def _lanczos_run(mat, want, locked, rng, budget, tol):
    """One Lanczos pass on the complement of ``locked``, targeting the top ``want`` Ritz pairs.

    Returns (values, vectors, iterations used). Values are only those Ritz
    pairs whose residual fell below ``tol``.
    """
    n = mat.shape[0]
    free = n - locked.shape[1]
    if free <= 0 or want <= 0:
        return np.empty(0), np.empty((n, 0)), 0
    q = rng.standard_normal(n)
    for _ in range(2):
        q -= locked @ (locked.T @ q)
    q /= np.linalg.norm(q)
    basis = [q]
    alphas, betas = [], []
    steps = 0
    check_every = 5
    while True:
        w = mat @ basis[-1]
        alpha = basis[-1] @ w
        alphas.append(alpha)
        qmat = np.column_stack(basis)
        # two passes of classical Gram-Schmidt = full reorthogonalization
        for _ in range(2):
            w -= qmat @ (qmat.T @ w)
            if locked.shape[1]:
                w -= locked @ (locked.T @ w)
        beta = np.linalg.norm(w)
        steps += 1
        j = len(alphas)
        exhausted = beta < 1e-12 or j >= free
        if exhausted or steps >= budget or (j >= want and j % check_every == 0):
            theta, y = eigh_tridiagonal(np.array(alphas), np.array(betas)) if j > 1 else (
                np.array(alphas), np.ones((1, 1)))
            top = np.arange(j - 1, max(j - 1 - want, -1), -1)
            resid = np.abs(beta * y[-1, top]) if not exhausted else np.zeros(len(top))
            done = np.all(resid <= tol)
            if done or exhausted or steps >= budget:
                ok = top[resid <= tol]
                return theta[ok], qmat @ y[:, ok], steps
        betas.append(beta)
        basis.append(w / beta)


def _lanczos_top(mat, count, rng, max_iter, tol=RITZ_TOL):
    """Largest ``count`` eigenpairs of symmetric ``mat`` with locking and restarts.

    A single-vector Krylov space holds one copy of each repeated eigenvalue,
    so after a pass the remaining complement is searched again until no
    better eigenvalue appears.
    """
    n = mat.shape[0]
    locked = np.empty((n, 0))
    lvals = np.empty(0)
    used = 0
    while used < max_iter:
        want = count - len(lvals) if len(lvals) < count else 1
        vals, vecs, steps = _lanczos_run(mat, want, locked, rng, max_iter - used, tol)
        used += steps
        if len(vals) == 0:
            if locked.shape[1] + 0 >= n:
                break
            continue
        if len(lvals) >= count and vals.max() <= lvals.min() + tol:
            return lvals, locked, used, True
        allv = np.concatenate([lvals, vals])
        allu = np.column_stack([locked, vecs])
        order = np.argsort(-allv, kind="stable")[:count]
        lvals, locked = allv[order], allu[:, order]
        if locked.shape[1] >= n:
            return lvals, locked, used, True
    return lvals, locked, used, False


def _rayleigh_ritz(mat, basis):
    qb, _ = np.linalg.qr(basis)
    small = qb.T @ mat @ qb
    vals, y = np.linalg.eigh(0.5 * (small + small.T))
    return vals, qb @ y


def eig_selective(mat: np.ndarray, sel: SpectralSelection, seed: int = 0,
                  max_iter: int | None = None) -> EigenSystem:
    """The ``sel.k`` smallest and largest eigenpairs via Lanczos, merged ascending.

    Smallest eigenvalues come from running on ``2I - mat`` (normalized
    Laplacian spectra lie in [0, 2]). Falls back to ``eig_full`` when Lanczos
    does not converge within ``max_iter`` (default 10n) iterations.
    """
    mat = np.asarray(mat, dtype=np.float64)
    _check_symmetric(mat)
    n = mat.shape[0]
    if sel.is_full(n):
        es = eig_full(mat)
        es.info["selection"] = "degenerate-full"
        return es
    max_iter = 10 * n if max_iter is None else max_iter
    rng = np.random.default_rng(seed)
    shift = 2.0 * np.eye(n) - mat
    lo_vals, lo_vecs, it_lo, ok_lo = _lanczos_top(shift, sel.k, rng, max_iter)
    hi_vals, hi_vecs, it_hi, ok_hi = _lanczos_top(mat, sel.k, rng, max_iter)
    info = {"method": "lanczos", "iterations": it_lo + it_hi}
    if ok_lo and ok_hi:
        # polish each end by Rayleigh-Ritz on its converged subspace
        lv, lu = _rayleigh_ritz(mat, lo_vecs)
        hv, hu = _rayleigh_ritz(mat, hi_vecs)
        vals = np.concatenate([lv, hv])
        vecs = np.column_stack([lu, hu])
        resid = np.linalg.norm(mat @ vecs - vecs * vals, axis=0)
        if np.all(resid <= 1e-8 * max(1.0, np.linalg.norm(mat))):
            order = np.argsort(vals, kind="stable")
            return EigenSystem(vals[order], _fix_signs(vecs[:, order]), info)
    warnings.warn("Lanczos did not converge; using full decomposition", LanczosFallbackWarning)
    es = eig_full(mat)
    idx = np.r_[0:sel.k, n - sel.k:n]
    info.update(method="full-fallback", fallback=True)
    return EigenSystem(es.values[idx], es.vectors[:, idx], info)


def select_extremes(es: EigenSystem, sel: SpectralSelection | None) -> EigenSystem:
    """Restrict a full EigenSystem to a selection (cheap path for small graphs)."""
    n = len(es)
    if sel is None or sel.is_full(n):
        return es
    idx = np.r_[0:sel.k, n - sel.k:n]
    return EigenSystem(es.values[idx], es.vectors[:, idx], dict(es.info, selection=sel.k))


def decompose(mat: np.ndarray, sel: SpectralSelection | None = None, seed: int = 0) -> EigenSystem:
    if sel is None or sel.is_full(mat.shape[0]):
        return eig_full(mat)
    return eig_selective(mat, sel, seed=seed)


# ---------------------------------------------------------------- objective


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric uniform noise ε(N + Nᵀ)/2 that breaks graph automorphisms; drawn once per run."""

    magnitude: float = 1e-6
    seed: int = 0
    resample_policy: str = "once_per_run"

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("noise magnitude must be >= 0")

    def matrix(self, n: int) -> np.ndarray:
        if self.magnitude == 0:
            return np.zeros((n, n))
        noise = np.random.default_rng(self.seed).random((n, n))
        out = self.magnitude * 0.5 * (noise + noise.T)
        np.fill_diagonal(out, 0.0)
        return out


def perturbed_adjacency(a, c, delta, noise=None):
    out = a + c * delta
    if noise is not None:
        out = out + noise
    return out


def laplacian_chain(a_prime: np.ndarray, c: np.ndarray, vectors: np.ndarray, weights: np.ndarray,
                    degree_floor: float = DEGREE_FLOOR) -> np.ndarray:
    """Pull ∂f/∂λ_k back to ∂f/∂Δ_ij through Lap(A + C∘Δ).

    ``weights[k] = ∂f/∂λ_k`` for the eigenpairs in ``vectors``; ∂λ_k/∂L = u_k u_kᵀ.
    Δ_ij and Δ_ji move together, so each entry of the result is the derivative
    with respect to the symmetric pair.
    """
    m = (vectors * weights) @ vectors.T
    d = a_prime.sum(axis=1)
    live = d > degree_floor
    s = 1.0 / np.sqrt(np.maximum(d, degree_floor))
    direct = m * s[:, None] * s[None, :]
    # derivative through D^{-1/2}; zero where the degree floor is active
    h = np.where(live, s ** 3 * ((m * a_prime) @ s), 0.0)
    g = c * (-2.0 * direct + h[:, None] + h[None, :])
    np.fill_diagonal(g, 0.0)
    # rounding in the products above leaves g symmetric only to ~1e-17
    return 0.5 * (g + g.T)


def _min_gap(values: np.ndarray) -> float:
    if len(values) < 2:
        return np.inf
    return float(np.min(np.diff(np.sort(values))))


def _spectrum(g: Graph, c, delta, sel, noise, seed=0):
    a_prime = perturbed_adjacency(g.adjacency, c, delta, None if noise is None else noise.matrix(g.n))
    return a_prime, decompose(normalized_laplacian_matrix(a_prime), sel, seed=seed)


def spectrum_norm_sq(g: Graph, c: np.ndarray, delta: np.ndarray, sel: SpectralSelection | None = None,
                     noise: NoiseSpec | None = None) -> float:
    """L_GS(Δ) = Σ λ_k² over the selected spectrum of Lap(A + C∘Δ + noise)."""
    _, es = _spectrum(g, c, delta, sel, noise)
    return float(np.sum(es.values ** 2))


def spectrum_norm_grad(g: Graph, c: np.ndarray, delta: np.ndarray, sel: SpectralSelection | None = None,
                       noise: NoiseSpec | None = None, gap_tol: float = 1e-10) -> np.ndarray:
    """∂L_GS/∂Δ; warns with DegenerateSpectrumWarning if selected eigenvalues nearly coincide."""
    a_prime, es = _spectrum(g, c, delta, sel, noise)
    if _min_gap(es.values) < gap_tol:
        warnings.warn(f"eigenvalue gap {_min_gap(es.values):.3g} below {gap_tol:g}",
                      DegenerateSpectrumWarning, stacklevel=2)
    return laplacian_chain(a_prime, c, es.vectors, 2.0 * es.values)


# ---------------------------------------------------------------- properties


def graph_spectrum(g: Graph) -> np.ndarray:
    return np.linalg.eigvalsh(normalized_laplacian(g))


def spectral_distance(g1: Graph, g2: Graph) -> float:
    if g1.n != g2.n:
        raise ValueError(f"graph sizes differ: {g1.n} vs {g2.n}")
    return float(np.linalg.norm(graph_spectrum(g1) - graph_spectrum(g2)))


def algebraic_connectivity(g: Graph) -> float:
    if g.n < 2:
        raise ValueError("algebraic connectivity needs n >= 2")
    return float(graph_spectrum(g)[1])


def connected_components_spectral(g: Graph, tol: float = 1e-8) -> int:
    """Zero-eigenvalue count of the normalized Laplacian.

    Under the degree floor an isolated node contributes eigenvalue 1 rather
    than 0, so isolated nodes are counted as components separately.
    """
    isolated = int(np.sum(degrees(g) <= DEGREE_FLOOR))
    return int(np.sum(graph_spectrum(g) < tol)) + isolated


def union_find_components(g: Graph) -> int:
    parent = list(range(g.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in g.edges():
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(x) for x in range(g.n)})


def bfs_diameter(g: Graph) -> int:
    nbrs = [np.flatnonzero(row) for row in g.adjacency]
    best = 0
    for src in range(g.n):
        dist = np.full(g.n, -1)
        dist[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if np.any(dist < 0):
            raise ValueError("graph is disconnected; diameter is infinite")
        best = max(best, int(dist.max()))
    return best


@dataclass(frozen=True)
class DiameterBounds:
    lower: float
    upper: float
    exact: int
    distinct_eigenvalues: int


def diameter_bounds(g: Graph, tol: float = 1e-8) -> DiameterBounds:
    """Spectral diameter bounds plus the exact BFS diameter for validation.

    upper: (number of distinct normalized-Laplacian eigenvalues) − 1.
    lower: the larger of 1/(vol·λ₁) on the normalized Laplacian and
    4/(n·a) with a the unnormalized algebraic connectivity.
    """
    exact = bfs_diameter(g)
    lam = graph_spectrum(g)
    distinct = 1 + int(np.sum(np.diff(lam) > tol))
    vol = degrees(g).sum()
    lower = 0.0
    if g.n > 1:
        lower = max(lower, 1.0 / (vol * lam[1]))
        a_u = np.linalg.eigvalsh(np.diag(degrees(g)) - g.adjacency)[1]
        lower = max(lower, 4.0 / (g.n * a_u))
    return DiameterBounds(lower=lower, upper=float(distinct - 1), exact=exact, distinct_eigenvalues=distinct)


def diffusion_distance(g: Graph, i: int, j: int, t: float) -> float:
    """Σ_l exp(−2tλ_l)(u_l[i] − u_l[j])²."""
    if t <= 0:
        raise ValueError("t must be positive")
    if not (0 <= i < g.n and 0 <= j < g.n):
        raise IndexError(f"node out of range for n={g.n}")
    es = eig_full(normalized_laplacian(g))
    diff = es.vectors[i] - es.vectors[j]
    return float(np.sum(np.exp(-2.0 * t * es.values) * diff ** 2))


FILTERS: dict[str, Callable[..., Callable[[np.ndarray], np.ndarray]]] = {
    "identity": lambda: (lambda lam: np.ones_like(lam)),
    "heat": lambda t=1.0: (lambda lam: np.exp(-t * lam)),
    "gcn": lambda: (lambda lam: 2.0 - lam),
    "gin": lambda eps=0.0: (lambda lam: 2.0 + eps - lam),
}


def make_filter(name: str, param: float | None = None) -> Callable[[np.ndarray], np.ndarray]:
    try:
        factory = FILTERS[name]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose from {sorted(FILTERS)}") from None
    return factory() if param is None else factory(param)


def apply_spectral_filter(g: Graph, signal: np.ndarray, filt: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """U filt(Λ) Uᵀ x."""
    es = eig_full(normalized_laplacian(g))
    return es.vectors @ (filt(es.values) * (es.vectors.T @ signal))


def first_order_eigen_change(es: EigenSystem, g: Graph, i: int, j: int, k: int, weight: float = 1.0) -> float:
    """Predicted change of λ_k when slot (i, j) is flipped with weight ``weight``.

    Written in the generalized-eigenvector form: with u = D^{-1/2} v and the
    normalized-adjacency eigenvalue μ = 1 − λ_k, a flip Δw = weight·(1 − 2A_ij)
    moves μ by Δw(2u_iu_j − μ(u_i² + u_j²)) and λ_k by the negative of that.
    """
    if i == j:
        raise ValueError("i and j must differ")
    if not -len(es) <= k < len(es):
        raise IndexError(f"eigen index {k} out of range")
    d = np.maximum(degrees(g), DEGREE_FLOOR)
    v = es.vectors[:, k]
    ui, uj = v[i] / np.sqrt(d[i]), v[j] / np.sqrt(d[j])
    mu = 1.0 - es.values[k]
    dw = weight * (1.0 - 2.0 * g.adjacency[i, j])
    return float(-dw * (2.0 * ui * uj - mu * (ui ** 2 + uj ** 2)))


def eigen_change_magnitude(es: EigenSystem, g: Graph, i: int, j: int, k: int) -> float:
    """|(u_i − u_j)² + (μ − 1)(u_i² + u_j²)| for a unit flip, μ the normalized-adjacency eigenvalue."""
    d = np.maximum(degrees(g), DEGREE_FLOOR)
    v = es.vectors[:, k]
    ui, uj = v[i] / np.sqrt(d[i]), v[j] / np.sqrt(d[j])
    mu = 1.0 - es.values[k]
    return float(abs((ui - uj) ** 2 + (mu - 1.0) * (ui ** 2 + uj ** 2)))
