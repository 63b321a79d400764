"""Graph container, Laplacians, edge-flip perturbations and synthetic generators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

DEGREE_FLOOR = 1e-8


class GraphFormatError(ValueError):
    """Malformed edge-list or companion file."""


def _frozen(a):
    if a is None:
        return None
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with a dense symmetric adjacency in [0, 1].

    Binary for observed graphs; fractional entries appear for expected views
    during relaxed optimization. Arrays are stored read-only.
    """

    adjacency: np.ndarray
    features: np.ndarray | None = None
    node_labels: np.ndarray | None = None
    positions: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be exactly symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if a.size and (a.min() < 0 or a.max() > 1):
            raise ValueError("adjacency entries must lie in [0, 1]")
        object.__setattr__(self, "adjacency", _frozen(a))
        n = a.shape[0]
        for name in ("features", "node_labels", "positions"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v)
                if v.shape[0] != n:
                    raise ValueError(f"{name} has {v.shape[0]} rows, expected {n}")
                object.__setattr__(self, name, _frozen(v))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        """Number of nonzero upper-triangle entries."""
        return int(np.count_nonzero(np.triu(self.adjacency, 1)))

    @property
    def is_binary(self) -> bool:
        a = self.adjacency
        return bool(np.all((a == 0) | (a == 1)))

    def edges(self) -> np.ndarray:
        """(m, 2) array of upper-triangle edges i < j, row-major order."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return np.column_stack([i, j])

    def with_adjacency(self, adjacency) -> Graph:
        return Graph(adjacency, self.features, self.node_labels, self.positions, dict(self.meta))


def from_edges(n: int, edges, **kw) -> Graph:
    a = np.zeros((n, n))
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if len(edges):
        a[edges[:, 0], edges[:, 1]] = 1.0
        a[edges[:, 1], edges[:, 0]] = 1.0
    np.fill_diagonal(a, 0.0)
    return Graph(a, **kw)


# ---------------------------------------------------------------- I/O


def load_graph(path, n: int | None = None, features=None, labels=None) -> Graph:
    """Read a whitespace-separated ``src dst [weight]`` edge list with 0-based ids.

    Duplicate and reversed edges collapse into one undirected edge; self-loops
    are dropped and counted in ``graph.meta["self_loops_dropped"]``. Entries
    with weight 0 are skipped. ``features``/``labels`` name headerless CSVs
    whose row i belongs to node i.
    """
    pairs = []
    self_loops = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) not in (2, 3):
                raise GraphFormatError(f"{path}:{lineno}: expected 'src dst [weight]', got {line.rstrip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node id")
            if w == 0:
                continue
            if u == v:
                self_loops += 1
                continue
            pairs.append((u, v))
    top = max((max(p) for p in pairs), default=-1)
    if n is None:
        n = top + 1
    elif top >= n:
        raise IndexError(f"node id {top} out of range for n={n}")
    x = read_table(features, float) if features else None
    y = read_table(labels, int)[:, 0] if labels else None
    if self_loops:
        log.warning("dropped %d self-loop(s) from %s", self_loops, path)
    return from_edges(n, pairs, features=x, node_labels=y, meta={"self_loops_dropped": self_loops})


def read_table(path, dtype=float):
    # companion CSVs may carry a header row
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        [float(t) for t in first.strip().split(",") if t]
        skip = 0
    except ValueError:
        skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, dtype=dtype)


def save_graph(g: Graph, path, features=None, labels=None, positions=None) -> None:
    """Write the edge list (header comment carries n) plus optional companion CSVs."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n}\n")
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")
    for target, arr, fmt in ((features, g.features, "%.17g"), (labels, g.node_labels, "%d"),
                             (positions, g.positions, "%.17g")):
        if target is not None and arr is not None:
            np.savetxt(target, arr, delimiter=",", fmt=fmt)


def read_declared_n(path) -> int | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.startswith("# n="):
        return int(first[4:])
    return None


# ---------------------------------------------------------------- matrices


def degrees(g: Graph) -> np.ndarray:
    return g.adjacency.sum(axis=1)


def complement_direction(g: Graph) -> np.ndarray:
    """C = (11ᵀ − I − A) − A: +1 where an edge may be added, −1 where removed."""
    if not g.is_binary:
        raise ValueError("complement direction needs a binary adjacency")
    c = 1.0 - 2.0 * g.adjacency
    np.fill_diagonal(c, 0.0)
    return c


def normalized_laplacian_matrix(a: np.ndarray, degree_floor: float = DEGREE_FLOOR) -> np.ndarray:
    d = np.maximum(a.sum(axis=1), degree_floor)
    s = 1.0 / np.sqrt(d)
    lap = np.eye(a.shape[0]) - s[:, None] * a * s[None, :]
    return 0.5 * (lap + lap.T)


def normalized_laplacian(g: Graph, degree_floor: float = DEGREE_FLOOR) -> np.ndarray:
    """I − D̂^{-1/2} A D̂^{-1/2} with d̂ = max(d, degree_floor)."""
    if degree_floor <= 0:
        raise ValueError("degree_floor must be positive")
    return normalized_laplacian_matrix(g.adjacency, degree_floor)


def unnormalized_laplacian(g: Graph) -> np.ndarray:
    return np.diag(degrees(g)) - g.adjacency


def apply_perturbation(g: Graph, c: np.ndarray, e: np.ndarray) -> Graph:
    """t(A) = A + C∘E."""
    a = g.adjacency + c * e
    if not np.all((a == 0) | (a == 1)):
        raise RuntimeError("perturbation left the binary domain; C and A disagree")
    return g.with_adjacency(a)


def expected_view(g: Graph, c: np.ndarray, delta: np.ndarray) -> Graph:
    """E[t(A)] = A + C∘Δ."""
    a = g.adjacency + c * delta
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return g.with_adjacency(np.clip(a, 0.0, 1.0))


def flip_edges(g: Graph, delta: np.ndarray, rng: np.random.Generator) -> Graph:
    """Draw E_ij ~ B(Δ_ij) once per upper-triangle slot and flip those slots."""
    n = g.n
    u = rng.random(n * (n - 1) // 2)
    a = kernels.flip_sample(np.ascontiguousarray(g.adjacency), np.ascontiguousarray(delta, dtype=np.float64), u)
    return g.with_adjacency(a)


# ---------------------------------------------------------------- generators


def degree_features(a: np.ndarray, bins: int = 32) -> np.ndarray:
    """One-hot node degree, capped at ``bins - 1``."""
    d = np.minimum(np.rint(a.sum(axis=1)).astype(int), bins - 1)
    x = np.zeros((a.shape[0], bins))
    x[np.arange(a.shape[0]), d] = 1.0
    return x


def generate_sbm(n: int, k: int, p_in: float, p_out: float, seed: int = 0) -> Graph:
    """Stochastic block model with balanced contiguous blocks; labels are block ids."""
    if k > n or k < 1:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not 0 <= p_out < p_in <= 1:
        raise ValueError("need 0 <= p_out < p_in <= 1")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), [n // k + (i < n % k) for i in range(k)])
    same = labels[:, None] == labels[None, :]
    p = np.where(same, p_in, p_out)
    iu = np.triu_indices(n, 1)
    hit = rng.random(len(iu[0])) < p[iu]
    a = np.zeros((n, n))
    a[iu] = hit
    a = a + a.T
    return Graph(a, features=degree_features(a), node_labels=labels)


def generate_random_geometric(n: int, radius: float, seed: int = 0) -> Graph:
    """Uniform points in the unit square, edge iff distance <= radius."""
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    a = (np.sqrt((diff ** 2).sum(-1)) <= radius).astype(float)
    np.fill_diagonal(a, 0.0)
    return Graph(a, features=degree_features(a), positions=pos)
