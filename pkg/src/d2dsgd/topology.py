"""Connectivity graphs, mixing matrices, and their spectral quantities.

A topology is an undirected connected graph over devices 0..K-1, optionally
embedded in the plane (positions in meters, which drive pathloss).  The
mixing matrix W = I - alpha*L built from the graph Laplacian L is symmetric
and doubly stochastic; its spectral gap delta = 1 - ||11^T/K - W|| and the
norm beta = ||I - W|| are the two quantities every convergence bound uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .streams import substream

__all__ = [
    "Topology",
    "MixingMatrix",
    "build_topology",
    "random_placement",
    "with_positions",
    "default_alpha",
    "mixing_matrix",
    "spectral_gap",
    "beta_norm",
    "to_edge_list",
    "from_edge_list",
]

KINDS = ("complete", "grid", "grid_torus", "star", "chain", "geometric")

# Placement annulus for randomly deployed devices, in meters.
PLACEMENT_RADIUS_M = (50.0, 200.0)


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph, optionally with planar positions."""

    node_count: int
    edges: frozenset = field(default_factory=frozenset)
    positions: tuple | None = None

    def __post_init__(self):
        K = self.node_count
        if K < 2:
            raise ValueError(f"need at least 2 nodes, got {K}")
        norm = set()
        for e in self.edges:
            i, j = e
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < K and 0 <= j < K):
                raise ValueError(f"edge {e} out of range for {K} nodes")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.positions is not None:
            pos = tuple((float(x), float(y)) for x, y in self.positions)
            if len(pos) != K:
                raise ValueError("positions must cover every node")
            object.__setattr__(self, "positions", pos)
        adj = [set() for _ in range(K)]
        for i, j in norm:
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "_adj", tuple(frozenset(s) for s in adj))
        if not _connected(self._adj):
            raise ValueError("graph is disconnected; a connected topology is required")

    def neighbors(self, i):
        return self._adj[i]

    def degree(self, i):
        return len(self._adj[i])

    @property
    def edge_count(self):
        return len(self.edges)

    def distance(self, i, j):
        """Euclidean distance in meters; requires positions."""
        if self.positions is None:
            raise ValueError("topology has no positions; distances undefined")
        (xi, yi), (xj, yj) = self.positions[i], self.positions[j]
        return math.hypot(xi - xj, yi - yj)

    def adjacency_matrix(self):
        A = np.zeros((self.node_count, self.node_count))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def laplacian(self):
        A = self.adjacency_matrix()
        return np.diag(A.sum(axis=1)) - A


def _connected(adj):
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(adj)


def random_placement(K, seed):
    """Positions with radii uniform in [50, 200] m and uniform angles."""
    rng = substream(seed, "placement")
    lo, hi = PLACEMENT_RADIUS_M
    r = rng.uniform(lo, hi, size=K)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=K)
    return tuple((r[k] * math.cos(phi[k]), r[k] * math.sin(phi[k])) for k in range(K))


def with_positions(topology, positions):
    return Topology(topology.node_count, topology.edges, tuple(positions))


def build_topology(kind, K, rng_seed=None, *, rows=None, cols=None,
                   edges=None, max_link_distance=None):
    """Construct one of the standard connectivity graphs.

    ``grid``/``grid_torus`` need rows*cols == K.  ``geometric`` places nodes
    randomly (seeded) and connects all pairs unless an explicit edge list or
    a distance threshold is given.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    if K < 2:
        raise ValueError(f"need at least 2 nodes, got {K}")

    if kind == "complete":
        e = {(i, j) for i in range(K) for j in range(i + 1, K)}
        return Topology(K, frozenset(e))
    if kind == "star":
        return Topology(K, frozenset((0, i) for i in range(1, K)))
    if kind == "chain":
        return Topology(K, frozenset((i, i + 1) for i in range(K - 1)))
    if kind in ("grid", "grid_torus"):
        if rows is None or cols is None:
            raise ValueError("grid kinds need rows and cols")
        if rows * cols != K:
            raise ValueError(f"grid dimensions {rows}x{cols} do not multiply to {K}")
        e = set()
        for r in range(rows):
            for c in range(cols):
                n = r * cols + c
                if c + 1 < cols:
                    e.add((n, r * cols + c + 1))
                if r + 1 < rows:
                    e.add((n, (r + 1) * cols + c))
                if kind == "grid_torus":
                    if cols > 1:
                        e.add(tuple(sorted((n, r * cols + (c + 1) % cols))))
                    if rows > 1:
                        e.add(tuple(sorted((n, ((r + 1) % rows) * cols + c))))
        return Topology(K, frozenset(e))

    # geometric
    if rng_seed is None:
        raise ValueError("geometric topology needs rng_seed for placement")
    pos = random_placement(K, rng_seed)
    if edges is not None:
        e = frozenset(tuple(sorted(p)) for p in edges)
    elif max_link_distance is not None:
        e = set()
        for i in range(K):
            for j in range(i + 1, K):
                d = math.hypot(pos[i][0] - pos[j][0], pos[i][1] - pos[j][1])
                if d <= max_link_distance:
                    e.add((i, j))
        e = frozenset(e)
    else:
        e = frozenset((i, j) for i in range(K) for j in range(i + 1, K))
    return Topology(K, e, pos)


def default_alpha(topology):
    """Neighbor weight 2/(lambda_1(L) + lambda_{K-1}(L)) from the Laplacian spectrum."""
    lam = np.linalg.eigvalsh(topology.laplacian())
    return 2.0 / (lam[-1] + lam[1])


def _sym_norm(A, tol=1e-9):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(A, A.T, atol=tol):
        raise ValueError("matrix is not symmetric")
    return float(np.max(np.abs(np.linalg.eigvalsh(A))))


def spectral_gap(W):
    """delta = 1 - ||11^T/K - W||_2 for a symmetric W."""
    W = np.asarray(W, dtype=float)
    K = W.shape[0]
    return 1.0 - _sym_norm(np.full((K, K), 1.0 / K) - W)


def beta_norm(W):
    """beta = ||I - W||_2 for a symmetric W."""
    W = np.asarray(W, dtype=float)
    return _sym_norm(np.eye(W.shape[0]) - W)


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic neighbor-averaging matrix with its spectra.

    ``nonnegative`` is False when the chosen alpha drives some self-weight
    below zero (the Laplacian-optimal alpha does this on star and planar-grid
    graphs); the spectral quantities remain well defined and the convergence
    bounds use only those.
    """

    weights: np.ndarray
    alpha: float
    spectral_gap: float
    beta: float
    nonnegative: bool

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def node_count(self):
        return self.weights.shape[0]


def mixing_matrix(topology, alpha=None, *, require_nonnegative=False):
    """Build W with w_ij = alpha on edges and w_ii = 1 - deg(i)*alpha."""
    if alpha is None:
        alpha = default_alpha(topology)
    alpha = float(alpha)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    K = topology.node_count
    W = np.eye(K) - alpha * topology.laplacian()
    diag = np.diag(W)
    nonneg = bool(diag.min() >= -1e-12)
    if require_nonnegative and not nonneg:
        node = int(np.argmin(diag))
        raise ValueError(
            f"alpha={alpha} makes the self-weight of node {node} negative "
            f"({diag[node]:.6g}); reduce alpha")
    err = max(np.abs(W.sum(axis=0) - 1.0).max(), np.abs(W.sum(axis=1) - 1.0).max())
    if err > 1e-12:
        raise ValueError(f"mixing matrix is not doubly stochastic (residual {err:.3g})")
    delta = spectral_gap(W)
    if delta <= 0.0:
        raise ValueError(f"||11^T/K - W|| >= 1 (spectral gap {delta:.6g}); alpha too large or graph disconnected")
    return MixingMatrix(W, alpha, delta, beta_norm(W), nonneg)


def to_edge_list(topology):
    """Plain-text form: first line K, then `i j` lines, then `# pos i x y` lines."""
    lines = [str(topology.node_count)]
    lines += [f"{i} {j}" for i, j in sorted(topology.edges)]
    if topology.positions is not None:
        lines += [f"# pos {i} {x!r} {y!r}" for i, (x, y) in enumerate(topology.positions)]
    return "\n".join(lines) + "\n"


def from_edge_list(text):
    K = None
    edges = []
    pos = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["pos"]:
                pos[int(parts[1])] = (float(parts[2]), float(parts[3]))
            continue
        parts = line.split()
        if K is None:
            if len(parts) != 1:
                raise ValueError(f"expected node count on first line, got {raw!r}")
            K = int(parts[0])
            continue
        if len(parts) != 2:
            raise ValueError(f"expected 'i j' edge line, got {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if K is None:
        raise ValueError("empty edge-list document")
    positions = None
    if pos:
        if set(pos) != set(range(K)):
            raise ValueError("positions present but do not cover every node")
        positions = tuple(pos[i] for i in range(K))
    return Topology(K, frozenset(edges), positions)
