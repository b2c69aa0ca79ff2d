"""Weighted digraphs, Laplacians, and connectivity analysis.

Edge convention used throughout the toolkit: ``weights[i, j] > 0`` means
there is an edge j -> i, i.e. agent j influences agent i. The Laplacian
L = D - W then has zero row sums and encodes relative feedback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import GraphError

# Entries smaller than this are treated as absent edges.
EDGE_EPS = 1e-15


@dataclass(frozen=True)
class WeightedDigraph:
    """Nonnegative adjacency matrix with the j -> i edge convention."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise GraphError("graph needs at least one node")
        if np.any(w < 0):
            raise GraphError("adjacency weights must be nonnegative")
        if np.any(np.abs(np.diag(w)) > 0):
            raise GraphError("self-loops are not allowed (nonzero diagonal)")
        w = w.copy()
        w[np.abs(w) < EDGE_EPS] = 0.0
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def successors(self, k: int) -> np.ndarray:
        """Nodes influenced by k, i.e. heads of edges k -> i."""
        return np.nonzero(self.weights[:, k] > 0)[0]


@dataclass(frozen=True)
class ReachabilityReport:
    """Spanning-tree verdict plus every node that reaches all others."""

    has_spanning_tree: bool
    roots: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.has_spanning_tree != (len(self.roots) > 0):
            raise GraphError("has_spanning_tree must match roots being nonempty")


def build_laplacian(g: WeightedDigraph) -> np.ndarray:
    """L = D - W with D the diagonal of row sums of W. Rows sum to zero."""
    w = g.weights
    return np.diag(w.sum(axis=1)) - w


def path_graph(n: int) -> WeightedDigraph:
    """Unit-weight directed chain 1 -> 2 -> ... -> n; node 1 is the leader.

    The first Laplacian row is all zeros, so node 1 is unaffected by the
    rest of the network.
    """
    if n < 1:
        raise GraphError(f"path graph needs n >= 1, got {n}")
    w = np.zeros((n, n))
    for i in range(1, n):
        w[i, i - 1] = 1.0
    return WeightedDigraph(w)


def graph_from_edges(n: int, edges) -> WeightedDigraph:
    """Build a digraph from ``[(i, j, w), ...]`` triples, 1-indexed, j -> i."""
    if n < 1:
        raise GraphError(f"graph needs n >= 1, got {n}")
    w = np.zeros((n, n))
    for entry in edges:
        if len(entry) != 3:
            raise GraphError(f"edge entries must be [i, j, w], got {entry!r}")
        i, j, wt = entry
        i, j = int(i), int(j)
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"edge ({i}, {j}) out of range for n = {n}")
        if i == j:
            raise GraphError(f"self-loop on node {i} rejected")
        w[i - 1, j - 1] = float(wt)
    return WeightedDigraph(w)


def spanning_tree_check(g: WeightedDigraph) -> ReachabilityReport:
    """BFS from every candidate root; roots are nodes that reach all others."""
    n = g.n
    adj = [g.successors(k) for k in range(n)]
    roots = []
    for k in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[k] = True
        frontier = [k]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(v)
            frontier = nxt
        if seen.all():
            roots.append(k)
    return ReachabilityReport(bool(roots), tuple(roots))


def delta_graph(g: WeightedDigraph, delta: float) -> WeightedDigraph:
    """Subgraph keeping only edges with weight >= delta."""
    if not delta > 0:
        raise GraphError(f"delta must be positive, got {delta}")
    w = g.weights.copy()
    w[w < delta] = 0.0
    return WeightedDigraph(w)


def laplacian_pseudoinverse(L: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a spanning-tree Laplacian.

    Any matrix satisfying the defining identity L L+ L = L would do; the
    least-squares pseudoinverse is the default. Raises for Laplacians whose
    underlying graph lacks a directed spanning tree (zero eigenvalue not
    simple, so the identity-based ISS machinery breaks down).
    """
    L = np.asarray(L, dtype=float)
    g = digraph_from_laplacian(L)
    if not spanning_tree_check(g).has_spanning_tree:
        raise GraphError("Laplacian is rank deficient: no directed spanning tree")
    return np.linalg.pinv(L)


def digraph_from_laplacian(L: np.ndarray) -> WeightedDigraph:
    """Recover the adjacency supporting L (off-diagonal entries negated)."""
    L = np.asarray(L, dtype=float)
    w = -L.copy()
    np.fill_diagonal(w, 0.0)
    if np.any(w < -1e-9):
        raise GraphError("matrix has positive off-diagonal entries; not a Laplacian")
    w[w < 0] = 0.0
    return WeightedDigraph(w)


def communication_footprint(stage_adjacencies) -> np.ndarray:
    """Boolean support of (W_k + I)(W_{k-1} + I) ... (W_1 + I).

    ``stage_adjacencies`` lists the per-stage 0/1 adjacencies innermost
    first. The result is the sparsity pattern of the measurements needed to
    realize the composed feedback; identical stages give the k-hop
    neighborhood.
    """
    mats = [np.asarray(m) for m in stage_adjacencies]
    if not mats:
        raise GraphError("communication footprint needs at least one stage")
    n = mats[0].shape[0]
    for m in mats:
        if m.ndim != 2 or m.shape != (n, n):
            raise GraphError("all stage adjacencies must be square and same size")
        if not np.isin(m, (0, 1)).all():
            raise GraphError("stage adjacencies must be binary")
    prod = np.eye(n, dtype=np.int64)
    for m in mats:
        prod = (m.astype(np.int64) + np.eye(n, dtype=np.int64)) @ prod
    return (prod > 0).astype(np.int64)
