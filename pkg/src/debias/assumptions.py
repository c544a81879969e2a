"""Diagnostics for when debiasing is identified at all.

Two kinds of structure matter.  First, every observation must be visible
to at least one biasing function, otherwise part of the data carries no
information about the target distribution.  Second, the samples must
overlap enough to be stitched together: pairwise overlap is summarized by
a thresholded undirected graph, and the sharp empirical criterion is
strong connectivity of a directed graph that records which samples
contain points visible to which biasing functions.  The normalizer system
has a unique solution (after pinning the last coordinate) exactly when
that digraph is strongly connected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bias_model import PooledData
from .errors import BadKappa

__all__ = [
    "OverlapGraph",
    "SupportDigraph",
    "AssumptionReport",
    "check_support_cover",
    "overlap_graph",
    "laplacian_connectivity",
    "count_components",
    "support_connectivity",
    "assumption_report",
]


@dataclass(frozen=True, eq=False)
class OverlapGraph:
    """Undirected graph over the K samples with an edge where the weighted
    second moment of a pair of biasing functions clears the threshold kappa.

    source records whether the adjacency came from data or was declared by
    the caller.
    """

    K: int
    kappa: float
    adjacency: np.ndarray
    source: str = "empirical-estimate"

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int64)
        if adj.shape != (self.K, self.K):
            raise ValueError("adjacency must be K x K")
        if not np.array_equal(adj, adj.T):
            raise ValueError("overlap graph adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("overlap graph has no self loops")
        if self.source not in ("user-declared", "empirical-estimate"):
            raise ValueError("source must be 'user-declared' or 'empirical-estimate'")
        object.__setattr__(self, "adjacency", adj)


@dataclass(frozen=True, eq=False)
class SupportDigraph:
    """Directed graph with an edge k -> l when sample l contains at least
    one observation on which biasing function k is positive.
    """

    K: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int64)
        if adj.shape != (self.K, self.K):
            raise ValueError("adjacency must be K x K")
        object.__setattr__(self, "adjacency", adj)


@dataclass(frozen=True)
class AssumptionReport:
    support_cover_ok: bool
    laplacian_zero_multiplicity: int
    kappa_connected: bool
    strongly_connected: bool
    min_mean_omega: float
    messages: tuple = field(default_factory=tuple)

    def to_json(self) -> str:
        payload = {
            "support_cover_ok": bool(self.support_cover_ok),
            "laplacian_zero_multiplicity": int(self.laplacian_zero_multiplicity),
            "kappa_connected": bool(self.kappa_connected),
            "strongly_connected": bool(self.strongly_connected),
            "min_mean_omega": float(self.min_mean_omega),
            "messages": list(self.messages),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def check_support_cover(data) -> bool:
    """True when every observation is positive under at least one biasing
    function.

    Accepts a PooledData or a raw (m, K) matrix of biasing values; the
    matrix form is how a held-out test set is checked against train-time
    biasing functions.  Pooled training data always passes because each
    point is positive under its own sample's function.
    """
    matrix = data.bias_matrix if isinstance(data, PooledData) else np.asarray(data)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-d matrix of biasing values")
    if matrix.shape[0] == 0:
        return True
    return bool((matrix.max(axis=1) > 0.0).all())


def overlap_graph(pooled: PooledData, kappa: float = 1e-3, weights=None) -> OverlapGraph:
    """Threshold the weighted pairwise second moments of the biasing values.

    weights defaults to uniform 1/n over the pooled observations; pass the
    debiased weights to re-estimate overlap under the corrected measure.
    The finite-sample estimate can misjudge overlap that a user knows to
    hold at the population level, which is why user-declared graphs are
    also accepted by the connectivity checks.
    """
    if not (np.isscalar(kappa) and np.isfinite(kappa) and kappa > 0):
        raise BadKappa("kappa must be a positive finite real, got %r" % (kappa,))
    m = pooled.bias_matrix
    if weights is None:
        w = np.full(pooled.n, 1.0 / pooled.n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (pooled.n,):
            raise ValueError("weights must have one entry per pooled observation")
    moments = (m * w[:, None]).T @ m
    adj = (moments >= kappa).astype(np.int64)
    np.fill_diagonal(adj, 0)
    return OverlapGraph(K=pooled.K, kappa=float(kappa), adjacency=adj,
                        source="empirical-estimate")


def laplacian_connectivity(graph: OverlapGraph):
    """Connectivity of the overlap graph via its Laplacian spectrum.

    Returns (connected, zero_multiplicity) where zero_multiplicity counts
    Laplacian eigenvalues below 1e-9 * K in absolute value; that count
    equals the number of connected components, so 1 means connected.
    """
    adj = graph.adjacency.astype(np.float64)
    lap = np.diag(adj.sum(axis=1)) - adj
    eig = np.linalg.eigvalsh(lap)
    mult = int(np.sum(np.abs(eig) <= 1e-9 * graph.K))
    return mult == 1, mult


def count_components(adjacency: np.ndarray) -> int:
    """Connected components of an undirected 0/1 adjacency via union-find.

    Exact equivalent of the Laplacian zero-multiplicity count; kept as an
    independent cross-check.
    """
    adj = np.asarray(adjacency)
    n = adj.shape[0]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                ri, rj = find(i), find(j)
            else:
                continue
            if ri != rj:
                parent[ri] = rj
    return len({find(i) for i in range(n)})


def _tarjan_scc(adjacency: np.ndarray):
    """Strongly connected components, iterative Tarjan."""
    n = adjacency.shape[0]
    succ = [np.flatnonzero(adjacency[v]).tolist() for v in range(n)]
    index = [-1] * n
    low = [0] * n
    onstack = [False] * n
    stack = []
    comps = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work.pop()
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                onstack[v] = True
            descended = False
            while pi < len(succ[v]):
                w = succ[v][pi]
                pi += 1
                if index[w] == -1:
                    work.append((v, pi))
                    work.append((w, 0))
                    descended = True
                    break
                if onstack[w]:
                    low[v] = min(low[v], index[w])
            if descended:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
    return comps


def support_connectivity(pooled: PooledData):
    """Build the empirical support digraph and test strong connectivity.

    Edge k -> l is present when some observation of sample l has a positive
    value under biasing function k.  Strong connectivity of this digraph is
    the exact finite-sample criterion for the normalizer estimates to be
    unique once the last coordinate is pinned; when it fails the solver
    still returns a minimizer but flags it as non-unique.

    Returns (SupportDigraph, strongly_connected).
    """
    K = pooled.K
    adj = np.zeros((K, K), dtype=np.int64)
    offset = 0
    for l, size in enumerate(pooled.sizes):
        block = pooled.bias_matrix[offset:offset + size]
        adj[:, l] = (block > 0.0).any(axis=0)
        offset += size
    digraph = SupportDigraph(K=K, adjacency=adj)
    comps = _tarjan_scc(adj)
    return digraph, len(comps) == 1


def assumption_report(pooled: PooledData, kappa: float = 1e-3,
                      weights=None) -> AssumptionReport:
    """Run every diagnostic and collect the results in one report."""
    cover = check_support_cover(pooled)
    graph = overlap_graph(pooled, kappa=kappa, weights=weights)
    connected, mult = laplacian_connectivity(graph)
    _, strong = support_connectivity(pooled)
    if weights is None:
        w = np.full(pooled.n, 1.0 / pooled.n)
    else:
        w = np.asarray(weights, dtype=np.float64)
    min_mean = float((w @ pooled.bias_matrix).min())

    messages = []
    if not cover:
        messages.append("some observations are invisible to every biasing function")
    if not connected:
        messages.append(
            "overlap graph splits into %d components at kappa=%g" % (mult, kappa)
        )
    if not strong:
        messages.append(
            "support digraph is not strongly connected; normalizers are not unique"
        )
    if min_mean <= 0:
        messages.append("a biasing function is zero on the entire pool")

    return AssumptionReport(
        support_cover_ok=cover,
        laplacian_zero_multiplicity=mult,
        kappa_connected=connected,
        strongly_connected=strong,
        min_mean_omega=min_mean,
        messages=tuple(messages),
    )
