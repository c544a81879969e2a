"""Independent oracles used by the test suite.

Everything here is deliberately written with a different method (and,
where possible, different primitives) than the library code it checks:
bisection instead of multivariate descent, finite differences instead of
analytic derivatives, breadth-first search instead of union-find or
Tarjan, plain double loops instead of matrix products.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# Two-sample stratified closed form
# ---------------------------------------------------------------------------


def stratified_fixed_point(n_inside, n_outside, lam1, lam2,
                           lo=1e-12, hi=1.0, width=1e-14):
    """Solve the scalar balance equation for the two-sample stratified
    design by bisection.

    Sample 1 observes only a region A (indicator bias), sample 2 observes
    everything.  n_inside counts pooled observations in A, n_outside the
    rest.  The first normalizer solves

        p * (n_inside * u(p) + n_outside * v) = n_inside * u(p)

    with u(p) = 1 / (lam1 / p + lam2) and v = 1 / lam2, on (0, 1].
    """
    def f(p):
        u = 1.0 / (lam1 / p + lam2)
        v = 1.0 / lam2
        return p * (n_inside * u + n_outside * v) - n_inside * u

    flo, fhi = f(lo), f(hi)
    assert flo < 0 < fhi, "root not bracketed: f(%g)=%g f(%g)=%g" % (
        lo, flo, hi, fhi)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stratified_closed_form(n2_inside, n2_total):
    """The same normalizer, by counting: the fraction of the unrestricted
    sample that falls in the restricted region."""
    return n2_inside / n2_total


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def fd_gradient(fn, u, h=1e-6):
    """Central-difference gradient of a scalar function on R^K."""
    u = np.asarray(u, dtype=np.float64)
    g = np.zeros_like(u)
    for k in range(u.shape[0]):
        e = np.zeros_like(u)
        e[k] = h
        g[k] = (fn(u + e) - fn(u - e)) / (2.0 * h)
    return g


def fd_jacobian(vec_fn, u, h=1e-6):
    """Central-difference Jacobian of a vector function on R^K; applied
    to an analytic gradient this is a Hessian oracle."""
    u = np.asarray(u, dtype=np.float64)
    cols = []
    for k in range(u.shape[0]):
        e = np.zeros_like(u)
        e[k] = h
        cols.append((vec_fn(u + e) - vec_fn(u - e)) / (2.0 * h))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# Graph reachability by breadth-first search
# ---------------------------------------------------------------------------


def bfs_component_count(adjacency):
    """Number of connected components of an undirected 0/1 adjacency
    matrix, by repeated breadth-first search."""
    A = np.asarray(adjacency)
    K = A.shape[0]
    seen = [False] * K
    comps = 0
    for s in range(K):
        if seen[s]:
            continue
        comps += 1
        frontier = [s]
        seen[s] = True
        while frontier:
            nxt = []
            for v in frontier:
                for w in range(K):
                    if (A[v, w] or A[w, v]) and not seen[w]:
                        seen[w] = True
                        nxt.append(w)
            frontier = nxt
    return comps


def bfs_strongly_connected(adjacency):
    """Strong connectivity of a directed 0/1 adjacency matrix: every node
    reaches every other along directed edges."""
    A = np.asarray(adjacency)
    K = A.shape[0]
    for s in range(K):
        seen = [False] * K
        seen[s] = True
        frontier = [s]
        while frontier:
            nxt = []
            for v in frontier:
                for w in range(K):
                    if A[v, w] and not seen[w]:
                        seen[w] = True
                        nxt.append(w)
            frontier = nxt
        if not all(seen):
            return False
    return True


# ---------------------------------------------------------------------------
# Moment matrix by explicit summation
# ---------------------------------------------------------------------------


def direct_overlap_moments(bias_matrix, weights):
    """Weighted second-moment matrix of the bias columns, as explicit
    per-observation sums."""
    m = np.asarray(bias_matrix, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n, K = m.shape
    out = np.zeros((K, K))
    for k in range(K):
        for l in range(K):
            acc = 0.0
            for z in range(n):
                acc += w[z] * m[z, k] * m[z, l]
            out[k, l] = acc
    return out


# ---------------------------------------------------------------------------
# Frozen values for the four-point worked example
# ---------------------------------------------------------------------------

# Two samples in one dimension.  Sample 1 = {0.5, -0.5} drawn inside the
# unit ball, sample 2 = {0.2, 3.0} drawn unrestricted.  Three of the four
# pooled points land in the ball, one outside; both samples have size 2.
FOUR_POINT_W = np.array([0.5, 1.0])
FOUR_POINT_WEIGHTS = np.array([1 / 6, 1 / 6, 1 / 6, 1 / 2])
FOUR_POINT_OMEGA = np.array([0.5, 1.0])
