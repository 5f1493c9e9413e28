"""Exact solver for the balanced transportation problem.

The primal simplex runs on the bipartite transport polytope: a basis is a
spanning tree of ``m + n - 1`` cells, dual potentials come from the tree,
and an entering cell with negative reduced cost is pivoted in around its
unique cycle. Pricing is Dantzig's most-negative rule; after a run of
degenerate pivots it falls back to Bland's lowest-index rule, which cannot
cycle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

__all__ = ["TransportPlan", "TransportError", "solve_transport"]

BALANCE_TOL = 1e-6
DEGENERATE_SWITCH = 20


class TransportError(ValueError):
    """Invalid transport instance (negative or unbalanced masses)."""


@dataclass(frozen=True)
class TransportPlan:
    """Optimal plan with the dual potentials certifying it.

    Attributes
    ----------
    x : ndarray (m, n)
        Mass moved from source i to destination j.
    cost : float
        Total work ``sum(c * x)``.
    u, v : ndarray
        Dual potentials; ``c - u[:, None] - v[None, :] >= 0`` with equality
        wherever ``x > 0``.
    """

    x: np.ndarray
    cost: float
    u: np.ndarray
    v: np.ndarray
    iterations: int = 0


def _clean_masses(w, name):
    w = np.asarray(w, dtype=float).ravel()
    if len(w) == 0:
        raise TransportError(f"{name} is empty")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise TransportError(f"{name} has negative or non-finite entries")
    return w


def _initial_basis(c, a, b):
    # matrix-minimum rule; crosses exactly one line per allocation so the
    # chosen cells always form a spanning tree (zero-valued cells allowed)
    m, n = c.shape
    s = a.copy()
    d = b.copy()
    row_alive = np.ones(m, dtype=bool)
    col_alive = np.ones(n, dtype=bool)
    rows_left, cols_left = m, n
    x = np.zeros((m, n))
    basis = []
    for flat in np.argsort(c, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if not (row_alive[i] and col_alive[j]):
            continue
        basis.append((i, j))
        if rows_left == 1 and cols_left == 1:
            x[i, j] = s[i]
            break
        if rows_left == 1 or (cols_left > 1 and s[i] > d[j]):
            q = d[j]
            s[i] -= q
            d[j] = 0.0
            col_alive[j] = False
            cols_left -= 1
        else:
            q = s[i]
            d[j] -= q
            s[i] = 0.0
            row_alive[i] = False
            rows_left -= 1
        x[i, j] = q
    return x, basis


def _potentials(c, adj, m, n):
    u = np.zeros(m)
    v = np.zeros(n)
    seen = np.zeros(m + n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < m:
                v[nb - m] = c[node, nb - m] - u[node]
            else:
                u[nb] = c[nb, node - m] - v[node - m]
            queue.append(nb)
    return u, v


def _tree_path(adj, start, goal, size):
    parent = np.full(size, -1)
    parent[start] = start
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if parent[nb] < 0:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(int(parent[path[-1]]))
    return path[::-1]


def solve_transport(costs, w1, w2, max_iter=None):
    """Minimize ``sum(c_ij x_ij)`` over plans with row sums `w1`, column sums `w2`.

    Masses are checked to balance within 1e-6 and then rescaled to unit
    total so the problem is exactly balanced.

    Parameters
    ----------
    costs : array_like (m, n)
    w1 : array_like (m,)
        Source masses.
    w2 : array_like (n,)
        Destination masses.

    Returns
    -------
    TransportPlan
    """
    c = np.asarray(costs, dtype=float)
    a = _clean_masses(w1, "source weights")
    b = _clean_masses(w2, "destination weights")
    if c.shape != (len(a), len(b)):
        raise TransportError(f"cost shape {c.shape} does not match weights ({len(a)}, {len(b)})")
    if not np.all(np.isfinite(c)):
        raise TransportError("costs must be finite")
    sa, sb = a.sum(), b.sum()
    if sa <= 0 or abs(sa - sb) > BALANCE_TOL * max(1.0, sa):
        raise TransportError(f"unbalanced masses: {sa:.12g} vs {sb:.12g}")
    a = a / sa
    b = b / sb
    m, n = c.shape
    scale = max(1.0, float(np.abs(c).max()))
    tol = 1e-12 * scale

    x, basis = _initial_basis(c, a, b)
    adj = [set() for _ in range(m + n)]
    for i, j in basis:
        adj[i].add(m + j)
        adj[m + j].add(i)
    is_basic = np.zeros((m, n), dtype=bool)
    for i, j in basis:
        is_basic[i, j] = True

    if max_iter is None:
        max_iter = 50 * (m + n) * max(m, n) + 1000
    degenerate_run = 0
    it = 0
    while True:
        u, v = _potentials(c, adj, m, n)
        red = c - u[:, None] - v[None, :]
        red[is_basic] = 0.0
        neg = red < -tol
        if not neg.any():
            break
        if it >= max_iter:
            raise RuntimeError("transportation simplex did not converge")
        it += 1
        if degenerate_run >= DEGENERATE_SWITCH:
            flat = int(np.argmax(neg.ravel()))
        else:
            flat = int(np.argmin(red))
        ei, ej = divmod(flat, n)

        path = _tree_path(adj, ei, m + ej, m + n)
        # cycle edges alternate -, +, -, ... starting at the entering row
        minus, plus = [], []
        for t in range(len(path) - 1):
            p, q = path[t], path[t + 1]
            cell = (p, q - m) if p < m else (q, p - m)
            (minus if t % 2 == 0 else plus).append(cell)
        theta = np.inf
        leave = None
        for cell in minus:
            val = x[cell]
            if val < theta - 1e-15 or (abs(val - theta) <= 1e-15 and cell < leave):
                theta, leave = val, cell
        theta = max(theta, 0.0)
        degenerate_run = degenerate_run + 1 if theta <= 1e-15 else 0
        for cell in minus:
            x[cell] -= theta
        for cell in plus:
            x[cell] += theta
        x[ei, ej] = theta
        x[leave] = 0.0
        li, lj = leave
        adj[li].discard(m + lj)
        adj[m + lj].discard(li)
        is_basic[leave] = False
        adj[ei].add(m + ej)
        adj[m + ej].add(ei)
        is_basic[ei, ej] = True

    x = np.clip(x, 0.0, None)
    x[~is_basic] = 0.0
    cost = float(np.sum(c * x))
    return TransportPlan(x=x, cost=cost, u=u, v=v, iterations=it)
