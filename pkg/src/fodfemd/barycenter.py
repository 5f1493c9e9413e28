"""Wasserstein (EMD) barycenters of atomic fODFs on a direction grid.

The barycenter ``w`` on grid points ``u_l`` minimizes
``sum_i lam_i * EMD(f_i, w)``. As a linear program the variables are the
plans ``x[l, i, j]`` from grid point ``l`` to atom ``j`` of input ``i``:

    minimize   sum lam_i d(u_l, v_ij) x[l, i, j]
    subject to sum_l x[l, i, j] = w_ij          (every atom fully served)
               sum_j x[l, i, j] = w_l           (same marginal for each input)

so ``w_l = (1/K) sum_ij x[l, i, j]`` when the inputs carry equal weight.

Only a few grid points carry mass, so the LP is solved on a candidate set
of grid points and grown by pricing: with atom duals ``alpha_ij`` a point
``l`` outside the set can lower the objective iff
``sum_i min_j (lam_i d(u_l, v_ij) - alpha_ij) < 0``. When no point prices
out the restricted optimum is optimal for the full grid.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .fodf import GridFodf, atoms_of
from .geometry import cost_matrix, nearest_index

__all__ = ["BarycenterResult", "barycenter_lp", "wasserstein_barycenter"]

PRICE_TOL = 1e-9
ADD_PER_ROUND = 24


class BarycenterResult:
    """Barycenter weights plus the LP objective and solver bookkeeping."""

    def __init__(self, fodf, objective, rounds, support_size):
        self.fodf = fodf
        self.objective = objective
        self.rounds = rounds
        self.support_size = support_size


def _solve_restricted(cost, owner, mass, lam, K):
    # cost: (s, na) ground costs from candidate points to atoms
    s, na = cost.shape
    nx = s * na
    L, A = np.meshgrid(np.arange(s), np.arange(na), indexing="ij")
    var = (L * na + A).ravel()
    rows = [A.ravel(), na + owner[A.ravel()] * s + L.ravel()]
    cols = [var, var]
    vals = [np.ones(nx), np.ones(nx)]
    ii, ll = np.meshgrid(np.arange(K), np.arange(s), indexing="ij")
    rows.append(na + ii.ravel() * s + ll.ravel())
    cols.append(nx + ll.ravel())
    vals.append(-np.ones(K * s))
    A_eq = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(na + K * s, nx + s),
    )
    b_eq = np.concatenate([mass, np.zeros(K * s)])
    c = np.concatenate([(cost * lam[owner][None, :]).ravel(), np.zeros(s)])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"barycenter LP failed: {res.message}")
    alpha = res.eqlin.marginals[:na]
    return res.x[nx:], res.fun, alpha


def barycenter_lp(fodfs, grid, weights=None, max_rounds=200):
    """Solve the barycenter LP exactly over all points of `grid`.

    Parameters
    ----------
    fodfs : sequence of fODFs
        Inputs; gridded inputs are treated as atoms on their nonzero points.
    grid : DirectionGrid
        Candidate support of the barycenter.
    weights : array_like, optional
        Relative weight of each input (default equal), normalized to 1.

    Returns
    -------
    BarycenterResult
    """
    fodfs = list(fodfs)
    if not fodfs:
        raise ValueError("barycenter of an empty list")
    K = len(fodfs)
    lam = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
    if lam.shape != (K,) or np.any(lam <= 0):
        raise ValueError("input weights must be positive, one per fODF")
    lam = lam / lam.sum()

    parts = [atoms_of(f) for f in fodfs]
    dirs = np.vstack([d for d, _ in parts])
    mass = np.concatenate([w / w.sum() for _, w in parts])
    owner = np.concatenate([np.full(len(w), i) for i, (_, w) in enumerate(parts)])
    full = cost_matrix(grid.points, dirs)  # (p, na)
    weighted = full * lam[owner][None, :]

    cand = np.unique(nearest_index(dirs, grid))
    rounds = 0
    while True:
        rounds += 1
        w_c, obj, alpha = _solve_restricted(full[cand], owner, mass, lam, K)
        slack = weighted - alpha[None, :]
        per_input = np.full((grid.p, K), np.inf)
        for i in range(K):
            per_input[:, i] = slack[:, owner == i].min(axis=1)
        price = per_input.sum(axis=1)
        price[cand] = 0.0
        bad = np.flatnonzero(price < -PRICE_TOL * max(1.0, abs(obj)))
        if len(bad) == 0 or rounds >= max_rounds:
            break
        bad = bad[np.argsort(price[bad], kind="stable")][:ADD_PER_ROUND]
        cand = np.union1d(cand, bad)

    w = np.zeros(grid.p)
    w[cand] = np.clip(w_c, 0.0, None)
    w[w < 1e-12] = 0.0
    f = GridFodf(grid, w / w.sum())
    return BarycenterResult(f, float(obj), rounds, int(np.count_nonzero(w)))


def wasserstein_barycenter(fodfs, grid, weights=None):
    """EMD barycenter of `fodfs` supported on `grid`, as a `GridFodf`."""
    return barycenter_lp(fodfs, grid, weights).fodf
