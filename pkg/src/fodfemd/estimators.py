"""fODF estimators for the sparse fascicle model.

``fit_nnls`` deconvolves the signal on a direction grid, ``fit_best_k_subset``
restricts the support to exactly ``k_hat`` grid points, and ``fit_bayes``
computes the grid posterior of the two-fiber, equal-weight model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .fodf import DiscreteFodf, EmptyFodfError, GridFodf
from .geometry import DirectionGrid
from .signal import log_i0

__all__ = [
    "MAX_SUBSET_K",
    "design_matrix",
    "lawson_hanson",
    "NnlsFit",
    "BayesPosterior",
    "fit_nnls",
    "fit_best_k_subset",
    "fit_bayes",
    "posterior_mean",
    "posterior_sample",
    "sample_pair_indices",
    "nnls_estimator",
    "b2s_estimator",
    "bayes_mean_estimator",
]

MAX_SUBSET_K = 5


def design_matrix(grid, scheme):
    """``A[i, j] = exp(-kappa * (u_j . x_i)^2)`` for grid points ``u_j``."""
    c = scheme.meas_dirs @ grid.points.T
    return np.exp(-scheme.kappa * c * c)


def lawson_hanson(A, y, tol=1e-10, max_iter=None):
    """Solve ``min ||A b - y||_2`` subject to ``b >= 0``.

    Classic active-set method: the passive set grows by the coordinate
    with the largest positive dual ``w = A^T (y - A b)``, and the inner loop
    steps back along the segment whenever the unconstrained least-squares
    solution on the passive set leaves the feasible region.

    Parameters
    ----------
    A : ndarray (n, p)
    y : ndarray (n,)
    tol : float
        Dual feasibility tolerance, relative to ``max|A^T y|``.

    Returns
    -------
    b : ndarray (p,)
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if max_iter is None:
        max_iter = 3 * p + 100
    b = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    Aty = A.T @ y
    scale = max(1.0, float(np.abs(Aty).max()))
    w = Aty.copy()
    it = 0
    while True:
        cand = np.where(passive, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= tol * scale:
            break
        if it >= max_iter:
            raise RuntimeError("NNLS did not converge")
        passive[j] = True
        while True:
            it += 1
            idx = np.flatnonzero(passive)
            z = np.zeros(p)
            z[idx] = np.linalg.lstsq(A[:, idx], y, rcond=None)[0]
            if np.all(z[idx] > 0):
                b = z
                break
            bad = idx[z[idx] <= 0]
            alpha = np.min(b[bad] / (b[bad] - z[bad]))
            b = b + alpha * (z - b)
            passive &= b > tol * 1e-2
            b[~passive] = 0.0
            if not passive.any():
                break
        w = A.T @ (y - A @ b)
    return b


@dataclass(frozen=True, eq=False)
class NnlsFit:
    """Nonnegative coefficients on the grid and the implied fODF.

    ``fodf`` is ``None`` when every coefficient is zero (no mass to
    normalize); ``s0_hat`` is then 0.
    """

    beta: np.ndarray
    s0_hat: float
    fodf: DiscreteFodf | None
    grid: DirectionGrid
    objective: float

    @property
    def empty(self):
        return self.fodf is None


def _make_fit(beta, grid, objective):
    beta = np.where(beta > 0, beta, 0.0)
    s0 = float(beta.sum())
    if s0 <= 0:
        return NnlsFit(beta, 0.0, None, grid, objective)
    keep = beta > 0
    f = DiscreteFodf(grid.points[keep], beta[keep] / s0)
    return NnlsFit(beta, s0, f, grid, objective)


def fit_nnls(signal, grid, A=None):
    """Unregularized NNLS deconvolution of `signal` on `grid`."""
    if signal.n < 2:
        raise ValueError("NNLS needs at least two measurements")
    if A is None:
        A = design_matrix(grid, signal.scheme)
    y = signal.y
    beta = lawson_hanson(A, y)
    r = y - A @ beta
    return _make_fit(beta, grid, float(r @ r))


def _best_pair(G, Aty, yy):
    # closed-form 2-variable NNLS for every pair i < j; ties -> lowest pair
    p = len(Aty)
    iu, ju = np.triu_indices(p, k=1)
    gii, gjj, gij = G[iu, iu], G[ju, ju], G[iu, ju]
    ai, aj = Aty[iu], Aty[ju]
    det = gii * gjj - gij * gij
    with np.errstate(divide="ignore", invalid="ignore"):
        bi = (gjj * ai - gij * aj) / det
        bj = (gii * aj - gij * ai) / det
    inner = (det > 1e-14 * gii * gjj) & (bi > 0) & (bj > 0)
    obj_inner = yy - (bi * ai + bj * aj)
    # boundary cases: one coefficient at zero
    si = np.maximum(ai, 0.0) / gii
    sj = np.maximum(aj, 0.0) / gjj
    obj_i = yy - si * ai
    obj_j = yy - sj * aj
    obj = np.where(inner, obj_inner, np.inf)
    b1 = np.where(inner, bi, 0.0)
    b2 = np.where(inner, bj, 0.0)
    use_i = obj_i < obj
    obj = np.where(use_i, obj_i, obj)
    b1 = np.where(use_i, si, b1)
    b2 = np.where(use_i, 0.0, b2)
    use_j = obj_j < obj
    obj = np.where(use_j, obj_j, obj)
    b1 = np.where(use_j, 0.0, b1)
    b2 = np.where(use_j, sj, b2)
    k = int(np.argmin(obj))
    return (iu[k], ju[k]), (b1[k], b2[k])


def fit_best_k_subset(signal, grid, k_hat, A=None):
    """Best ``k_hat``-subset NNLS by exhaustive search over grid subsets.

    ``k_hat = 2`` scans all pairs in closed form using ``A^T A``; other
    sizes enumerate subsets explicitly and are only practical on small
    grids for ``k_hat >= 3``. The returned fit may have fewer than
    ``k_hat`` positive coefficients when a boundary solution wins.
    """
    k_hat = int(k_hat)
    if k_hat < 1:
        raise ValueError("k_hat must be at least 1")
    if k_hat > MAX_SUBSET_K:
        raise ValueError(f"k_hat > {MAX_SUBSET_K} refused: brute-force search is combinatorial")
    if k_hat > grid.p:
        raise ValueError("k_hat exceeds the number of grid points")
    if A is None:
        A = design_matrix(grid, signal.scheme)
    y = signal.y
    G = A.T @ A
    Aty = A.T @ y
    yy = float(y @ y)
    beta = np.zeros(grid.p)
    if k_hat == 1:
        b = np.maximum(Aty, 0.0) / np.diag(G)
        obj = yy - b * Aty
        j = int(np.argmin(obj))
        beta[j] = b[j]
    elif k_hat == 2:
        (i, j), (bi, bj) = _best_pair(G, Aty, yy)
        beta[i], beta[j] = bi, bj
    else:
        best = np.inf
        for sub in combinations(range(grid.p), k_hat):
            sub = list(sub)
            b = lawson_hanson(A[:, sub], y)
            r = y - A[:, sub] @ b
            obj = float(r @ r)
            if obj < best:
                best = obj
                beta[:] = 0.0
                beta[sub] = b
    r = y - A @ beta
    return _make_fit(beta, grid, float(r @ r))


@dataclass(frozen=True, eq=False)
class BayesPosterior:
    """Posterior over unordered grid-point pairs ``{u_i, u_j}``, ``i <= j``."""

    grid: DirectionGrid
    pairs: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self):
        return np.exp(self.log_weights)


def _pairs(p, diagonal):
    iu, ju = np.triu_indices(p, k=0 if diagonal else 1)
    return np.column_stack([iu, ju])


def fit_bayes(signal, grid, sigma2, diagonal=True, A=None):
    """Grid posterior for the equal-weight two-fiber model.

    Likelihood is Rician with known `sigma2` and ``s0``; the prior is
    uniform over unordered pairs (including ``{u, u}`` when `diagonal`).
    Only the pair-dependent part of the Rician log density is evaluated;
    the remainder is constant across pairs and cancels on normalization.
    Passing ``signal=None`` (no measurements) returns the prior.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    pairs = _pairs(grid.p, diagonal)
    if signal is None:
        lw = np.full(len(pairs), -np.log(len(pairs)))
        return BayesPosterior(grid, pairs, lw)
    if A is None:
        A = design_matrix(grid, signal.scheme)
    y = signal.y
    s0 = signal.scheme.s0
    loglik = np.zeros(len(pairs))
    step = max(1, 2_000_000 // max(1, signal.n))
    for lo in range(0, len(pairs), step):
        pr = pairs[lo : lo + step]
        mu = 0.5 * s0 * (A[:, pr[:, 0]] + A[:, pr[:, 1]])
        ll = -(mu * mu) / (2 * sigma2) + log_i0(y[:, None] * mu / sigma2)
        loglik[lo : lo + step] = ll.sum(axis=0)
    lw = loglik - logsumexp(loglik)
    return BayesPosterior(grid, pairs, lw)


def posterior_mean(post):
    """Expected fODF: each pair puts 0.5 on both of its points."""
    w = post.weights
    w = w / w.sum()
    out = np.bincount(post.pairs[:, 0], weights=0.5 * w, minlength=post.grid.p)
    out += np.bincount(post.pairs[:, 1], weights=0.5 * w, minlength=post.grid.p)
    return GridFodf(post.grid, out / out.sum())


def sample_pair_indices(post, rng, count):
    """Indices into ``post.pairs`` of `count` independent posterior draws."""
    if count < 1:
        raise ValueError("count must be at least 1")
    w = post.weights
    return rng.choice(len(w), size=count, p=w / w.sum())


def posterior_sample(post, rng, count):
    """Draw `count` pairs from the posterior as two-atom fODFs."""
    idx = sample_pair_indices(post, rng, count)
    pts = post.grid.points
    half = np.array([0.5, 0.5])
    return [DiscreteFodf(pts[post.pairs[k]], half) for k in idx]


# -- estimator callables: (signal, grid) -> fODF -------------------------------


def _nnls_fodf(signal, grid):
    fit = fit_nnls(signal, grid)
    if fit.empty:
        raise EmptyFodfError("NNLS returned all-zero coefficients")
    return fit.fodf


def _b2s_fodf(signal, grid, k_hat=2):
    fit = fit_best_k_subset(signal, grid, k_hat)
    if fit.empty:
        raise EmptyFodfError("best-subset fit returned all-zero coefficients")
    return fit.fodf


def _bayes_mean_fodf(signal, grid, sigma2):
    return posterior_mean(fit_bayes(signal, grid, sigma2))


nnls_estimator = _nnls_fodf


def b2s_estimator(k_hat=2):
    return partial(_b2s_fodf, k_hat=k_hat)


def bayes_mean_estimator(sigma2):
    return partial(_bayes_mean_fodf, sigma2=sigma2)
