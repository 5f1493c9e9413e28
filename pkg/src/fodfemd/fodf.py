"""fODF containers, kernel smoothing and the Stejskal-Tanner projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import DirectionGrid, as_directions, canonical, cost_matrix, nearest_index

__all__ = [
    "DiscreteFodf",
    "GridFodf",
    "EmptyFodfError",
    "MERGE_TOL",
    "WEIGHT_TOL",
    "atoms_of",
    "snap_to_grid",
    "smooth",
    "smooth_log",
    "st_project",
    "to_discrete",
]

MERGE_TOL = 1e-9
WEIGHT_TOL = 1e-9


class EmptyFodfError(ValueError):
    """Raised when an estimate carries no mass (e.g. an all-zero NNLS fit)."""


def _check_weights(w, tol):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be a vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"weights must sum to 1 (got {total:.12g})")
    return w


@dataclass(frozen=True, eq=False)
class DiscreteFodf:
    """Finite mixture of Dirac atoms on the projective plane.

    Atoms closer than ``MERGE_TOL`` radians are merged, zero-weight atoms
    dropped and weights renormalized to sum exactly to one.
    """

    dirs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        dirs = canonical(as_directions(self.dirs))
        if np.size(self.weights) == 0:
            raise EmptyFodfError("fODF has no atoms")
        w = _check_weights(self.weights, 1e-6)
        if len(w) != len(dirs):
            raise ValueError("one weight per atom required")
        keep = w > 0
        dirs, w = dirs[keep], w[keep]
        if len(w) == 0:
            raise EmptyFodfError("fODF has no atoms")
        dirs, w = _merge(dirs, w)
        w = w / w.sum()
        dirs.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "dirs", dirs)
        object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, v):
        return cls(np.asarray(v, dtype=float)[None, :], np.ones(1))

    @property
    def k(self):
        return len(self.weights)

    def __len__(self):
        return self.k


def _merge(dirs, w):
    if len(w) == 1:
        return dirs, w
    d = cost_matrix(dirs, dirs)
    out_d, out_w = [], []
    used = np.zeros(len(w), dtype=bool)
    for i in range(len(w)):
        if used[i]:
            continue
        group = (~used) & (d[i] < MERGE_TOL)
        used |= group
        out_d.append(dirs[i])
        out_w.append(w[group].sum())
    return np.array(out_d), np.array(out_w)


@dataclass(frozen=True, eq=False)
class GridFodf:
    """Probability weights over a fixed `DirectionGrid`."""

    grid: DirectionGrid
    weights: np.ndarray

    def __post_init__(self):
        w = _check_weights(self.weights, WEIGHT_TOL)
        if len(w) != self.grid.p:
            raise ValueError("weights length must equal grid size")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, grid):
        return cls(grid, np.full(grid.p, 1.0 / grid.p))


def atoms_of(f):
    """Return ``(dirs, weights)`` of the support of any fODF, zero weights pruned."""
    if isinstance(f, DiscreteFodf):
        return f.dirs, f.weights
    if isinstance(f, GridFodf):
        keep = f.weights > 0
        return f.grid.points[keep], f.weights[keep]
    raise TypeError(f"not an fODF: {type(f).__name__}")


def to_discrete(f):
    """View a `GridFodf` as atoms on its nonzero grid points."""
    if isinstance(f, DiscreteFodf):
        return f
    dirs, w = atoms_of(f)
    return DiscreteFodf(dirs, w / w.sum())


def snap_to_grid(f, grid):
    """Move every atom's mass to its nearest grid point."""
    if isinstance(f, GridFodf) and f.grid == grid:
        return f
    dirs, w = atoms_of(f)
    idx = nearest_index(dirs, grid)
    out = np.bincount(idx, weights=w, minlength=grid.p)
    return GridFodf(grid, out / out.sum())


def smooth_log(f, lam, grid):
    """Log-weights of the smoothed fODF on `grid`.

    Each atom is spread with ``exp(-lam * d_arc**2 / 2)`` normalized over
    the grid, so every atom keeps its own mass. Working in logs keeps
    far-tail weights finite for large `lam`.
    """
    if not lam > 0:
        raise ValueError("smoothing parameter lambda must be positive")
    dirs, w = atoms_of(f)
    d = cost_matrix(grid.points, dirs)
    logk = -0.5 * lam * d * d
    logk -= logsumexp(logk, axis=0)
    return logsumexp(logk + np.log(w)[None, :], axis=1)


def smooth(f, lam, grid):
    """Gaussian smoothing in arc length, returned as a `GridFodf`."""
    logw = smooth_log(f, lam, grid)
    w = np.exp(logw - logsumexp(logw))
    return GridFodf(grid, w / w.sum())


def st_project(f, kappa, eval_dirs):
    """Stejskal-Tanner projection ``sum_j w_j exp(-kappa (x . v_j)^2)``.

    Evaluated at each row of `eval_dirs`.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    dirs, w = atoms_of(f)
    x = as_directions(eval_dirs)
    c = x @ dirs.T
    return np.exp(-kappa * c * c) @ w
