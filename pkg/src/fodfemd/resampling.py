"""Cross-validation, replicate error and resampled barycenters."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .barycenter import wasserstein_barycenter
from .distances import make_metric
from .estimators import fit_nnls, nnls_estimator, posterior_sample
from .fodf import EmptyFodfError, st_project
from .signal import SignalSet, add_rician_noise, predict_signal

__all__ = [
    "FoldPartition",
    "ReplicateReport",
    "make_folds",
    "kfold_fodfs",
    "cvrmse",
    "rrmse",
    "replicate_error",
    "kfold_replicate_error",
    "kre_correction",
    "parametric_bootstrap",
    "kfold_barycenter",
    "posterior_barycenter",
    "SchemeMismatchError",
]


class SchemeMismatchError(ValueError):
    """Replicates measured with different acquisition schemes."""


@dataclass(frozen=True, eq=False)
class FoldPartition:
    """Fold id per measurement; folds differ in size by at most one."""

    K: int
    assignment: np.ndarray

    def fold(self, k):
        return np.flatnonzero(self.assignment == k)

    def complement(self, k):
        return np.flatnonzero(self.assignment != k)


def make_folds(n, K, rng):
    """Random partition of ``range(n)`` into `K` near-equal folds."""
    if K < 2:
        raise ValueError("K must be at least 2")
    if K > n:
        raise ValueError(f"cannot split {n} measurements into {K} non-empty folds")
    assignment = np.empty(n, dtype=int)
    assignment[rng.permutation(n)] = np.arange(n) % K
    return FoldPartition(K, assignment)


def _fold_fits(signal, grid, folds, estimator):
    return [estimator(signal.subset(folds.complement(k)), grid) for k in range(folds.K)]


def kfold_fodfs(signal, grid, K, estimator=nnls_estimator, rng=None, folds=None):
    """Fit `estimator` once per fold, each time leaving that fold out.

    Requires ``n >= 2K``. The partition is drawn once from `rng` unless
    an explicit `folds` is given.
    """
    if signal.n < 2 * K:
        raise ValueError(f"K-fold needs n >= 2K (n={signal.n}, K={K})")
    if folds is None:
        folds = make_folds(signal.n, K, rng)
    return _fold_fits(signal, grid, folds, estimator)


def _s0_hat(signal, grid):
    fit = fit_nnls(signal, grid)
    if fit.empty:
        raise EmptyFodfError("cannot estimate S0 from an all-zero NNLS fit")
    return fit.s0_hat


def cvrmse(signal, grid, K, estimator=nnls_estimator, rng=None, folds=None):
    """Cross-validated root-mean-square prediction error.

    ``S0_hat`` is the L1 norm of the full-data NNLS coefficients and is
    shared by all folds. Any ``2 <= K <= n`` works (``K = n`` is
    leave-one-out).
    """
    if folds is None:
        folds = make_folds(signal.n, K, rng)
    s0 = _s0_hat(signal, grid)
    kappa = signal.scheme.kappa
    x = signal.scheme.meas_dirs
    sq = 0.0
    for k, f in enumerate(_fold_fits(signal, grid, folds, estimator)):
        out = folds.fold(k)
        r = signal.y[out] - s0 * st_project(f, kappa, x[out])
        sq += float(r @ r)
    return float(np.sqrt(sq / signal.n))


def rrmse(signal1, signal2, grid, estimator=nnls_estimator):
    """RMS error of the fit to `signal1` in predicting the raw `signal2`."""
    if not signal1.scheme.same_as(signal2.scheme):
        raise SchemeMismatchError("replicates use different acquisition schemes")
    f = estimator(signal1, grid)
    s0 = _s0_hat(signal1, grid)
    pred = s0 * st_project(f, signal1.scheme.kappa, signal1.scheme.meas_dirs)
    r = signal2.y - pred
    return float(np.sqrt(np.mean(r * r)))


def replicate_error(f1, f2, metric="emd", **kw):
    """Distance between fits to two independent replicates."""
    return make_metric(metric, **kw)(f1, f2)


@dataclass(frozen=True, eq=False)
class ReplicateReport:
    metric: str
    value: float
    K: int | None = None
    pair_distances: np.ndarray | None = field(default=None, repr=False)


def kre_correction(K):
    """Multiplier ``(K - 1) / sqrt(K)`` applied to the mean pairwise distance."""
    return (K - 1) / np.sqrt(K)


def kfold_replicate_error(
    signal, grid, K, estimator=nnls_estimator, metric="emd", rng=None, folds=None, **metric_kw
):
    """K-fold replicate error: corrected mean distance between fold fits."""
    fits = kfold_fodfs(signal, grid, K, estimator, rng, folds)
    dist = make_metric(metric, **metric_kw)
    D = np.zeros((K, K))
    for i, j in combinations(range(K), 2):
        D[i, j] = D[j, i] = dist(fits[i], fits[j])
    iu = np.triu_indices(K, k=1)
    value = kre_correction(K) * float(np.mean(D[iu]))
    return ReplicateReport(str(metric), value, K, D)


def parametric_bootstrap(f0, scheme, sigma2_hat, B, estimator, grid, rng):
    """Refit `estimator` to `B` Rician datasets simulated from `f0`.

    Each replicate draws from its own child stream of `rng`.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    mu = predict_signal(f0, scheme)
    out = []
    for child in rng.spawn(B):
        y = add_rician_noise(mu, sigma2_hat, child)
        out.append(estimator(SignalSet(scheme, y), grid))
    return out


def kfold_barycenter(signal, grid, K=20, estimator=nnls_estimator, rng=None, folds=None):
    """EMD barycenter of the K leave-one-fold-out fits."""
    return wasserstein_barycenter(kfold_fodfs(signal, grid, K, estimator, rng, folds), grid)


def posterior_barycenter(post, grid, N, rng):
    """EMD barycenter of `N` posterior draws (repeated draws are pooled)."""
    samples = posterior_sample(post, rng, N)
    keys = [s.dirs.tobytes() for s in samples]
    uniq, counts = {}, {}
    for key, s in zip(keys, samples):
        uniq.setdefault(key, s)
        counts[key] = counts.get(key, 0) + 1
    order = sorted(uniq, key=keys.index)
    return wasserstein_barycenter(
        [uniq[k] for k in order], grid, weights=np.array([counts[k] for k in order], float)
    )
