"""Simulation studies: model comparison, error/replicate-error correlation,
and per-voxel replicate-error maps for tabular datasets.

Every trial draws from its own generator spawned from the master seed, so
results do not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .barycenter import wasserstein_barycenter
from .distances import (
    SMOOTHING_PRESETS,
    emd,
    make_metric,
    nearest_angular_error,
    rmise,
    smoothed_skl,
    smoothed_tv,
    wasserstein2,
)
from .estimators import (
    design_matrix,
    fit_bayes,
    fit_best_k_subset,
    fit_nnls,
    nnls_estimator,
    posterior_mean,
)
from .fodf import DiscreteFodf, EmptyFodfError, to_discrete
from .geometry import random_directions, sample_grid
from .resampling import (
    cvrmse,
    kfold_fodfs,
    kfold_replicate_error,
    make_folds,
    posterior_barycenter,
)
from .signal import AcquisitionScheme, SignalSet, simulate

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "UndefinedCorrelationError",
    "MODELS",
    "pearson_corr",
    "orthogonal_pair",
    "random_two_fiber",
    "comparison_metrics",
    "correlation_metrics",
    "run_model_comparison",
    "run_correlation_study",
    "voxel_map",
    "VoxelReport",
]

MODELS = ("bys", "bry", "b2s", "nnls", "cv")


class UndefinedCorrelationError(ValueError):
    """Correlation requested for a series with zero variance."""


@dataclass
class ExperimentConfig:
    """Parameters shared by the simulation studies.

    Defaults follow the two-orthogonal-fiber comparison: ``kappa=1.5``,
    ``sigma2=0.04``, 150 measurement directions, 1000 trials, 20 folds.
    """

    kappas: tuple = (1.5,)
    sigma2: float = 0.04
    s0: float = 1.0
    n_dirs: int = 150
    grid_p: int = 362
    bayes_p: int = 150
    trials: int = 1000
    K_folds: int = 20
    seed: int = 0
    posterior_draws: int = 100
    lambdas: tuple = SMOOTHING_PRESETS
    models: tuple = MODELS
    threads: int = 1

    def __post_init__(self):
        self.kappas = tuple(float(k) for k in np.atleast_1d(self.kappas))
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.models = tuple(self.models)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be nonnegative")
        positive = dict(s0=self.s0, n_dirs=self.n_dirs, grid_p=self.grid_p,
                        bayes_p=self.bayes_p, posterior_draws=self.posterior_draws,
                        threads=self.threads)
        for name, val in positive.items():
            if not val > 0:
                raise ValueError(f"{name} must be positive")
        if any(k <= 0 for k in self.kappas) or any(v <= 0 for v in self.lambdas):
            raise ValueError("kappa and lambda values must be positive")
        if self.K_folds < 2:
            raise ValueError("K_folds must be at least 2")
        unknown = set(self.models) - set(MODELS)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")

    def scheme(self, kappa):
        return AcquisitionScheme(sample_grid(self.n_dirs).points, kappa, self.s0, self.sigma2)

    def to_json(self):
        # thread count never changes results, so it stays out of the echo
        d = asdict(self)
        d.pop("threads")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


@dataclass
class ResultTable:
    """Rows x columns of estimates with Monte Carlo standard errors.

    ``values`` and ``se`` hold NaN where a cell is undefined.
    """

    title: str
    rows: list
    columns: list
    values: np.ndarray
    se: np.ndarray
    n: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def cell(self, row, col):
        return float(self.values[self.rows.index(row), self.columns.index(col)])

    def cell_se(self, row, col):
        return float(self.se[self.rows.index(row), self.columns.index(col)])

    def column(self, col):
        return self.values[:, self.columns.index(col)]

    def to_csv(self):
        """Delimited text: one ``#`` metadata line, a header, then one row per entry."""
        buf = io.StringIO()
        meta = dict(self.meta, version=__version__, title=self.title)
        buf.write("# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + [c for col in self.columns for c in (col, col + "_se")])
        for i, r in enumerate(self.rows):
            cells = []
            for j in range(len(self.columns)):
                cells += [_fmt(self.values[i, j]), _fmt(self.se[i, j])]
            w.writerow([r] + cells)
        return buf.getvalue()


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "undefined"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def pearson_corr(a, b):
    """Sample Pearson correlation of two equal-length series."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length series of at least 2 values")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(da @ da)
    sb = np.sqrt(db @ db)
    if sa == 0 or sb == 0 or not np.isfinite(sa * sb):
        raise UndefinedCorrelationError("correlation undefined for a constant or non-finite series")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def _trial_rngs(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _run(fn, args_list, threads):
    if threads <= 1:
        return [fn(*a) for a in args_list]
    return Parallel(n_jobs=threads)(delayed(fn)(*a) for a in args_list)


# -- ground-truth generators -----------------------------------------------------


def orthogonal_pair(rng):
    """Two orthogonal fibers at a uniformly random orientation, weights 0.5/0.5."""
    v = random_directions(rng, 2)
    a = v[0]
    b = v[1] - (v[1] @ a) * a
    b /= np.linalg.norm(b)
    return DiscreteFodf(np.array([a, b]), np.array([0.5, 0.5]))


def random_two_fiber(rng):
    """Two independent uniform directions with weights ``w1 ~ U(0, 1)``, ``1 - w1``."""
    dirs = random_directions(rng, 2)
    w1 = rng.uniform()
    return DiscreteFodf(dirs, np.array([w1, 1.0 - w1]))


# -- model comparison ----------------------------------------------------------------


def comparison_metrics(lambdas):
    cols = ["AE", "RMISE", "EMD"]
    cols += [f"TV_{_lam(v)}" for v in lambdas]
    cols += [f"SKL_{_lam(v)}" for v in lambdas]
    return cols


def _lam(v):
    return f"{v:g}"


def _comparison_trial(cfg, kappa, truth_fn, rng):
    grid = sample_grid(cfg.grid_p)
    truth = truth_fn(rng)
    scheme = cfg.scheme(kappa)
    signal = simulate(truth, scheme, rng)
    A = design_matrix(grid, scheme)
    estimates = {}
    post = None
    if {"bys", "bry"} & set(cfg.models):
        post = fit_bayes(signal, sample_grid(cfg.bayes_p), max(cfg.sigma2, 1e-8))
    for model in cfg.models:
        if model == "bys":
            estimates[model] = posterior_mean(post)
        elif model == "bry":
            estimates[model] = posterior_barycenter(post, grid, cfg.posterior_draws, rng)
        elif model == "b2s":
            estimates[model] = fit_best_k_subset(signal, grid, 2, A=A).fodf
        elif model == "nnls":
            estimates[model] = fit_nnls(signal, grid, A=A).fodf
        elif model == "cv":
            folds = make_folds(signal.n, cfg.K_folds, rng)
            fits = kfold_fodfs(signal, grid, cfg.K_folds, nnls_estimator, folds=folds)
            estimates[model] = wasserstein_barycenter(fits, grid)
    cols = comparison_metrics(cfg.lambdas)
    out = np.full((len(cfg.models), len(cols)), np.nan)
    for i, model in enumerate(cfg.models):
        f = estimates[model]
        if f is None:
            continue
        row = {}
        if model != "bys":
            row["AE"] = nearest_angular_error(truth, to_discrete(f))
        row["RMISE"] = rmise(truth, f, kappa)
        row["EMD"] = emd(truth, f)
        for lam in cfg.lambdas:
            row[f"TV_{_lam(lam)}"] = smoothed_tv(truth, f, lam, grid)
            row[f"SKL_{_lam(lam)}"] = smoothed_skl(truth, f, lam, grid)
        for j, c in enumerate(cols):
            if c in row:
                out[i, j] = row[c]
    return out


def run_model_comparison(cfg, truth=orthogonal_pair):
    """Mean inaccuracy of each model under each metric.

    For each trial ``truth(rng)`` (by default a random orthogonal
    equal-weight pair) generates one Rician dataset; every model in ``cfg.models`` is fit and scored
    against the truth. AE is left undefined for the continuous Bayes
    posterior mean. Only ``cfg.kappas[0]`` is used.
    """
    kappa = cfg.kappas[0]
    rngs = _trial_rngs(cfg.seed, cfg.trials)
    per_trial = _run(_comparison_trial, [(cfg, kappa, truth, r) for r in rngs], cfg.threads)
    stack = np.stack(per_trial)  # (trials, models, metrics)
    finite = np.isfinite(stack)
    n = finite.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, np.nansum(np.where(finite, stack, np.nan), axis=0) / n, np.nan)
        sd = np.sqrt(np.nansum(np.where(finite, (stack - mean) ** 2, np.nan), axis=0) / (n - 1))
        se = np.where(n > 1, sd / np.sqrt(n), np.nan)
    meta = {"study": "model-comparison", "seed": cfg.seed, "config": json.loads(cfg.to_json())}
    return ResultTable(
        "model comparison", list(cfg.models), comparison_metrics(cfg.lambdas), mean, se, n, meta
    )


# -- correlation study ---------------------------------------------------------------


def correlation_metrics(lambdas):
    cols = ["EMD", "W2"]
    cols += [f"TV_{_lam(v)}" for v in lambdas]
    cols += [f"SKL_{_lam(v)}" for v in lambdas]
    cols += ["RMISE"]
    return cols


def _pair_distances(f, g, kappa, lambdas, grid):
    d = [emd(f, g), wasserstein2(f, g)]
    d += [smoothed_tv(f, g, lam, grid) for lam in lambdas]
    d += [smoothed_skl(f, g, lam, grid) for lam in lambdas]
    d += [rmise(f, g, kappa)]
    return d


def _correlation_trial(cfg, kappa, rng):
    grid = sample_grid(cfg.grid_p)
    scheme = cfg.scheme(kappa)
    A = design_matrix(grid, scheme)
    truth = random_two_fiber(rng)
    y1, y2 = simulate(truth, scheme, rng, replicates=2)
    fit1 = fit_nnls(y1, grid, A=A)
    fit2 = fit_nnls(y2, grid, A=A)
    if fit1.empty or fit2.empty:
        n = len(correlation_metrics(cfg.lambdas))
        return np.full(n, np.nan), np.full(n, np.nan), np.nan
    err = _pair_distances(truth, fit1.fodf, kappa, cfg.lambdas, grid)
    re = _pair_distances(fit1.fodf, fit2.fodf, kappa, cfg.lambdas, grid)
    # S0_hat * st_project(f_hat) on the grid is exactly A @ beta
    pred = A @ fit1.beta
    r = y2.y - pred
    return np.array(err), np.array(re), float(np.sqrt(np.mean(r * r)))


def _fisher_se(r, n):
    return (1.0 - r * r) / np.sqrt(max(n - 1, 1))


def run_correlation_study(cfg):
    """Correlation of error with replicate error, per metric and kappa.

    Each trial draws a random two-fiber truth, two independent Rician
    replicates, and NNLS fits to both. Columns are metrics; the extra
    ``RRMSE`` column correlates RRMSE with ``RE_RMISE`` and ``RRMSE_err``
    correlates it with ``err_RMISE``. Cells with a degenerate series are
    NaN (reported as undefined).
    """
    cols = correlation_metrics(cfg.lambdas) + ["RRMSE", "RRMSE_err"]
    values = np.full((len(cfg.kappas), len(cols)), np.nan)
    se = np.full_like(values, np.nan)
    ns = np.zeros_like(values, dtype=int)
    for ki, kappa in enumerate(cfg.kappas):
        seed = [cfg.seed, ki] if len(cfg.kappas) > 1 else cfg.seed
        rngs = _trial_rngs(seed, cfg.trials)
        res = _run(_correlation_trial, [(cfg, kappa, r) for r in rngs], cfg.threads)
        err = np.array([e for e, _, _ in res])
        re = np.array([r for _, r, _ in res])
        rr = np.array([x for _, _, x in res])
        nm = err.shape[1]
        series = [(err[:, j], re[:, j]) for j in range(nm)]
        series += [(rr, re[:, nm - 1]), (rr, err[:, nm - 1])]
        for j, (a, b) in enumerate(series):
            ok = np.isfinite(a) & np.isfinite(b)
            ns[ki, j] = ok.sum()
            try:
                r = pearson_corr(a[ok], b[ok])
            except (UndefinedCorrelationError, ValueError):
                continue
            values[ki, j] = r
            se[ki, j] = _fisher_se(r, ok.sum())
    meta = {"study": "correlation", "seed": cfg.seed, "config": json.loads(cfg.to_json())}
    rows = [f"kappa={_lam(k)}" for k in cfg.kappas]
    return ResultTable("error vs replicate error correlation", rows, cols, values, se, ns, meta)


# -- voxel maps ------------------------------------------------------------------------


@dataclass
class VoxelReport:
    """Per-voxel K-RE, RE and CVRMSE; `errors` maps voxel id to a message."""

    ids: list
    kre: np.ndarray
    re: np.ndarray
    cvrmse: np.ndarray
    errors: dict
    meta: dict = field(default_factory=dict)

    @property
    def has_re(self):
        return bool(np.isfinite(self.re).any())

    def to_csv(self):
        buf = io.StringIO()
        meta = dict(self.meta, version=__version__)
        buf.write("# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        header = ["voxel", "kre"] + (["re"] if self.has_re else []) + ["cvrmse", "error"]
        w.writerow(header)
        for i, vid in enumerate(self.ids):
            row = [vid, _fmt(self.kre[i])]
            if self.has_re:
                row.append(_fmt(self.re[i]))
            row += [_fmt(self.cvrmse[i]), self.errors.get(vid, "")]
            w.writerow(row)
        return buf.getvalue()


def _voxel_task(dirs, vox, kappa, grid_p, K, metric, rng):
    grid = sample_grid(grid_p)
    scheme = AcquisitionScheme(dirs, kappa)
    y1 = SignalSet(scheme, np.asarray(vox["y1"], dtype=float))
    folds = make_folds(scheme.n, K, rng)
    kre = kfold_replicate_error(y1, grid, K, metric=metric, folds=folds, kappa=kappa).value
    cv = cvrmse(y1, grid, K, folds=folds)
    re = np.nan
    if vox.get("y2") is not None:
        y2 = SignalSet(scheme, np.asarray(vox["y2"], dtype=float))
        f1 = nnls_estimator(y1, grid)
        f2 = nnls_estimator(y2, grid)
        re = make_metric(metric, kappa=kappa, grid=grid)(f1, f2)
    return kre, re, cv


def voxel_map(dataset, kappa, K=10, metric="emd", grid_p=362, seed=0, threads=1):
    """Replicate-error and prediction-error maps for a voxel table.

    Parameters
    ----------
    dataset : dict
        ``{"dirs": n x 3, "voxels": [{"id": ..., "y1": [...], "y2": [...]}, ...]}``;
        ``y2`` is optional per voxel.
    kappa : float
        Stejskal-Tanner shape parameter used for every voxel.

    Malformed voxels are recorded in ``errors`` and skipped.
    """
    dirs = np.asarray(dataset["dirs"], dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    voxels = list(dataset["voxels"])
    rngs = _trial_rngs(seed, max(1, len(voxels)))
    ids = [str(v.get("id", i)) if isinstance(v, dict) else str(i) for i, v in enumerate(voxels)]

    def task(i):
        vox = voxels[i]
        try:
            if not isinstance(vox, dict) or "y1" not in vox:
                raise ValueError("voxel entry needs a 'y1' signal vector")
            return _voxel_task(dirs, vox, kappa, grid_p, K, metric, rngs[i]), None
        except (ValueError, TypeError, EmptyFodfError) as exc:
            return (np.nan, np.nan, np.nan), f"{type(exc).__name__}: {exc}"

    if threads <= 1:
        results = [task(i) for i in range(len(voxels))]
    else:
        results = Parallel(n_jobs=threads)(delayed(task)(i) for i in range(len(voxels)))
    kre = np.array([r[0][0] for r in results], dtype=float)
    re = np.array([r[0][1] for r in results], dtype=float)
    cv = np.array([r[0][2] for r in results], dtype=float)
    errors = {ids[i]: r[1] for i, r in enumerate(results) if r[1]}
    meta = {"study": "voxel-map", "seed": seed, "kappa": kappa, "K": K, "metric": str(metric)}
    return VoxelReport(ids, kre, re, cv, errors, meta)
