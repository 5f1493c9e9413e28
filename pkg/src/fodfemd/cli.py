"""Command-line front end.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are
flag names, e.g. ``{"kappa": 1.5, "trials": 200}``); explicit flags win
over the file. All randomness comes from ``--seed`` (default 0).

Exit codes: 0 success, 2 usage or input error, 3 the computation is not
defined for the given inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .barycenter import barycenter_lp
from .distances import (
    GridMismatchError,
    UndefinedDistanceError,
    distance,
    make_metric,
    parse_metric,
)
from .estimators import (
    b2s_estimator,
    fit_bayes,
    fit_best_k_subset,
    fit_nnls,
    nnls_estimator,
    posterior_mean,
)
from .experiments import (
    ExperimentConfig,
    UndefinedCorrelationError,
    orthogonal_pair,
    run_correlation_study,
    run_model_comparison,
    voxel_map,
)
from .fodf import EmptyFodfError
from .geometry import sample_grid
from .io import (
    FormatError,
    atomic_write,
    read_directions,
    read_fodf,
    read_signal,
    read_voxels,
    write_fodf,
    write_json,
    write_signal,
)
from .resampling import kfold_barycenter, kfold_replicate_error, posterior_barycenter
from .signal import AcquisitionScheme, simulate
from .transport import TransportError

EXIT_USAGE = 2
EXIT_DOMAIN = 3

MODEL_IDS = ("nnls", "b2s", "bayes-mean", "kfold-bary", "post-bary")
STUDIES = ("model-comparison", "correlation", "voxel-map")


class UsageError(Exception):
    """Bad flags, config values or inputs."""


# -- flag tables ------------------------------------------------------------------
# (flag, dest, type, default, help, extra argparse kwargs)

_SEED = ("--seed", "seed", int, 0, "master random seed", {})
_GRID = ("--grid-p", "grid_p", int, 362, "size of the estimation grid", {})

FLAGS = {
    "simulate": [
        ("--truth", "truth", str, None, "built-in ground truth", {"choices": ["orthogonal-pair"]}),
        ("--fodf", "fodf", str, None, "ground-truth fODF file (instead of --truth)", {}),
        ("--kappa", "kappa", float, 1.5, "Stejskal-Tanner shape parameter", {}),
        ("--sigma2", "sigma2", float, 0.04, "Rician noise variance", {}),
        ("--s0", "s0", float, 1.0, "signal scale", {}),
        ("--n", "n", int, 150, "number of measurement directions (standard grid)", {}),
        ("--dirs", "dirs", str, None, "table with bx,by,bz columns to use as directions", {}),
        ("--replicates", "replicates", int, 1, "independent replicates to write", {"choices": [1, 2]}),
        _SEED,
        ("--out", "out", str, None, "output signal file; replicate k goes to NAME_rk.EXT", {}),
        ("--truth-out", "truth_out", str, None, "also write the ground-truth fODF here", {}),
    ],
    "estimate": [
        ("--signal", "signal", str, None, "input signal file", {}),
        ("--model", "model", str, "nnls", "estimator", {"choices": list(MODEL_IDS)}),
        ("--kappa", "kappa", float, None, "shape parameter (default: from the signal file)", {}),
        ("--sigma2", "sigma2", float, None, "noise variance for Bayes models (default: from file)", {}),
        ("--s0", "s0", float, None, "signal scale for Bayes models (default: from file)", {}),
        ("--k", "k", int, 2, "number of atoms for b2s", {}),
        _GRID,
        ("--bayes-p", "bayes_p", int, 150, "grid size of the Bayes posterior", {}),
        ("--folds", "folds", int, 20, "K for kfold-bary", {}),
        ("--draws", "draws", int, 100, "posterior draws for post-bary", {}),
        _SEED,
        ("--out", "out", str, None, "output fODF file", {}),
    ],
    "distance": [
        ("--metric", "metric", str, "emd", "emd|w2|tv|stv|skl|sskl|ae|rmise", {}),
        ("--lambda", "lam", float, None, "smoothing parameter for stv/sskl", {}),
        ("--kappa", "kappa", float, None, "shape parameter for rmise", {}),
        ("--grid-p", "grid_p", int, None, "grid for histogram metrics (default: exact or 362)", {}),
    ],
    "replicate-error": [
        ("--signal", "signal", str, None, "signal file", {}),
        ("--signal2", "signal2", str, None, "second replicate; gives plain replicate error", {}),
        ("--metric", "metric", str, "emd", "distance, e.g. emd or stv:10", {}),
        ("--lambda", "lam", float, None, "smoothing parameter for stv/sskl", {}),
        ("--kappa", "kappa", float, None, "shape parameter (default: from the signal file)", {}),
        ("--model", "model", str, "nnls", "estimator", {"choices": ["nnls", "b2s"]}),
        ("--folds", "folds", int, 10, "K for the K-fold replicate error", {}),
        _GRID,
        _SEED,
        ("--out", "out", str, None, "report file (default: standard output)", {}),
    ],
    "barycenter": [
        _GRID,
        ("--weights", "weights", float, None, "relative weight per input", {"nargs": "+"}),
        ("--out", "out", str, None, "output fODF file", {}),
    ],
    "reproduce": [
        ("--study", "study", str, None, "which study", {"choices": list(STUDIES)}),
        ("--trials", "trials", int, None, "trials (default 1000 comparison, 2000 correlation)", {}),
        ("--kappa", "kappa", float, None, "kappa value(s)", {"nargs": "+"}),
        ("--sigma2", "sigma2", float, 0.04, "noise variance", {}),
        ("--n", "n", int, 150, "measurement directions", {}),
        _GRID,
        ("--bayes-p", "bayes_p", int, 150, "Bayes posterior grid size", {}),
        ("--folds", "folds", int, None, "K (default 20 comparison, 10 voxel-map)", {}),
        ("--draws", "draws", int, 100, "posterior draws for the posterior barycenter", {}),
        ("--dataset", "dataset", str, None, "voxel dataset (voxel-map)", {}),
        ("--metric", "metric", str, "emd", "replicate-error metric (voxel-map)", {}),
        _SEED,
        ("--threads", "threads", int, 1, "worker processes; results do not depend on it", {}),
        ("--out", "out", str, None, "output table (default STUDY.csv)", {}),
        ("--check", "check", bool, False, "compare against the reference targets", {}),
    ],
}

POSITIONAL = {
    "distance": [("fodf1", "first fODF file", None), ("fodf2", "second fODF file", None)],
    "barycenter": [("fodfs", "input fODF files", "+")],
}

HELP = {
    "simulate": "simulate Rician signal from a ground-truth fODF",
    "estimate": "estimate an fODF from a signal file",
    "distance": "distance between two fODF files",
    "replicate-error": "replicate error or K-fold replicate error of a fit",
    "barycenter": "EMD barycenter of fODF files on a grid",
    "reproduce": "run a simulation study and write its table",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="fodfemd", description="fODF estimation and distances.")
    parser.add_argument("--version", action="version", version=f"fodfemd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, flags in FLAGS.items():
        p = sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd],
                           argument_default=argparse.SUPPRESS)
        for name, helptext, nargs in POSITIONAL.get(cmd, []):
            p.add_argument(name, help=helptext, nargs=nargs)
        p.add_argument("--config", help="JSON file of flag values (flags win)")
        for flag, dest, typ, default, helptext, extra in flags:
            shown = f"{helptext} (default: {default})" if default is not None else helptext
            if typ is bool:
                p.add_argument(flag, dest=dest, action="store_true", help=helptext)
            else:
                p.add_argument(flag, dest=dest, type=typ, help=shown, **extra)
    return parser


def _coerce(cmd, key, value):
    for flag, dest, typ, _, _, extra in FLAGS[cmd]:
        if dest != key:
            continue
        try:
            if extra.get("nargs") == "+":
                vals = value if isinstance(value, list) else [value]
                return [typ(v) for v in vals]
            if typ is bool:
                if not isinstance(value, bool):
                    raise ValueError
                return value
            out = typ(value)
            if typ is int and out != value:
                raise ValueError
        except (TypeError, ValueError):
            raise UsageError(f"config value for {key!r} is not a valid {typ.__name__}") from None
        if "choices" in extra and out not in extra["choices"]:
            raise UsageError(f"config value for {key!r} must be one of {extra['choices']}")
        return out
    raise UsageError(f"unknown config key {key!r} for '{cmd}'")


def resolve(ns):
    """Merge defaults, the optional config file and explicit flags."""
    given = vars(ns).copy()
    cmd = given.pop("command")
    params = {dest: default for _, dest, _, default, _, _ in FLAGS[cmd]}
    path = given.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in cfg.items():
            key = key.replace("-", "_")
            key = {"lambda": "lam", "K": "folds"}.get(key, key)
            params[key] = _coerce(cmd, key, value)
    params.update(given)
    return cmd, params


def _need(params, *keys):
    for k in keys:
        if params.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _positive(params, *keys):
    for k in keys:
        v = params.get(k)
        if v is not None and not v > 0:
            raise UsageError(f"--{k.replace('_', '-')} must be positive (got {v})")


def _nonneg(params, *keys):
    for k in keys:
        v = params.get(k)
        if v is not None and not v >= 0:
            raise UsageError(f"--{k.replace('_', '-')} must be nonnegative (got {v})")


def _echo(obj):
    print(json.dumps(obj, sort_keys=True))


# -- commands ---------------------------------------------------------------------


def cmd_simulate(p):
    _need(p, "out")
    if (p["truth"] is None) == (p["fodf"] is None):
        raise UsageError("give exactly one of --truth or --fodf")
    _positive(p, "kappa", "s0", "n")
    _nonneg(p, "sigma2")
    rng = np.random.default_rng(p["seed"])
    truth = orthogonal_pair(rng) if p["truth"] else read_fodf(p["fodf"])
    dirs = read_directions(p["dirs"]) if p["dirs"] else sample_grid(p["n"]).points
    scheme = AcquisitionScheme(dirs, p["kappa"], p["s0"], p["sigma2"])
    sets = simulate(truth, scheme, rng, replicates=p["replicates"])
    sets = sets if isinstance(sets, list) else [sets]
    out = Path(p["out"])
    paths = [out] if len(sets) == 1 else [
        out.with_name(f"{out.stem}_r{k + 1}{out.suffix}") for k in range(len(sets))
    ]
    for k, (path, s) in enumerate(zip(paths, sets)):
        write_signal(path, s, seed=p["seed"], replicate=k + 1)
    if p["truth_out"]:
        write_fodf(p["truth_out"], truth, seed=p["seed"])
    _echo({"command": "simulate", "files": [str(x) for x in paths],
           "kappa": p["kappa"], "sigma2": p["sigma2"], "s0": p["s0"],
           "n": scheme.n, "seed": p["seed"]})


def _estimate(p, signal):
    grid = sample_grid(p["grid_p"])
    model = p["model"]
    rng = np.random.default_rng(p["seed"])
    if model == "nnls":
        fit = fit_nnls(signal, grid)
        if fit.empty:
            raise EmptyFodfError("NNLS returned all-zero coefficients")
        return fit.fodf
    if model == "b2s":
        fit = fit_best_k_subset(signal, grid, p["k"])
        if fit.empty:
            raise EmptyFodfError("best-subset fit returned all-zero coefficients")
        return fit.fodf
    if model == "kfold-bary":
        return kfold_barycenter(signal, grid, p["folds"], rng=rng)
    sigma2 = signal.scheme.sigma2
    if not sigma2 > 0:
        raise UsageError("Bayes models need a positive --sigma2 (none in flags or file)")
    post = fit_bayes(signal, sample_grid(p["bayes_p"]), sigma2)
    if model == "bayes-mean":
        return posterior_mean(post)
    return posterior_barycenter(post, grid, p["draws"], rng)


def cmd_estimate(p):
    _need(p, "signal", "out")
    _positive(p, "kappa", "s0", "k", "grid_p", "bayes_p", "draws")
    _nonneg(p, "sigma2")
    if p["folds"] < 2:
        raise UsageError("--folds must be at least 2")
    signal, _ = read_signal(p["signal"], p["kappa"], p["s0"], p["sigma2"])
    f = _estimate(p, signal)
    write_fodf(p["out"], f, model=p["model"], seed=p["seed"], kappa=signal.scheme.kappa)
    _echo({"command": "estimate", "model": p["model"], "out": p["out"]})


def _metric_spec(p):
    name, lam = parse_metric(p["metric"]) if ":" in p["metric"] else (p["metric"], None)
    if p.get("lam") is not None:
        lam = p["lam"]
    if name in ("stv", "sskl") and lam is None:
        raise UsageError(f"metric {name} needs --lambda")
    _positive({"lambda": lam}, "lambda")
    return name, lam


def cmd_distance(p):
    name, lam = _metric_spec(p)
    parse_metric(name if lam is None or name not in ("stv", "sskl") else f"{name}:{lam}")
    if name == "rmise" and p["kappa"] is None:
        raise UsageError("rmise needs --kappa")
    _positive(p, "kappa", "grid_p")
    f1, f2 = read_fodf(p["fodf1"]), read_fodf(p["fodf2"])
    grid = sample_grid(p["grid_p"]) if p["grid_p"] else None
    value = distance(name, f1, f2, lam=lam, kappa=p["kappa"], grid=grid)
    print(f"{value:.12g}")


def cmd_replicate_error(p):
    _need(p, "signal")
    name, lam = _metric_spec(p)
    spec = f"{name}:{lam:g}" if lam is not None else name
    parse_metric(spec)
    _positive(p, "kappa", "grid_p")
    grid = sample_grid(p["grid_p"])
    signal, _ = read_signal(p["signal"], p["kappa"])
    kappa = signal.scheme.kappa
    estimator = nnls_estimator if p["model"] == "nnls" else b2s_estimator(2)
    if p["signal2"]:
        signal2, _ = read_signal(p["signal2"], kappa)
        value = distance(name, estimator(signal, grid), estimator(signal2, grid),
                         lam=lam, kappa=kappa, grid=grid)
        report = {"metric": spec, "value": value, "K": None, "pair_distances": None}
    else:
        if p["folds"] < 2:
            raise UsageError("--folds must be at least 2")
        if signal.n < 2 * p["folds"]:
            raise UsageError(f"--folds {p['folds']} needs at least {2 * p['folds']} measurements")
        metric = make_metric(spec, kappa=kappa, grid=grid)
        rep = kfold_replicate_error(signal, grid, p["folds"], estimator, metric,
                                    rng=np.random.default_rng(p["seed"]))
        report = {"metric": spec, "value": rep.value, "K": rep.K,
                  "pair_distances": rep.pair_distances.tolist()}
    report.update(model=p["model"], seed=p["seed"])
    if p["out"]:
        write_json(p["out"], report)
    else:
        print(json.dumps(dict(report, version=__version__), sort_keys=True))


def cmd_barycenter(p):
    _need(p, "out")
    _positive(p, "grid_p")
    fodfs = [read_fodf(f) for f in p["fodfs"]]
    w = p["weights"]
    if w is not None and (len(w) != len(fodfs) or min(w) <= 0):
        raise UsageError("--weights needs one positive value per input")
    res = barycenter_lp(fodfs, sample_grid(p["grid_p"]), w)
    write_fodf(p["out"], res.fodf, objective=res.objective, inputs=len(fodfs))
    _echo({"command": "barycenter", "objective": res.objective, "out": p["out"],
           "support": res.support_size})


# -- reproduce ------------------------------------------------------------------------

# reference values quoted for the two studies: (column, kappa, target, tolerance)
CORRELATION_TARGETS = [
    ("EMD", 0.1, 0.45, 0.06),
    ("EMD", 1.0, 0.52, 0.06),
    ("TV_1", 1.0, 0.55, 0.06),
    ("TV_10", 2.0, 0.55, 0.06),
]
CORRELATION_FLOOR = 0.38
RATIO_TARGETS = [("EMD", 1.9, 0.3), ("TV_1", 1.3, 0.2), ("TV_10", 1.3, 0.2), ("TV_100", 1.2, 0.2)]
DOMINANCE_METRICS = ["EMD", "RMISE", "TV_1", "TV_10", "TV_100", "SKL_1", "SKL_10", "SKL_100"]


def check_correlation(table):
    """Pass/fail lines for a correlation table against the reference values."""
    out = []
    kappas = [float(r.split("=")[1]) for r in table.rows]
    for row, k in zip(table.rows, kappas):
        r = table.cell(row, "EMD")
        out.append((f"corr EMD > {CORRELATION_FLOOR} at kappa={k:g}", r > CORRELATION_FLOOR, r))
    for col, k, target, tol in CORRELATION_TARGETS:
        if k in kappas and col in table.columns:
            r = table.cell(table.rows[kappas.index(k)], col)
            out.append((f"corr {col} = {target} +- {tol} at kappa={k:g}", abs(r - target) <= tol, r))
    return out


def check_comparison(table):
    out = []
    for col, target, tol in RATIO_TARGETS:
        if col in table.columns:
            v = table.column(col)
            ratio = float(np.nanmax(v) / np.nanmin(v))
            out.append((f"{col} max/min ratio = {target} +- {tol}", abs(ratio - target) <= tol, ratio))
    if "cv" in table.rows and "nnls" in table.rows:
        for col in DOMINANCE_METRICS:
            if col not in table.columns:
                continue
            diff = table.cell("cv", col) - table.cell("nnls", col)
            margin = 2 * np.hypot(table.cell_se("cv", col), table.cell_se("nnls", col))
            out.append((f"cv <= nnls on {col} (2 SE margin)", diff <= margin, diff))
    return out


def cmd_reproduce(p):
    _need(p, "study")
    study = p["study"]
    _positive(p, "trials", "n", "grid_p", "bayes_p", "draws", "threads")
    _nonneg(p, "sigma2")
    if p["kappa"] is not None:
        _positive({"kappa": min(p["kappa"])}, "kappa")
    out = p["out"] or f"{study}.csv"
    checks = []
    if study == "voxel-map":
        _need(p, "dataset")
        if not p["kappa"] or len(p["kappa"]) != 1:
            raise UsageError("voxel-map needs a single --kappa")
        K = p["folds"] or 10
        if K < 2:
            raise UsageError("--folds must be at least 2")
        parse_metric(p["metric"])
        rep = voxel_map(read_voxels(p["dataset"]), p["kappa"][0], K=K, metric=p["metric"],
                        grid_p=p["grid_p"], seed=p["seed"], threads=p["threads"])
        atomic_write(out, rep.to_csv())
        _echo({"command": "reproduce", "study": study, "out": out,
               "voxels": len(rep.ids), "errors": len(rep.errors)})
        return
    default_kappas = (1.5,) if study == "model-comparison" else (0.1, 1.0, 2.0)
    K = p["folds"] or 20
    if K < 2:
        raise UsageError("--folds must be at least 2")
    cfg = ExperimentConfig(
        kappas=tuple(p["kappa"] or default_kappas),
        sigma2=p["sigma2"],
        n_dirs=p["n"],
        grid_p=p["grid_p"],
        bayes_p=p["bayes_p"],
        trials=p["trials"] or (1000 if study == "model-comparison" else 2000),
        K_folds=K,
        seed=p["seed"],
        posterior_draws=p["draws"],
        threads=p["threads"],
    )
    if study == "model-comparison":
        if len(cfg.kappas) != 1:
            raise UsageError("model-comparison takes a single --kappa")
        table = run_model_comparison(cfg)
        checks = check_comparison(table) if p["check"] else []
    else:
        table = run_correlation_study(cfg)
        checks = check_correlation(table) if p["check"] else []
    atomic_write(out, table.to_csv())
    for name, ok, value in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  (observed {value:.4g})")
    summary = {"command": "reproduce", "study": study, "out": out, "trials": cfg.trials}
    if checks:
        summary["check"] = "pass" if all(ok for _, ok, _ in checks) else "fail"
    _echo(summary)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "distance": cmd_distance,
    "replicate-error": cmd_replicate_error,
    "barycenter": cmd_barycenter,
    "reproduce": cmd_reproduce,
}

DOMAIN_ERRORS = (
    UndefinedDistanceError,
    GridMismatchError,
    EmptyFodfError,
    TransportError,
    UndefinedCorrelationError,
)


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code
    try:
        cmd, params = resolve(ns)
        COMMANDS[cmd](params)
    except DOMAIN_ERRORS as exc:
        print(f"fodfemd: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, FormatError, ValueError) as exc:
        print(f"fodfemd: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        print(f"fodfemd: cannot access{where}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
