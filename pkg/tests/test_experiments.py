import numpy as np
import pytest

from fodfemd.experiments import (
    ExperimentConfig,
    UndefinedCorrelationError,
    orthogonal_pair,
    pearson_corr,
    random_two_fiber,
    run_correlation_study,
    run_model_comparison,
    voxel_map,
)
from fodfemd.fodf import DiscreteFodf
from fodfemd.geometry import sample_grid
from fodfemd.signal import AcquisitionScheme, predict_signal, simulate


def test_pearson_corr():
    a = np.random.default_rng(0).normal(size=50)
    assert pearson_corr(a, a) == pytest.approx(1.0)
    assert pearson_corr(a, -a) == pytest.approx(-1.0)
    x, y = np.random.default_rng(1).normal(size=(2, 10_000))
    assert abs(pearson_corr(x, y)) < 0.05
    with pytest.raises(UndefinedCorrelationError):
        pearson_corr(np.ones(5), a[:5])
    with pytest.raises(ValueError):
        pearson_corr([1.0], [2.0])


def test_truth_generators():
    rng = np.random.default_rng(2)
    for _ in range(20):
        f = orthogonal_pair(rng)
        assert abs(f.dirs[0] @ f.dirs[1]) < 1e-12
        assert np.allclose(f.weights, 0.5)
        g = random_two_fiber(rng)
        assert g.weights.sum() == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(models=("nnls", "lasso"))
    with pytest.raises(ValueError):
        ExperimentConfig(kappas=(-1.0,))


def test_model_comparison_deterministic_and_shaped():
    cfg = ExperimentConfig(trials=2, seed=3, K_folds=5, bayes_p=40, posterior_draws=10)
    a = run_model_comparison(cfg)
    b = run_model_comparison(cfg)
    assert a.to_csv() == b.to_csv()
    assert a.rows == ["bys", "bry", "b2s", "nnls", "cv"]
    assert np.isnan(a.cell("bys", "AE"))
    assert "undefined" in a.to_csv().splitlines()[2]
    assert np.all(np.isfinite(a.values[1:]))
    threaded = run_model_comparison(
        ExperimentConfig(trials=2, seed=3, K_folds=5, bayes_p=40, posterior_draws=10, threads=2)
    )
    assert np.array_equal(threaded.values, a.values, equal_nan=True)


def test_model_comparison_noise_free_grid_truth():
    grid = sample_grid(362)
    j = int(np.argmin(np.abs(grid.points @ grid.points[0])))
    truth = lambda rng: DiscreteFodf(grid.points[[0, j]], [0.5, 0.5])
    cfg = ExperimentConfig(trials=1, sigma2=0.0, bayes_p=362, K_folds=5, posterior_draws=10)
    tab = run_model_comparison(cfg, truth=truth)
    assert np.all(tab.column("EMD") < 0.05)


def test_standard_error_scaling():
    small = run_model_comparison(ExperimentConfig(trials=60, models=("nnls",), seed=4))
    big = run_model_comparison(ExperimentConfig(trials=120, models=("nnls",), seed=4))
    ratio = small.cell_se("nnls", "EMD") / big.cell_se("nnls", "EMD")
    assert ratio == pytest.approx(np.sqrt(2), rel=0.25)


def test_b2s_sparser_wins_on_emd():
    tab = run_model_comparison(ExperimentConfig(trials=30, models=("b2s", "nnls"), seed=5))
    margin = 2 * np.hypot(tab.cell_se("b2s", "EMD"), tab.cell_se("nnls", "EMD"))
    assert tab.cell("b2s", "EMD") <= tab.cell("nnls", "EMD") + margin


def test_correlation_study_small():
    cfg = ExperimentConfig(kappas=(0.1, 1.0), trials=30, seed=6)
    a = run_correlation_study(cfg)
    assert a.rows == ["kappa=0.1", "kappa=1"]
    assert "EMD" in a.columns and "RRMSE" in a.columns
    assert np.all(np.abs(a.values) <= 1)
    assert a.to_csv() == run_correlation_study(cfg).to_csv()
    assert a.to_csv().startswith("# {")


def _dataset(truths, sigma2, seed, replicates=1):
    sch = AcquisitionScheme(sample_grid(150).points, 1.5, sigma2=sigma2)
    rng = np.random.default_rng(seed)
    voxels = []
    for i, f in enumerate(truths):
        sigs = simulate(f, sch, rng, replicates=replicates)
        sigs = sigs if isinstance(sigs, list) else [sigs]
        vox = {"id": f"v{i}", "y1": sigs[0].y.tolist()}
        if replicates == 2:
            vox["y2"] = sigs[1].y.tolist()
        voxels.append(vox)
    return {"dirs": sch.meas_dirs.tolist(), "voxels": voxels}


def test_voxel_map_noiseless_cvrmse():
    grid = sample_grid(362)
    truths = [DiscreteFodf.single(grid.points[7 * i]) for i in range(10)]
    rep = voxel_map(_dataset(truths, 0.0, 0), 1.5, K=10)
    assert len(rep.ids) == 10
    assert np.all(rep.cvrmse < 0.02)
    assert not rep.has_re and "re" not in rep.to_csv().splitlines()[1].split(",")


def test_voxel_map_two_fiber_contrast_and_determinism():
    rng = np.random.default_rng(8)
    one = [DiscreteFodf.single(d) for d in orthogonal_pair(rng).dirs for _ in range(4)]
    two = [orthogonal_pair(rng) for _ in range(8)]
    data = _dataset(one + two, 0.04, 9, replicates=2)
    rep = voxel_map(data, 1.5, K=10, seed=1)
    assert rep.kre[8:].mean() > rep.kre[:8].mean()
    assert rep.has_re and np.all(np.isfinite(rep.re))
    assert rep.to_csv() == voxel_map(data, 1.5, K=10, seed=1).to_csv()


def test_voxel_map_reports_bad_rows():
    data = _dataset([DiscreteFodf.single([0, 0, 1.0])], 0.04, 1)
    data["voxels"].append({"id": "short", "y1": [1.0, 2.0]})
    data["voxels"].append({"id": "neg", "y1": [-1.0] * 150})
    data["voxels"].append({"id": "none"})
    rep = voxel_map(data, 1.5, K=5)
    assert set(rep.errors) == {"short", "neg", "none"}
    assert np.isfinite(rep.kre[0]) and np.all(np.isnan(rep.kre[1:]))
