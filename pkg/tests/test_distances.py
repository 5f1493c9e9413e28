import numpy as np
import pytest
from scipy.integrate import dblquad

from fodfemd.distances import (
    GridMismatchError,
    UndefinedDistanceError,
    angular_error,
    distance,
    emd,
    line_emd,
    line_smoothed_tv,
    line_tv,
    line_wasserstein2,
    make_metric,
    nearest_angular_error,
    parse_metric,
    rmise,
    skl,
    smoothed_skl,
    smoothed_tv,
    total_variation,
    wasserstein2,
)
from fodfemd.fodf import DiscreteFodf, GridFodf, snap_to_grid, st_project
from fodfemd.geometry import arc_distance, random_directions, sample_grid

E1, E2, E3 = np.eye(3)
PAIR = DiscreteFodf(np.array([E1, E2]), [0.5, 0.5])
ONE = DiscreteFodf.single(E1)


def random_fodf(rng, kmax=5):
    k = int(rng.integers(1, kmax + 1))
    return DiscreteFodf(random_directions(rng, k), rng.dirichlet(np.ones(k)))


def at_angle(theta):
    return DiscreteFodf.single([np.sin(theta), 0.0, np.cos(theta)])


# -- transport distances ----------------------------------------------------


def test_emd_examples():
    assert emd(PAIR, PAIR) == 0.0
    assert emd(ONE, DiscreteFodf.single(E2)) == pytest.approx(np.pi / 2, abs=1e-15)
    assert emd(PAIR, ONE) == pytest.approx(np.pi / 4, abs=1e-12)


def test_w2_examples():
    assert wasserstein2(PAIR, PAIR) == 0.0
    assert wasserstein2(PAIR, ONE) == pytest.approx(np.sqrt(0.5) * np.pi / 2, abs=1e-12)
    assert wasserstein2(PAIR, ONE) == pytest.approx(1.1107, abs=5e-5)


def test_emd_metric_axioms():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        f, g, h = (random_fodf(rng) for _ in range(3))
        fg, gf = emd(f, g), emd(g, f)
        assert fg == pytest.approx(gf, abs=1e-9)
        assert emd(f, h) <= fg + emd(g, h) + 1e-8
        assert emd(f, f) == pytest.approx(0.0, abs=1e-12)
        assert 0.0 <= fg <= np.pi / 2 + 1e-12
        assert fg > 0  # random atoms never coincide


def test_emd_below_w2():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        f, g = random_fodf(rng), random_fodf(rng)
        assert emd(f, g) <= wasserstein2(f, g) + 1e-9


def test_emd_on_grid_fodfs():
    g = sample_grid(100)
    rng = np.random.default_rng(2)
    a = GridFodf(g, rng.dirichlet(np.ones(100)))
    b = snap_to_grid(random_fodf(rng), g)
    assert emd(a, b) == pytest.approx(emd(b, a), abs=1e-9)
    assert emd(a, a) == pytest.approx(0.0, abs=1e-12)


def test_single_atoms_extend_angular_error():
    for theta in np.linspace(0, np.pi / 2, 50):
        f, g = DiscreteFodf.single(E3), at_angle(theta)
        d = arc_distance(E3, g.dirs[0])
        assert d == pytest.approx(theta, abs=1e-12)
        assert emd(f, g) == pytest.approx(d, abs=1e-9)
        assert wasserstein2(f, g) == pytest.approx(d, abs=1e-9)
        assert angular_error(f, g) == pytest.approx(d, abs=1e-9)


# -- angular error ----------------------------------------------------------


def test_angular_error_examples():
    a = DiscreteFodf(np.array([E1, E2]), [0.3, 0.7])
    b = DiscreteFodf(np.array([E2, E1]), [0.5, 0.5])
    assert angular_error(a, a) == 0.0
    assert angular_error(a, b) == pytest.approx(0.0, abs=1e-15)
    assert angular_error(ONE, DiscreteFodf.single(E2)) == pytest.approx(np.pi / 2)


def test_angular_error_undefined():
    with pytest.raises(UndefinedDistanceError):
        angular_error(PAIR, ONE)
    with pytest.raises(UndefinedDistanceError):
        angular_error(snap_to_grid(ONE, sample_grid(50)), ONE)


def test_angular_error_is_optimal_matching():
    from itertools import permutations

    rng = np.random.default_rng(3)
    for _ in range(50):
        k = int(rng.integers(1, 5))
        a, b = random_directions(rng, k), random_directions(rng, k)
        f = DiscreteFodf(a, np.full(k, 1 / k))
        g = DiscreteFodf(b, np.full(k, 1 / k))
        brute = min(
            sum(arc_distance(f.dirs[i], g.dirs[s[i]]) for i in range(k))
            for s in permutations(range(k))
        )
        assert angular_error(f, g) == pytest.approx(brute, abs=1e-12)


def test_nearest_angular_error():
    est = DiscreteFodf(np.array([E1, E2, [0.0, np.sin(0.1), np.cos(0.1)]]), [0.4, 0.3, 0.3])
    truth = DiscreteFodf(np.array([E1, E3]), [0.5, 0.5])
    assert nearest_angular_error(truth, est) == pytest.approx(0.1, abs=1e-12)


# -- histogram distances ----------------------------------------------------


def test_total_variation_examples():
    assert total_variation(PAIR, PAIR) == 0.0
    assert total_variation(ONE, DiscreteFodf.single(E2)) == 1.0
    assert total_variation(PAIR, ONE) == pytest.approx(0.5)
    g = sample_grid(362)
    a, b = snap_to_grid(PAIR, g), snap_to_grid(ONE, g)
    assert total_variation(a, b) == pytest.approx(0.5)
    # atomic inputs on an explicit grid are snapped first
    assert total_variation(PAIR, ONE, grid=g) == pytest.approx(0.5)


def test_total_variation_range():
    rng = np.random.default_rng(4)
    g = sample_grid(200)
    for _ in range(200):
        f, h = random_fodf(rng), random_fodf(rng)
        assert 0.0 <= total_variation(f, h) <= 1.0
        assert 0.0 <= total_variation(f, h, grid=g) <= 1.0


def test_grid_mismatch():
    a = GridFodf.uniform(sample_grid(10))
    b = GridFodf.uniform(sample_grid(11))
    with pytest.raises(GridMismatchError):
        total_variation(a, b)
    with pytest.raises(GridMismatchError):
        skl(a, b)


def test_skl_examples():
    assert skl(PAIR, PAIR) == 0.0
    assert skl(ONE, DiscreteFodf.single(E2)) == np.inf
    g = sample_grid(50)
    rng = np.random.default_rng(5)
    p, q = rng.dirichlet(np.ones(50)), rng.dirichlet(np.ones(50))
    a, b = GridFodf(g, p), GridFodf(g, q)
    expected = 0.5 * np.sum(p * np.log(p / q)) + 0.5 * np.sum(q * np.log(q / p))
    assert skl(a, b) == pytest.approx(expected, rel=1e-12)
    assert skl(a, b) == skl(b, a)


def test_skl_infinite_on_partial_overlap():
    f = DiscreteFodf(np.array([E1, E2]), [0.5, 0.5])
    h = DiscreteFodf(np.array([E1, E3]), [0.5, 0.5])
    assert skl(f, h) == np.inf


def test_smoothed_tv():
    g = sample_grid(362)
    assert smoothed_tv(PAIR, PAIR, 10) == 0.0
    assert smoothed_tv(ONE, DiscreteFodf.single(E2), 1e-6) < 1e-4
    v = smoothed_tv(ONE, DiscreteFodf.single(E2), 10, g)
    assert 0 < v < 1


def test_smoothed_tv_monotone_concave_in_separation():
    g = sample_grid(20_000)
    th = np.linspace(0, np.pi / 2, 20)
    for lam in (1.0, 10.0, 100.0):
        v = np.array([smoothed_tv(DiscreteFodf.single(E3), at_angle(t), lam, g) for t in th])
        assert np.diff(v).min() >= -1e-6
        assert np.diff(v, 2).max() <= 1e-6


def test_smoothed_skl():
    a, b = ONE, DiscreteFodf.single(E2)
    assert smoothed_skl(a, a, 10) == 0.0
    v = smoothed_skl(a, b, 10)
    assert np.isfinite(v) and v > 0
    assert v == smoothed_skl(b, a, 10)
    assert np.isfinite(smoothed_skl(a, b, 1e4))


# -- RMISE ------------------------------------------------------------------


def test_rmise_basic():
    rng = np.random.default_rng(6)
    f, g = random_fodf(rng), random_fodf(rng)
    assert rmise(f, f, 1.5) == 0.0
    assert rmise(f, g, 1.5) == rmise(g, f, 1.5)


def test_rmise_monte_carlo_oracle():
    f, g = ONE, DiscreteFodf.single(E2)
    x = random_directions(np.random.default_rng(1), 10_000)
    d = st_project(f, 1.5, x) - st_project(g, 1.5, x)
    mc = np.sqrt(np.mean(d * d))
    assert rmise(f, g, 1.5) == pytest.approx(mc, rel=0.01)


def test_rmise_quadrature_oracle():
    # mean over the unit sphere by iterated quadrature in spherical coordinates
    def integrand(phi, theta):
        x = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        d = np.exp(-1.5 * x[0] ** 2) - np.exp(-1.5 * x[1] ** 2)
        return d * d * np.sin(theta)

    val, _ = dblquad(integrand, 0, np.pi, 0, 2 * np.pi, epsabs=1e-12)
    exact = np.sqrt(val / (4 * np.pi))
    assert rmise(ONE, DiscreteFodf.single(E2), 1.5) == pytest.approx(exact, rel=1e-3)


# -- real line: robustness and scale -----------------------------------------


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
@pytest.mark.parametrize("x", [10.0, 100.0])
def test_outlier_robustness_profile(eps, x):
    p = ([0.0], [1.0])
    q = ([0.0, x], [1 - eps, eps])
    assert line_emd(*p, *q) == pytest.approx(eps * x, rel=1e-12)
    assert line_wasserstein2(*p, *q) == pytest.approx(np.sqrt(eps) * x, rel=1e-12)
    assert line_tv(*p, *q) == pytest.approx(eps, rel=1e-12)
    assert line_smoothed_tv(*p, *q, 100.0) == pytest.approx(eps, rel=0.1)


def test_line_smoothed_tv_two_gaussians():
    # TV between N(0, s^2) and N(d, s^2) is 2 Phi(d / 2s) - 1
    from scipy.stats import norm

    for d, lam in [(0.1, 100.0), (1.0, 1.0), (0.3, 10.0)]:
        s = 1 / np.sqrt(lam)
        assert line_smoothed_tv([0.0], [1.0], [d], [1.0], lam) == pytest.approx(
            2 * norm.cdf(d / (2 * s)) - 1, abs=1e-12
        )


@pytest.mark.parametrize("scale", [2.0, 10.0])
def test_scale_equivariance(scale):
    rng = np.random.default_rng(7)
    for _ in range(100):
        k1, k2 = rng.integers(1, 6, size=2)
        x1, x2 = rng.normal(size=k1), rng.normal(size=k2)
        w1, w2 = rng.dirichlet(np.ones(k1)), rng.dirichlet(np.ones(k2))
        base = line_emd(x1, w1, x2, w2)
        assert line_emd(scale * x1, w1, scale * x2, w2) == pytest.approx(scale * base, abs=1e-9)
        assert line_tv(scale * x1, w1, scale * x2, w2) == pytest.approx(
            line_tv(x1, w1, x2, w2), abs=1e-12
        )


# -- dispatch ---------------------------------------------------------------


def test_parse_metric():
    assert parse_metric("emd") == ("emd", None)
    assert parse_metric("stv:10") == ("stv", 10.0)
    with pytest.raises(ValueError):
        parse_metric("stv")
    with pytest.raises(ValueError):
        parse_metric("hellinger")


def test_distance_dispatch():
    f, g = PAIR, ONE
    assert distance("emd", f, g) == emd(f, g)
    assert distance("w2", f, g) == wasserstein2(f, g)
    assert distance("stv", f, g, lam=10) == smoothed_tv(f, g, 10)
    assert make_metric("sskl:10")(f, g) == smoothed_skl(f, g, 10)
    assert make_metric("rmise", kappa=1.5)(f, g) == rmise(f, g, 1.5)
    with pytest.raises(ValueError):
        make_metric("rmise")
