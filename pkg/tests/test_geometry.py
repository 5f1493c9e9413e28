import numpy as np
import pytest

from fodfemd.geometry import (
    InvalidDirectionError,
    arc_distance,
    canonical,
    cost_matrix,
    random_direction,
    random_directions,
    sample_grid,
)

E1, E2, E3 = np.eye(3)


@pytest.mark.parametrize(
    "u, w, expected",
    [
        (E1, E1, 0.0),
        (E1, -E1, 0.0),
        (E1, E2, np.pi / 2),
        (E1, (E1 + E2) / np.sqrt(2), np.pi / 4),
    ],
)
def test_arc_distance_examples(u, w, expected):
    assert arc_distance(u, w) == pytest.approx(expected, abs=1e-15)


def test_arc_distance_rejects_non_unit():
    with pytest.raises(InvalidDirectionError):
        arc_distance([1.0, 0.1, 0.0], E1)
    # within tolerance is fine
    arc_distance([1.0 + 5e-7, 0.0, 0.0], E1)


def test_arc_distance_metric_axioms():
    rng = np.random.default_rng(0)
    v = random_directions(rng, 3000).reshape(1000, 3, 3)
    for a, b, c in v:
        dab, dbc, dac = arc_distance(a, b), arc_distance(b, c), arc_distance(a, c)
        assert dab >= 0
        assert arc_distance(a, a) == 0
        assert dab == arc_distance(b, a)
        assert dac <= dab + dbc + 1e-10
        assert arc_distance(-a, b) == dab
        assert 0 <= dab <= np.pi / 2


def test_sample_grid_small_and_deterministic():
    g1 = sample_grid(1)
    assert g1.p == 1
    assert np.linalg.norm(g1.points[0]) == pytest.approx(1.0, abs=1e-12)
    a = sample_grid(362)
    sample_grid.cache_clear()
    b = sample_grid(362)
    assert a is not b
    assert a.points.tobytes() == b.points.tobytes()


def test_sample_grid_errors():
    with pytest.raises(ValueError):
        sample_grid(0)


@pytest.mark.parametrize("p", [2, 10, 150, 362, 1000])
def test_sample_grid_hemisphere_distinct(p):
    g = sample_grid(p)
    assert g.points.shape == (p, 3)
    assert np.all(g.points[:, 2] > 0)
    assert np.allclose(np.linalg.norm(g.points, axis=1), 1.0, atol=1e-12)
    d = cost_matrix(g.points, g.points)
    d[np.diag_indices(p)] = np.inf
    assert d.min() > 0


def test_sample_grid_covering_radius():
    # brute force over 1e5 uniform random directions
    g = sample_grid(362).points
    x = random_directions(np.random.default_rng(0), 100_000)
    worst = 0.0
    for lo in range(0, len(x), 10_000):
        best = np.abs(x[lo : lo + 10_000] @ g.T).max(axis=1)
        worst = max(worst, float(np.arccos(np.clip(best, 0, 1)).max()))
    assert worst < 0.12


def test_random_direction_reproducible_unit():
    a = random_direction(np.random.default_rng(5))
    b = random_direction(np.random.default_rng(5))
    assert np.array_equal(a, b)
    v = random_directions(np.random.default_rng(1), 1000)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    assert np.all(v[:, 2] >= 0)


def test_random_direction_isotropy():
    v = random_directions(np.random.default_rng(2), 100_000)
    assert np.mean(v[:, 0] ** 2) == pytest.approx(1 / 3, abs=0.01)


def test_cost_matrix():
    assert cost_matrix([E1], [E1]).tolist() == [[0.0]]
    assert cost_matrix([E1], [E2])[0, 0] == pytest.approx(np.pi / 2)
    rng = np.random.default_rng(3)
    c = cost_matrix(random_directions(rng, 20), random_directions(rng, 30))
    assert c.shape == (20, 30)
    assert np.all((c >= 0) & (c <= np.pi / 2))
    with pytest.raises(ValueError):
        cost_matrix(np.zeros((0, 3)), [E1])


def test_canonical_representative():
    assert np.array_equal(canonical([0, 0, -1.0]), [0, 0, 1.0])
    assert np.array_equal(canonical([1.0, -1.0, 0]), [-1.0, 1.0, 0])
    assert np.array_equal(canonical([-1.0, 0, 0]), [1.0, 0, 0])
