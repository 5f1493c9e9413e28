"""Directions on the projective plane.

A direction is a unit 3-vector with ``v`` and ``-v`` identified. Arrays of
directions have shape ``(n, 3)``; every helper here returns the canonical
hemisphere representative (``z > 0``, ties broken on ``y`` then ``x``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "InvalidDirectionError",
    "DirectionGrid",
    "canonical",
    "as_directions",
    "arc_distance",
    "cost_matrix",
    "sample_grid",
    "random_direction",
    "random_directions",
    "nearest_index",
]

UNIT_TOL = 1e-6
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class InvalidDirectionError(ValueError):
    """Raised when a vector is not (close to) unit norm."""


def canonical(v):
    """Return the hemisphere representative of each row of `v`.

    The sign is chosen so that the first nonzero of ``(z, y, x)`` is
    positive. Works on a single 3-vector or an ``(n, 3)`` array.
    """
    v = np.array(v, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    key = v[:, ::-1]
    nz = key != 0
    first = np.argmax(nz, axis=1)
    lead = key[np.arange(len(v)), first]
    sign = np.where(lead < 0, -1.0, 1.0)
    out = v * sign[:, None]
    return out[0] if single else out


def as_directions(v, normalize=False):
    """Validate and return directions as a float ``(n, 3)`` array.

    With ``normalize=True`` arbitrary nonzero vectors are rescaled;
    otherwise any row whose norm is off by more than 1e-6 raises
    `InvalidDirectionError`.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.ndim != 2 or v.shape[1] != 3:
        raise InvalidDirectionError(f"expected (n, 3) directions, got shape {v.shape}")
    norms = np.linalg.norm(v, axis=1)
    if normalize:
        if np.any(norms == 0):
            raise InvalidDirectionError("zero vector has no direction")
        return v / norms[:, None]
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise InvalidDirectionError("direction vectors must have unit norm")
    return v


def _arc(a, b):
    # atan2 keeps full precision near 0 where arccos(|dot|) does not
    dot = np.abs(a @ b.T)
    cross = np.linalg.norm(np.cross(a[:, None, :], b[None, :, :]), axis=-1)
    return np.arctan2(cross, dot)


def arc_distance(u, w):
    """Arc length between two undirected directions, in ``[0, pi/2]``.

    Equal to ``arccos(|u . w|)``; symmetric and invariant under
    ``u -> -u``.
    """
    a = as_directions(u)
    b = as_directions(w)
    if len(a) != 1 or len(b) != 1:
        raise InvalidDirectionError("arc_distance takes two single directions")
    return float(np.clip(_arc(a, b)[0, 0], 0.0, np.pi / 2))


def cost_matrix(a, b):
    """Pairwise arc-length matrix between two direction sets."""
    a = as_directions(a)
    b = as_directions(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cost_matrix needs non-empty direction sets")
    return np.clip(_arc(a, b), 0.0, np.pi / 2)


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """An ordered, deterministic set of `p` directions."""

    points: np.ndarray

    def __post_init__(self):
        pts = as_directions(self.points)
        pts = canonical(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def p(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, DirectionGrid):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.p, self.points.tobytes()))


@lru_cache(maxsize=32)
def sample_grid(p):
    """Hemisphere Fibonacci lattice with `p` points.

    Heights are spaced uniformly in ``z`` over ``(0, 1)`` (equal-area
    bands) and azimuths advance by the golden angle, so the result is a
    quasi-uniform covering of the projective plane. Deterministic in `p`.
    """
    p = int(p)
    if p < 1:
        raise ValueError("grid needs at least one point")
    i = np.arange(p)
    z = 1.0 - (i + 0.5) / p
    r = np.sqrt(1.0 - z * z)
    phi = i * GOLDEN_ANGLE
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return DirectionGrid(pts)


def random_directions(rng, size):
    """Draw `size` directions uniformly on the projective plane."""
    v = rng.standard_normal((size, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return canonical(v)


def random_direction(rng):
    """Draw one uniformly distributed direction."""
    return random_directions(rng, 1)[0]


def nearest_index(dirs, grid):
    """Index of the nearest grid point for each direction (lowest index on ties)."""
    dirs = as_directions(dirs)
    dots = np.abs(dirs @ grid.points.T)
    return np.argmax(dots, axis=1)
