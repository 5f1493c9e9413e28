"""Forward model: noise-free diffusion signal and Rician measurement noise."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import i0e

from .fodf import st_project
from .geometry import as_directions, canonical

__all__ = [
    "AcquisitionScheme",
    "SignalSet",
    "log_i0",
    "predict_signal",
    "add_rician_noise",
    "rician_log_pdf",
    "simulate",
]


@dataclass(frozen=True, eq=False)
class AcquisitionScheme:
    """Measurement directions plus the constants of the signal model.

    Parameters
    ----------
    meas_dirs : ndarray, shape (n, 3)
        Unit gradient directions.
    kappa : float
        Stejskal-Tanner shape parameter.
    s0 : float
        Signal scale.
    sigma2 : float
        Noise variance of the Rician model.
    """

    meas_dirs: np.ndarray
    kappa: float
    s0: float = 1.0
    sigma2: float = 0.0

    def __post_init__(self):
        x = canonical(as_directions(self.meas_dirs))
        if len(x) < 1:
            raise ValueError("scheme needs at least one measurement direction")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.s0 > 0:
            raise ValueError("s0 must be positive")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be nonnegative")
        x.setflags(write=False)
        object.__setattr__(self, "meas_dirs", x)

    @property
    def n(self):
        return len(self.meas_dirs)

    def subset(self, idx):
        return replace(self, meas_dirs=self.meas_dirs[idx])

    def same_as(self, other):
        return (
            np.array_equal(self.meas_dirs, other.meas_dirs)
            and self.kappa == other.kappa
            and self.s0 == other.s0
        )


@dataclass(frozen=True, eq=False)
class SignalSet:
    """Measured (or simulated) signal values for an `AcquisitionScheme`."""

    scheme: AcquisitionScheme
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.shape != (self.scheme.n,):
            raise ValueError(f"expected {self.scheme.n} signal values, got shape {y.shape}")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("signal values must be finite and nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.scheme.n

    def subset(self, idx):
        idx = np.asarray(idx)
        return SignalSet(self.scheme.subset(idx), self.y[idx])


def predict_signal(f, scheme):
    """Noise-free signal ``s0 * sum_j w_j exp(-kappa (v_j . x_i)^2)``."""
    return scheme.s0 * st_project(f, scheme.kappa, scheme.meas_dirs)


def add_rician_noise(mu, sigma2, rng):
    """Draw ``sqrt((mu + Z1)^2 + Z2^2)`` with ``Z1, Z2 ~ N(0, sigma2)``."""
    if not sigma2 >= 0:
        raise ValueError("sigma2 must be nonnegative")
    mu = np.asarray(mu, dtype=float)
    sd = np.sqrt(sigma2)
    z = rng.standard_normal((2,) + mu.shape) * sd
    return np.hypot(mu + z[0], z[1])


def log_i0(x):
    """``log I0(x)`` without overflow, via the exponentially scaled Bessel."""
    x = np.abs(np.asarray(x, dtype=float))
    return np.log(i0e(x)) + x


def rician_log_pdf(y, mu, sigma2):
    """Log density of ``Rician(mu, sigma2)`` at `y` (broadcasts)."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(y < 0):
        raise ValueError("Rician support is y >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(y / sigma2) - (y * y + mu * mu) / (2 * sigma2) + log_i0(y * mu / sigma2)
    return out if out.ndim else float(out)


def simulate(f, scheme, rng, replicates=1):
    """Noisy `SignalSet` replicates drawn around ``predict_signal(f, scheme)``."""
    mu = predict_signal(f, scheme)
    sets = [SignalSet(scheme, add_rician_noise(mu, scheme.sigma2, rng)) for _ in range(replicates)]
    return sets[0] if replicates == 1 else sets
