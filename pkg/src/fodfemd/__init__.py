"""Estimate fiber orientation distributions from simulated diffusion MRI and
compare them with transport and histogram distances."""

__version__ = "0.1.0"

from .distances import (
    angular_error,
    emd,
    rmise,
    skl,
    smoothed_skl,
    smoothed_tv,
    total_variation,
    wasserstein2,
)
from .estimators import fit_bayes, fit_best_k_subset, fit_nnls, posterior_mean
from .fodf import DiscreteFodf, GridFodf, smooth, snap_to_grid, st_project
from .geometry import DirectionGrid, arc_distance, random_direction, sample_grid
from .signal import AcquisitionScheme, SignalSet, predict_signal, simulate

__all__ = [
    "AcquisitionScheme",
    "DirectionGrid",
    "DiscreteFodf",
    "GridFodf",
    "SignalSet",
    "angular_error",
    "arc_distance",
    "emd",
    "fit_bayes",
    "fit_best_k_subset",
    "fit_nnls",
    "posterior_mean",
    "predict_signal",
    "random_direction",
    "rmise",
    "sample_grid",
    "simulate",
    "skl",
    "smooth",
    "smoothed_skl",
    "smoothed_tv",
    "snap_to_grid",
    "st_project",
    "total_variation",
    "wasserstein2",
]
