"""Functional differential graph estimation.

Fit discretely observed multivariate curves in an orthonormal basis, project
them on pooled functional principal components and estimate where the
conditional-dependence structure of two populations differs, either
directly (:func:`fundiff.fudge.solve_fudge`) or through joint graphical
lasso baselines (:mod:`fundiff.jfgl`).
"""

__version__ = "0.1.0"

from .basis import Domain, FunctionRep, make_fourier_basis, make_orthonormal_bspline_basis
from .curvefit import FittedSample, RawDataset, fit_curve, fit_sample
from .fpca import compute_scores, pooled_fpca, score_covariance
from .fudge import EdgeSet, FudgeConfig, solve_fudge, threshold_edges
from .jfgl import JfglProblem, Penalty, solve_jfgl

__all__ = [
    "Domain",
    "FunctionRep",
    "make_fourier_basis",
    "make_orthonormal_bspline_basis",
    "RawDataset",
    "FittedSample",
    "fit_curve",
    "fit_sample",
    "pooled_fpca",
    "compute_scores",
    "score_covariance",
    "EdgeSet",
    "FudgeConfig",
    "solve_fudge",
    "threshold_edges",
    "JfglProblem",
    "Penalty",
    "solve_jfgl",
]
