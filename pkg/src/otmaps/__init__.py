"""Smooth optimal transport map estimation.

Estimators of the Brenier map between two sampled distributions on a box:

* ``matching``  the exact empirical assignment (``otmaps.ot``);
* ``kernel``    Gaussian kernel ridge regression of the matching (``otmaps.kernel``);
* ``wavelet``   gradient of a wavelet-truncated semi-dual potential (``otmaps.semidual``).

``otmaps.synthetic`` provides problems with known maps and ``otmaps.harness``
runs rate experiments over them.
"""
from .grid import Box, Grid, ScalarField, VectorField, gradient, interpolate, make_grid, simpson_integrate
from .harness import ExperimentConfig, ResultRecord, RateFit, emit, fit_rate, mse, read_records, run_experiment
from .kernel import KernelModel, KernelParams, oracle_select
from .legendre import convex_envelope, legendre_d, llt_1d
from .models import TransportMap, load_model, save_model
from .ot import Assignment, MatchingMap, matching_map, one_nn_extend, solve_assignment
from .semidual import (
    OptimizerOptions,
    StabilityReport,
    WaveletMap,
    fit_wavelet,
    population_semidual,
    select_scale,
    stability_certificate,
)
from .synthetic import TestProblem, draw_pair, make_bump_problem, make_problem, sample_source
from .wavelet import WaveletCoeffs, analyze, synthesize

__all__ = [
    "Box",
    "Grid",
    "ScalarField",
    "VectorField",
    "make_grid",
    "interpolate",
    "gradient",
    "simpson_integrate",
    "WaveletCoeffs",
    "analyze",
    "synthesize",
    "llt_1d",
    "legendre_d",
    "convex_envelope",
    "TransportMap",
    "save_model",
    "load_model",
    "Assignment",
    "MatchingMap",
    "solve_assignment",
    "matching_map",
    "one_nn_extend",
    "KernelParams",
    "KernelModel",
    "oracle_select",
    "OptimizerOptions",
    "WaveletMap",
    "StabilityReport",
    "fit_wavelet",
    "select_scale",
    "population_semidual",
    "stability_certificate",
    "TestProblem",
    "make_problem",
    "make_bump_problem",
    "sample_source",
    "draw_pair",
    "ExperimentConfig",
    "ResultRecord",
    "RateFit",
    "run_experiment",
    "mse",
    "fit_rate",
    "emit",
    "read_records",
]
