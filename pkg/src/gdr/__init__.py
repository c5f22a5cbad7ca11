"""Gradient dimensionality reduction: one engine for tSNE- and UMAP-style embeddings."""

import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip the TBB probe, which warns on older TBB installs
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .affinity import AffinityGraph, KernelParams, build_affinities, calibrate_sigma, calibrate_tau
from .dataset import DataMatrix, DatasetError, load_matrix, make_blobs, make_swiss_roll, save_matrix
from .gradients import GradientRegime
from .kernel import ABParams, fit_ab, normalization_Z, q_unnormalized
from .knn import NeighborGraph, knn_descent, knn_exact
from .optimizer import (
    ConfigError,
    EmbeddingState,
    NumericalAbort,
    RunConfig,
    RunReport,
    init_random,
    init_spectral,
    preset_config,
    run,
)
from .sampling import SamplingPlan

__all__ = [
    "ABParams", "AffinityGraph", "ConfigError", "DataMatrix", "DatasetError",
    "EmbeddingState", "GradientRegime", "KernelParams", "NeighborGraph", "NumericalAbort",
    "RunConfig", "RunReport", "SamplingPlan", "build_affinities", "calibrate_sigma",
    "calibrate_tau", "fit_ab", "init_random", "init_spectral", "knn_descent", "knn_exact",
    "load_matrix", "make_blobs", "make_swiss_roll", "normalization_Z", "preset_config",
    "q_unnormalized", "run", "save_matrix",
]

__version__ = "0.1.0"
