"""Spectral clustering for graphs generated by preference frame models."""

from .clustering import Clustering, SeparationReport, kmeans, misclustering_rate, separation_gmax
from .errors import PrefFrameError
from .frame import FrameOptions, PreferenceFrame, build_preference_frame, frame_factor
from .harness import ExperimentConfig, run_experiment, reproduce_sec42
from .models import (
    DegreeSpec,
    NodeWeights,
    Partition,
    PfmModel,
    general_pfm,
    hpfm_matrix,
    model_from_config,
    pfm_from_degrees,
    sbm_model,
)
from .sampling import SampledGraph, sample_adjacency
from .spectral import SpectralEmbedding, normalized_laplacian, top_k_eigen

__version__ = "0.1.0"

__all__ = [
    "Clustering", "SeparationReport", "kmeans", "misclustering_rate", "separation_gmax",
    "PrefFrameError", "FrameOptions", "PreferenceFrame", "build_preference_frame", "frame_factor",
    "ExperimentConfig", "run_experiment", "reproduce_sec42",
    "DegreeSpec", "NodeWeights", "Partition", "PfmModel", "general_pfm", "hpfm_matrix",
    "model_from_config", "pfm_from_degrees", "sbm_model",
    "SampledGraph", "sample_adjacency",
    "SpectralEmbedding", "normalized_laplacian", "top_k_eigen",
]
