"""Marked SINR random graphs on Poisson point processes: simulation,
empirical measures, analytic kernels, and Monte Carlo verification."""

from .geometry import Box, Disk, distance, path_loss, q_alpha, unit_area_disk
from .pointprocess import (
    ExponentialMarks,
    MarkedConfiguration,
    replicate_rng,
    sample_configuration,
    sample_count,
)
from .sinr_graph import SinrGraph, SinrParams, build_graph, interference_at, sinr
from .theory import KernelParams, RateValue, p_lambda, r_lambda, shannon_entropy

__all__ = [
    "Box",
    "Disk",
    "ExponentialMarks",
    "KernelParams",
    "MarkedConfiguration",
    "RateValue",
    "SinrGraph",
    "SinrParams",
    "build_graph",
    "distance",
    "interference_at",
    "p_lambda",
    "path_loss",
    "q_alpha",
    "r_lambda",
    "replicate_rng",
    "sample_configuration",
    "sample_count",
    "shannon_entropy",
    "sinr",
    "unit_area_disk",
]

__version__ = "0.1.0"
