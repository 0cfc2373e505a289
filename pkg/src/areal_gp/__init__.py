"""Areally referenced temporal Gaussian process models.

Outcomes on a regions x times grid are modelled as covariate effects plus a
latent field with a CAR spatial structure and a Matérn (3/2) temporal
correlation. The package samples the posterior by MCMC and derives
interpolated values and temporal gradients of the latent field by
composition sampling.
"""

from importlib import resources
from pathlib import Path

from .baselines import drop_intercept, fit_baseline
from .diagnostics import credible_interval, effective_sample_size
from .exceptions import NumericalError, ValidationError
from .graph import ArealGraph, build_graph, car_precision, grid_graph, mrf_full_conditional
from .io import read_adjacency, read_chain, read_dataset, write_chain, write_dataset
from .kernel import (
    Matern32Kernel,
    TemporalDesign,
    correlation_matrix,
    neg_rho_second_at_zero,
    rho,
    rho_prime,
)
from .kron import SeparableCovariance, kron_logdet, kron_sample, kron_solve
from .mcmc import PosteriorChain, SamplerConfig, run_chain
from .model import Dataset, ModelParams, Priors, log_likelihood, log_posterior, log_prior
from .predictive import (
    GradientPosterior,
    gradient_conditional,
    gradient_posterior,
    interpolate_Z,
    predict_outcome,
    replicate_outcomes,
)
from .scoring import ScoreReport, dic, ds_score, score_models
from .simulate import (
    CoverageReport,
    GPTruth,
    SimSpec,
    SinusoidTruth,
    run_coverage_study,
    simulate_gp_dataset,
    simulate_sinusoid_dataset,
)

__version__ = "0.1.0"


def example_paths() -> tuple[Path, Path]:
    """Paths of the bundled ``(data CSV, adjacency file)`` (4 regions, 12 times)."""
    root = resources.files("areal_gp") / "data"
    return Path(str(root / "example_data.csv")), Path(str(root / "example_adjacency.txt"))


__all__ = [
    "ArealGraph",
    "CoverageReport",
    "Dataset",
    "GPTruth",
    "GradientPosterior",
    "Matern32Kernel",
    "ModelParams",
    "NumericalError",
    "PosteriorChain",
    "Priors",
    "SamplerConfig",
    "ScoreReport",
    "SeparableCovariance",
    "SimSpec",
    "SinusoidTruth",
    "TemporalDesign",
    "ValidationError",
    "build_graph",
    "car_precision",
    "correlation_matrix",
    "credible_interval",
    "dic",
    "drop_intercept",
    "ds_score",
    "effective_sample_size",
    "example_paths",
    "fit_baseline",
    "gradient_conditional",
    "gradient_posterior",
    "grid_graph",
    "interpolate_Z",
    "kron_logdet",
    "kron_sample",
    "kron_solve",
    "log_likelihood",
    "log_posterior",
    "log_prior",
    "mrf_full_conditional",
    "neg_rho_second_at_zero",
    "predict_outcome",
    "read_adjacency",
    "read_chain",
    "read_dataset",
    "replicate_outcomes",
    "rho",
    "rho_prime",
    "run_chain",
    "run_coverage_study",
    "score_models",
    "simulate_gp_dataset",
    "simulate_sinusoid_dataset",
    "write_chain",
    "write_dataset",
]
