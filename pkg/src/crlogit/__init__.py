"""Minimum power-divergence estimation for clustered multinomial data.

Fits multinomial logistic models to stratified cluster samples by
minimizing a Cressie-Read power divergence between observed and model
cell probabilities, with sandwich covariances, robust Wald-type tests,
power and sample-size planning, influence diagnostics, overdispersed
samplers, and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .data import (
    ClusterRecord,
    SurveyDataset,
    empirical_probability_vector,
    load_dataset,
    save_dataset,
    serialize_dataset,
)
from .divergence import divergence, phi, score_matrix, score_total
from .errors import DataError, NumericalError
from .estimator import FitConfig, FitResult, fit, g_hat, j_hat, sandwich
from .inference import (
    LinearHypothesis,
    WaldReport,
    approximate_power,
    ell_star,
    noncentrality,
    noncentrality_from_delta,
    required_sample_size,
    sigma_w_sq,
    wald_test,
)
from .model import beta_matrix, delta_matrix, delta_star, link, link_all
from .robustness import (
    ContaminationPoint,
    InfluenceReport,
    influence,
    influence2_wald,
    influence_vector,
)
from .samplers import (
    ContaminationSpec,
    OverdispersionSpec,
    generate_dataset,
    rng_for,
    sample_cluster,
    sample_clusters,
)
from .simulate import CellResult, ExperimentPlan, emit_report, run_experiment

__all__ = [
    "__version__",
    "ClusterRecord",
    "SurveyDataset",
    "empirical_probability_vector",
    "load_dataset",
    "save_dataset",
    "serialize_dataset",
    "divergence",
    "phi",
    "score_matrix",
    "score_total",
    "DataError",
    "NumericalError",
    "FitConfig",
    "FitResult",
    "fit",
    "g_hat",
    "j_hat",
    "sandwich",
    "LinearHypothesis",
    "WaldReport",
    "approximate_power",
    "ell_star",
    "noncentrality",
    "noncentrality_from_delta",
    "required_sample_size",
    "sigma_w_sq",
    "wald_test",
    "beta_matrix",
    "delta_matrix",
    "delta_star",
    "link",
    "link_all",
    "ContaminationPoint",
    "InfluenceReport",
    "influence",
    "influence2_wald",
    "influence_vector",
    "ContaminationSpec",
    "OverdispersionSpec",
    "generate_dataset",
    "rng_for",
    "sample_cluster",
    "sample_clusters",
    "CellResult",
    "ExperimentPlan",
    "emit_report",
    "run_experiment",
]
