"""Unsupervised phenotyping of volumetric scans: features, autoencoder, MML mixture, survival."""

from ._phenoclust import (
    Autoencoder,
    Mixture,
    NumericError,
    QuantileMap,
    concordance_index,
    cox_fit,
    default_layer_sizes,
    extract_features,
    feature_names,
    fit_mixture,
    fit_quantiles,
    kaplan_meier,
    log_rank,
    run_pipeline,
    synthetic_cohort,
    train_autoencoder,
)

__all__ = [
    "Autoencoder",
    "Mixture",
    "NumericError",
    "QuantileMap",
    "concordance_index",
    "cox_fit",
    "default_layer_sizes",
    "extract_features",
    "feature_names",
    "fit_mixture",
    "fit_quantiles",
    "kaplan_meier",
    "log_rank",
    "run_pipeline",
    "synthetic_cohort",
    "train_autoencoder",
]
