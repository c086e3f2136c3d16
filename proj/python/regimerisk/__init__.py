"""Regime-conditional VaR and stress scenario design."""

from ._core import (
    ConfigError,
    DataError,
    Error,
    NumericError,
    VIHyperparams,
    VariationalState,
    cavi_fit,
    conditional_shift,
    default_hyperparams,
    dirichlet_means,
    elbo,
    gaussian_var,
    gen_market_panel,
    hs_var,
    mixture_cdf,
    peak_loss_surface,
    predictive_category_probs,
    predictive_cluster_probs,
    run_cli,
    target_loss,
    weighted_var,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "NumericError",
    "VIHyperparams",
    "VariationalState",
    "cavi_fit",
    "conditional_shift",
    "default_hyperparams",
    "dirichlet_means",
    "elbo",
    "gaussian_var",
    "gen_market_panel",
    "hs_var",
    "mixture_cdf",
    "peak_loss_surface",
    "predictive_category_probs",
    "predictive_cluster_probs",
    "run_cli",
    "target_loss",
    "weighted_var",
]
