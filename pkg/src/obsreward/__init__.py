"""Reward models on confounded observational outcomes.

Simulate confounded outcome data, fit ridge / Bradley-Terry reward heads on
raw or deconfounded outcomes, estimate confounder effects by OLS, 2SLS or
cross-fitted partialling-out, and compute the evaluation diagnostics.
"""

__version__ = "0.1.0"

from .model import Dataset, DgpConfig, Item, PreferencePair, validate
from .reward import FitOptions, RewardModel, fit_pairwise_bt, fit_ridge, predict
from .deconfound import DeconfoundFit, fit_dml, fit_iv2sls, fit_ols, residualize

__all__ = [
    "Dataset", "DgpConfig", "Item", "PreferencePair", "validate",
    "FitOptions", "RewardModel", "fit_pairwise_bt", "fit_ridge", "predict",
    "DeconfoundFit", "fit_dml", "fit_iv2sls", "fit_ols", "residualize",
]
