"""Prognostic covariate adjustment for two-arm randomized trials.

Train a prognostic model on historical control data, adjust a linear
treatment-effect analysis for the predicted outcomes, quantify the efficiency
gain with closed-form large-sample variances and a conservative power bound,
and validate everything with a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

from .dataset import (
    DesignMatrix,
    HistoricalDataset,
    TrialDataset,
    build_design,
    impute_column_means,
    load_historical_csv,
    load_trial_csv,
    write_trial_csv,
)
from .ols import OlsFit, RobustCovariance, SingularDesignError, fit_ols, sandwich_covariance
from .prognostic import (
    FittedPrognosticModel,
    ForestHyperparams,
    load_model,
    save_model,
    score_trial,
    train_forest,
    train_linear,
)
from .estimators import EffectEstimate, ancova1, ancova2, diff_in_means
from .asymptotics import (
    PopulationParams,
    avar_ancova1,
    avar_ancova2,
    avar_reduction_from_score,
    avar_unadjusted,
    nu_hat_ancova1,
    nu_hat_ancova2,
)
from .power import PowerSpec, power_at_n, required_n, variance_bound
from .simulation import (
    TABLE1,
    LinearGaussianDGP,
    ScenarioSpec,
    SimConfig,
    desk_config,
    mc_variance_check,
    run_scenario,
    run_table,
    sample_historical,
    sample_trial,
)

__all__ = [
    "DesignMatrix",
    "EffectEstimate",
    "FittedPrognosticModel",
    "ForestHyperparams",
    "HistoricalDataset",
    "LinearGaussianDGP",
    "OlsFit",
    "PopulationParams",
    "PowerSpec",
    "RobustCovariance",
    "ScenarioSpec",
    "SimConfig",
    "SingularDesignError",
    "TABLE1",
    "TrialDataset",
    "ancova1",
    "ancova2",
    "avar_ancova1",
    "avar_ancova2",
    "avar_reduction_from_score",
    "avar_unadjusted",
    "build_design",
    "desk_config",
    "diff_in_means",
    "fit_ols",
    "impute_column_means",
    "load_historical_csv",
    "load_model",
    "load_trial_csv",
    "mc_variance_check",
    "nu_hat_ancova1",
    "nu_hat_ancova2",
    "power_at_n",
    "required_n",
    "run_scenario",
    "run_table",
    "sample_historical",
    "sample_trial",
    "sandwich_covariance",
    "save_model",
    "score_trial",
    "train_forest",
    "train_linear",
    "variance_bound",
    "write_trial_csv",
]
