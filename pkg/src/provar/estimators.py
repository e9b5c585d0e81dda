"""Treatment-effect estimators: unadjusted, covariate-adjusted, and
prognostic-score-adjusted linear regressions with sandwich inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dataset import (
    INTERCEPT,
    TREATMENT,
    DesignMatrix,
    TrialDataset,
    build_design,
    covariate_tag,
)
from .ols import fit_ols, sandwich_covariance

ESTIMATOR_TAGS = ("unadjusted", "ancova1", "ancova2", "prognostic", "prognostic_no_interaction")


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate of the mean difference with robust z-based inference."""

    tau_hat: float
    std_error: float
    ci_low: float
    ci_high: float
    p_value: float
    alpha: float
    estimator_tag: str
    n0: int
    n1: int
    q: int  # number of regression columns

    def to_dict(self) -> dict:
        return {
            "estimator_tag": self.estimator_tag,
            "tau_hat": self.tau_hat,
            "std_error": self.std_error,
            "ci": [self.ci_low, self.ci_high],
            "p_value": self.p_value,
            "alpha": self.alpha,
            "n0": self.n0,
            "n1": self.n1,
            "q": self.q,
        }


def _estimate(
    design: DesignMatrix,
    outcome: np.ndarray,
    trial: TrialDataset,
    tag: str,
    alpha: float,
    hc: str,
) -> EffectEstimate:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    fit = fit_ols(design, outcome)
    cov = sandwich_covariance(design, outcome, fit, hc)
    k = design.index(TREATMENT)
    tau = float(fit.coefficients[k])
    se = cov.se(k)
    z_crit = float(norm.ppf(1.0 - alpha / 2.0))
    z = abs(tau) / se if se > 0.0 else (np.inf if tau != 0.0 else 0.0)
    p = float(2.0 * norm.sf(z))
    return EffectEstimate(
        tau_hat=tau,
        std_error=se,
        ci_low=tau - z_crit * se,
        ci_high=tau + z_crit * se,
        p_value=p,
        alpha=alpha,
        estimator_tag=tag,
        n0=trial.n0,
        n1=trial.n1,
        q=design.q,
    )


def diff_in_means(trial: TrialDataset, alpha: float = 0.05, hc: str = "HC0") -> EffectEstimate:
    """Unadjusted estimator: the regression of Y on [1, W~], whose treatment
    coefficient equals the arithmetic arm-mean difference exactly."""
    trial = trial.imputed()
    design = build_design(trial, include_covariates=False, include_interactions=False)
    return _estimate(design, trial.outcome, trial, "unadjusted", alpha, hc)


def ancova1(trial: TrialDataset, alpha: float = 0.05, hc: str = "HC0") -> EffectEstimate:
    """Covariate adjustment without interactions: regression of Y on the
    uncentered [1, W, X]."""
    trial = trial.imputed()
    if trial.n <= trial.p + 2:
        raise ValueError(f"need n > p+2, got n={trial.n}, p={trial.p}")
    cols = [np.ones(trial.n), trial.treatment.astype(float)]
    layout = [INTERCEPT, TREATMENT]
    for j, name in enumerate(trial.covariate_names):
        cols.append(trial.covariates[:, j])
        layout.append(covariate_tag(name))
    design = DesignMatrix(np.column_stack(cols), tuple(layout), np.zeros(len(cols)))
    return _estimate(design, trial.outcome, trial, "ancova1", alpha, hc)


def ancova2(
    trial: TrialDataset,
    scores: np.ndarray | None = None,
    alpha: float = 0.05,
    include_interactions: bool = True,
    include_covariates: bool = True,
    hc: str = "HC0",
) -> EffectEstimate:
    """Centered covariate adjustment, optionally including a prognostic score
    and treatment interactions.

    Tagged "ancova2" without scores, "prognostic" with scores and
    interactions, "prognostic_no_interaction" with scores and no interactions.
    """
    trial = trial.imputed()
    design = build_design(
        trial,
        scores=scores,
        include_covariates=include_covariates,
        include_interactions=include_interactions,
    )
    if scores is None:
        tag = "ancova2"
    elif include_interactions:
        tag = "prognostic"
    else:
        tag = "prognostic_no_interaction"
    return _estimate(design, trial.outcome, trial, tag, alpha, hc)
