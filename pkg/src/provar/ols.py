"""Ordinary least squares via QR and heteroscedasticity-robust covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import DesignMatrix, _readonly

# Designs with a diagonal-ratio condition estimate above this are rejected
# rather than silently pseudo-inverted.
CONDITION_LIMIT = 1e10


class SingularDesignError(ValueError):
    """Design is rank deficient or too ill-conditioned to trust."""

    def __init__(self, columns: list[str], cond: float):
        self.columns = columns
        self.cond = cond
        cols = ", ".join(columns) if columns else "<unknown>"
        super().__init__(
            f"design is singular or ill-conditioned (cond ~ {cond:.3g}); "
            f"offending column(s): {cols}"
        )


@dataclass(frozen=True)
class OlsFit:
    """Least-squares solution plus the pieces the sandwich estimator needs."""

    coefficients: np.ndarray  # (q,)
    residuals: np.ndarray  # (n,)
    gram_inverse: np.ndarray  # (q, q) = (Z'Z)^-1, from the QR factors
    layout: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _readonly(self.coefficients))
        object.__setattr__(self, "residuals", _readonly(self.residuals))
        object.__setattr__(self, "gram_inverse", _readonly(self.gram_inverse))
        object.__setattr__(self, "layout", tuple(self.layout))

    def coefficient(self, tag: str) -> float:
        return float(self.coefficients[self.layout.index(tag)])


@dataclass(frozen=True)
class RobustCovariance:
    """Model-robust covariance of the OLS coefficients."""

    matrix: np.ndarray  # (q, q)
    flavor: str  # "HC0" or "HC1"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))

    def se(self, index: int) -> float:
        return float(np.sqrt(self.matrix[index, index]))


def fit_ols(design: DesignMatrix, outcome: np.ndarray) -> OlsFit:
    """Fit Y on the design columns by least squares.

    Solved through a pivoted QR decomposition; (Z'Z)^-1 comes from the R
    factor, never from explicitly forming the normal equations. Raises
    SingularDesignError, naming the offending columns, when the diagonal of R
    indicates rank deficiency or a condition estimate above CONDITION_LIMIT
    (e.g. a prognostic score that is an exact linear function of the
    covariates).
    """
    z = design.columns
    y = np.asarray(outcome, dtype=float).reshape(-1)
    n, q = z.shape
    if y.shape[0] != n:
        raise ValueError("outcome length does not match design")
    if n <= q:
        raise ValueError(f"need n > q, got n={n}, q={q}")

    qmat, rmat, piv = scipy.linalg.qr(z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rmat))
    dmax = diag.max() if diag.size else 0.0
    if dmax == 0.0:
        raise SingularDesignError(list(design.layout), np.inf)
    cond = np.inf if diag.min() == 0.0 else dmax / diag.min()
    if cond > CONDITION_LIMIT:
        bad = [design.layout[piv[i]] for i in range(q) if diag[i] <= dmax / CONDITION_LIMIT]
        raise SingularDesignError(bad, cond)

    beta_piv = scipy.linalg.solve_triangular(rmat, qmat.T @ y)
    beta = np.empty(q)
    beta[piv] = beta_piv

    r_inv = scipy.linalg.solve_triangular(rmat, np.eye(q))
    gram_piv = r_inv @ r_inv.T
    gram = np.empty((q, q))
    gram[np.ix_(piv, piv)] = gram_piv
    gram = (gram + gram.T) / 2.0

    residuals = y - z @ beta
    return OlsFit(beta, residuals, gram, design.layout)


def sandwich_covariance(
    design: DesignMatrix, outcome: np.ndarray, fit: OlsFit, flavor: str = "HC0"
) -> RobustCovariance:
    """Heteroscedasticity-robust covariance of the fitted coefficients:
    (Z'Z)^-1 (sum_i e_i^2 z_i z_i') (Z'Z)^-1, with HC1 scaling by n/(n-q)."""
    if flavor not in ("HC0", "HC1"):
        raise ValueError(f"unknown sandwich flavor {flavor!r}; use HC0 or HC1")
    z = design.columns
    n, q = z.shape
    ze = z * fit.residuals[:, None]
    meat = ze.T @ ze
    cov = fit.gram_inverse @ meat @ fit.gram_inverse
    if flavor == "HC1":
        cov = cov * (n / (n - q))
    cov = (cov + cov.T) / 2.0
    return RobustCovariance(cov, flavor)
