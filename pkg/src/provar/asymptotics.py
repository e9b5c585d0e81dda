"""Closed-form large-sample variances for the implemented estimators, the
efficiency gain from adding a prognostic score, and single-covariate plug-in
variance estimates.

All avar_* functions return n * variance (the asymptotic scale); divide by the
sample size at the call site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONDITION_LIMIT = 1e10


def _spd_solve(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve mat @ x = rhs for a symmetric positive-definite mat, with the
    same condition guard the regression core uses."""
    ev = np.linalg.eigvalsh(mat)
    if ev[0] <= 0.0 or ev[-1] / ev[0] > CONDITION_LIMIT:
        raise ValueError(f"{what} is singular or ill-conditioned")
    return np.linalg.solve(mat, rhs)


@dataclass(frozen=True)
class PopulationParams:
    """Population moments feeding the variance formulas.

    Arm labels: 0 = control, 1 = treatment. Score moments default to an
    uninformative (absent) score; they only matter for the score-reduction
    formula.
    """

    pi1: float  # treatment allocation probability
    sigma0: float  # sd of Y0
    sigma1: float  # sd of Y1
    sigma_x: np.ndarray  # (p, p) covariate covariance
    xi0: np.ndarray  # (p,) Cov(Y0, X)
    xi1: np.ndarray  # (p,) Cov(Y1, X)
    zeta: np.ndarray | None = None  # (p,) Cov(X, M)
    sigma_m: float = 0.0  # sd of the score M
    xi0m: float = 0.0  # Cov(Y0, M)
    xi1m: float = 0.0  # Cov(Y1, M)

    def __post_init__(self):
        sx = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        object.__setattr__(self, "sigma_x", sx)
        p = sx.shape[0]
        object.__setattr__(self, "xi0", np.asarray(self.xi0, dtype=float).reshape(p))
        object.__setattr__(self, "xi1", np.asarray(self.xi1, dtype=float).reshape(p))
        zeta = np.zeros(p) if self.zeta is None else np.asarray(self.zeta, dtype=float).reshape(p)
        object.__setattr__(self, "zeta", zeta)
        if not 0.0 < self.pi1 < 1.0:
            raise ValueError("pi1 must be in (0, 1)")
        if self.sigma0 < 0 or self.sigma1 < 0 or self.sigma_m < 0:
            raise ValueError("standard deviations must be nonnegative")
        if not np.allclose(sx, sx.T, atol=1e-10):
            raise ValueError("sigma_x must be symmetric")
        ev = np.linalg.eigvalsh(sx)
        if ev[0] <= 0.0:
            raise ValueError("sigma_x must be positive definite")
        bordered = np.block([[sx, zeta[:, None]], [zeta[None, :], [[self.sigma_m**2]]]])
        if np.linalg.eigvalsh(bordered)[0] < -1e-10 * max(1.0, ev[-1]):
            raise ValueError("[sigma_x, zeta; zeta', sigma_m^2] is not a covariance (not PSD)")

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    @property
    def p(self) -> int:
        return self.sigma_x.shape[0]

    @property
    def xi(self) -> np.ndarray:
        """pi0*xi0 + pi1*xi1 (own-arm weighting)."""
        return self.pi0 * self.xi0 + self.pi1 * self.xi1

    @property
    def xi_star(self) -> np.ndarray:
        """pi1*xi0 + pi0*xi1 (cross-arm weighting)."""
        return self.pi1 * self.xi0 + self.pi0 * self.xi1

    @property
    def rho0(self) -> float:
        return self.xi0m / (self.sigma_m * self.sigma0)

    @property
    def rho1(self) -> float:
        return self.xi1m / (self.sigma_m * self.sigma1)

    def with_score_appended(self) -> "PopulationParams":
        """The same population with the score M treated as one more covariate
        (score slots emptied)."""
        sx = np.block(
            [[self.sigma_x, self.zeta[:, None]], [self.zeta[None, :], [[self.sigma_m**2]]]]
        )
        return PopulationParams(
            pi1=self.pi1,
            sigma0=self.sigma0,
            sigma1=self.sigma1,
            sigma_x=sx,
            xi0=np.append(self.xi0, self.xi0m),
            xi1=np.append(self.xi1, self.xi1m),
        )

    @classmethod
    def from_samples(
        cls,
        x: np.ndarray,
        y0: np.ndarray,
        y1: np.ndarray,
        scores: np.ndarray | None = None,
        pi1: float = 0.5,
    ) -> "PopulationParams":
        """Sample-moment construction from counterfactual draws (both
        potential outcomes observed, e.g. simulated data)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] < x.shape[1]:
            raise ValueError("expected rows = observations")
        xc = x - x.mean(axis=0)
        n = x.shape[0]
        y0c = y0 - y0.mean()
        y1c = y1 - y1.mean()
        kwargs = dict(
            pi1=pi1,
            sigma0=float(np.std(y0, ddof=1)),
            sigma1=float(np.std(y1, ddof=1)),
            sigma_x=(xc.T @ xc) / (n - 1),
            xi0=(xc.T @ y0c) / (n - 1),
            xi1=(xc.T @ y1c) / (n - 1),
        )
        if scores is not None:
            mc = scores - scores.mean()
            kwargs.update(
                zeta=(xc.T @ mc) / (n - 1),
                sigma_m=float(np.std(scores, ddof=1)),
                xi0m=float(mc @ y0c / (n - 1)),
                xi1m=float(mc @ y1c / (n - 1)),
            )
        return cls(**kwargs)


def avar_unadjusted(params: PopulationParams) -> float:
    """n * variance of the difference-in-means estimator."""
    return params.sigma0**2 / params.pi0 + params.sigma1**2 / params.pi1


def avar_ancova1(params: PopulationParams) -> float:
    """n * variance of uncentered covariate adjustment without interactions.

    Can exceed the unadjusted variance under unequal allocation with
    sufficiently unequal per-arm covariate-outcome covariances.
    """
    xi, xi_star = params.xi, params.xi_star
    v_xi = _spd_solve(params.sigma_x, xi, "sigma_x")
    scale = 1.0 / (params.pi0 * params.pi1)
    return avar_unadjusted(params) + scale * float(xi @ v_xi) - 2.0 * scale * float(xi_star @ v_xi)


def avar_ancova2(params: PopulationParams) -> float:
    """n * variance of centered covariate adjustment with treatment
    interactions; never above the unadjusted or no-interaction values."""
    xi_star = params.xi_star
    v_xi_star = _spd_solve(params.sigma_x, xi_star, "sigma_x")
    return avar_unadjusted(params) - float(xi_star @ v_xi_star) / (params.pi0 * params.pi1)


def avar_reduction_from_score(params: PopulationParams) -> float:
    """Drop in the interacted-adjustment variance from adding the score M to
    covariates X; always >= 0.

    Requires the score not to be linearly determined by the covariates
    (otherwise the regression itself would be singular).
    """
    v_zeta = _spd_solve(params.sigma_x, params.zeta, "sigma_x")
    denom = params.sigma_m**2 - float(params.zeta @ v_zeta)
    if denom <= 0.0:
        raise ValueError(
            "score is linearly determined by the covariates "
            f"(residual variance {denom:.3g}); the reduction is undefined"
        )
    xi_m_star = params.pi0 * params.xi1m + params.pi1 * params.xi0m
    xi_x_star = params.xi_star
    num = (xi_m_star - float(xi_x_star @ v_zeta)) ** 2
    return num / denom / (params.pi0 * params.pi1)


def nu_hat_ancova1(
    sigma0: float, sigma1: float, rho0: float, rho1: float, n0: int, n1: int
) -> float:
    """Single-covariate plug-in variance estimate for uncentered adjustment
    (already on the 1/n scale)."""
    if n0 < 2 or n1 < 2:
        raise ValueError("need at least 2 observations per arm")
    n = n0 + n1
    a = rho0 * sigma0 / n1 + rho1 * sigma1 / n0
    b = rho0 * sigma0 / n0 + rho1 * sigma1 / n1
    return sigma0**2 / n0 + sigma1**2 / n1 + (n0 * n1 / n) * a * a - 2.0 * (n0 * n1 / n) * a * b


def nu_hat_ancova2(
    sigma0: float,
    sigma1: float,
    rho0: float,
    rho1: float,
    n0: int,
    n1: int,
    match_theorem: bool = False,
) -> float:
    """Single-covariate plug-in variance estimate for interacted adjustment
    (1/n scale), as printed: sigma0^2/n0 + sigma1^2/n1 - (n0 n1/n) *
    (rho0 sigma0/n1 + rho1 sigma1/n0)^2.

    The printed cross term weights arms by the opposite arm's size; the
    variance formula it estimates weights by the own arm's size. The two only
    coincide for balanced arms or equal per-arm correlations times sds, so
    `match_theorem=True` switches to the own-arm weighting.
    """
    if n0 < 2 or n1 < 2:
        raise ValueError("need at least 2 observations per arm")
    n = n0 + n1
    if match_theorem:
        c = rho0 * sigma0 / n0 + rho1 * sigma1 / n1
    else:
        c = rho0 * sigma0 / n1 + rho1 * sigma1 / n0
    return sigma0**2 / n0 + sigma1**2 / n1 - (n0 * n1 / n) * c * c
