"""Data container, parameter state, priors and log densities of the hierarchy.

    Y_i(t) = x_i(t)' beta + Z_i(t) + eps_i(t),   eps_i(t) ~ N(0, tau2_i)
    vec(Z) ~ N(0, R(phi1) kron sigma2 (D - alpha W)^{-1})

with inverse-gamma priors on ``sigma2`` and each ``tau2_i``, a normal prior
on ``beta``, ``Beta`` on ``alpha`` and a bounded uniform on ``phi1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .exceptions import NumericalError, ValidationError
from .graph import ArealGraph
from .kernel import TemporalDesign, TemporalFactor

__all__ = [
    "Dataset",
    "ModelParams",
    "Priors",
    "default_phi1_upper",
    "impute_missing",
    "log_likelihood",
    "log_posterior",
    "log_prior",
    "z_prior_logpdf",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcomes on a regions x times grid.

    Attributes
    ----------
    graph : ArealGraph
    design : TemporalDesign
    Y : (n_s, n_t) array, NaN at missing cells
    X : (n_s, n_t, p) covariates (intercept and seasonal dummies are just columns);
        ``p = 0`` is allowed
    covariate_names : tuple of str
    """

    graph: ArealGraph
    design: TemporalDesign
    Y: np.ndarray
    X: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        X = np.array(self.X, dtype=float)
        n_s, n_t = self.graph.n_regions, self.design.n_times
        if Y.shape != (n_s, n_t):
            raise ValidationError(f"Y has shape {Y.shape}, expected ({n_s}, {n_t})")
        if X.ndim == 2 and X.shape == (n_s, n_t):
            X = X[:, :, None]
        if X.ndim != 3 or X.shape[:2] != (n_s, n_t):
            raise ValidationError(f"X has shape {X.shape}, expected ({n_s}, {n_t}, p)")
        if not np.all(np.isfinite(X)):
            raise ValidationError("covariates must be finite (missing X is not supported)")
        if np.any(np.isinf(Y)):
            raise ValidationError("Y contains infinite values")
        empty = np.flatnonzero(np.all(np.isnan(Y), axis=1))
        if empty.size:
            raise ValidationError(f"regions with no observed outcomes: {empty.tolist()}")
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(X.shape[2]))
        if len(names) != X.shape[2]:
            raise ValidationError("covariate_names length does not match X")
        Y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "covariate_names", names)
        mask = ~np.isnan(Y)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def n_regions(self) -> int:
        return self.graph.n_regions

    @property
    def n_times(self) -> int:
        return self.design.n_times

    @property
    def n_covariates(self) -> int:
        return self.X.shape[2]

    @property
    def n_obs(self) -> int:
        return int(self.mask.sum())

    @property
    def missing_index(self) -> tuple[np.ndarray, np.ndarray]:
        """``(region, time)`` index arrays of missing cells, region-major."""
        return np.nonzero(~self.mask)

    def fitted(self, beta) -> np.ndarray:
        """``X beta`` as an ``(n_s, n_t)`` matrix."""
        return self.X @ np.asarray(beta, dtype=float)

    def with_Y(self, Y) -> "Dataset":
        return replace(self, Y=Y)

    def with_X(self, X, covariate_names=()) -> "Dataset":
        return replace(self, X=X, covariate_names=tuple(covariate_names))

    def intercept_columns(self) -> list[int]:
        """Indices of covariate columns that are constant over all cells."""
        flat = self.X.reshape(-1, self.n_covariates)
        return [k for k in range(flat.shape[1]) if np.ptp(flat[:, k]) == 0 and flat[0, k] != 0]


@dataclass
class ModelParams:
    """One MCMC state ``theta`` plus the latent field ``Z``."""

    beta: np.ndarray
    sigma2: float
    tau2: np.ndarray
    alpha: float
    phi1: float
    Z: np.ndarray

    def copy(self) -> "ModelParams":
        return ModelParams(
            beta=np.array(self.beta, dtype=float),
            sigma2=float(self.sigma2),
            tau2=np.array(self.tau2, dtype=float),
            alpha=float(self.alpha),
            phi1=float(self.phi1),
            Z=np.array(self.Z, dtype=float),
        )

    def in_support(self) -> bool:
        return bool(
            self.sigma2 > 0
            and np.all(self.tau2 > 0)
            and 0 < self.alpha < 1
            and self.phi1 > 0
            and np.all(np.isfinite(self.Z))
            and np.all(np.isfinite(self.beta))
        )


def default_phi1_upper(design: TemporalDesign, target: float = 0.01) -> float:
    """Decay rate at which the correlation between the two closest observation
    times falls to ``target``; beyond it neighbouring times are uncorrelated."""
    gap = float(np.min(np.diff(design.times))) if design.n_times > 1 else 1.0
    # solve (1 + u) exp(-u) = target for u by bisection
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (1 + mid) * math.exp(-mid) > target:
            lo = mid
        else:
            hi = mid
    return hi / gap


@dataclass
class Priors:
    """Hyperparameters. ``phi1_upper=None`` means :func:`default_phi1_upper`.

    Inverse-gamma densities are shape/scale: ``p(x) ∝ x^{-a-1} exp(-b/x)``.
    """

    mu_beta: np.ndarray | float = 0.0
    Sigma_beta: np.ndarray | float = 1e4
    a_sigma: float = 0.01
    b_sigma: float = 0.01
    a_tau: float = 0.01
    b_tau: float = 0.01
    a_alpha: float = 1.0
    b_alpha: float = 1.0
    phi1_lower: float = 1e-3
    phi1_upper: float | None = None

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "a_tau", "b_tau", "a_alpha", "b_alpha"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not self.phi1_lower > 0:
            raise ValidationError("phi1_lower must be positive")
        if self.phi1_upper is not None and not self.phi1_upper > self.phi1_lower:
            raise ValidationError("phi1_upper must exceed phi1_lower")

    def beta_prior(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """Prior mean vector and covariance matrix for ``p`` coefficients."""
        mu = np.broadcast_to(np.asarray(self.mu_beta, dtype=float), (p,)).copy()
        S = np.asarray(self.Sigma_beta, dtype=float)
        if S.ndim == 0:
            S = float(S) * np.eye(p)
        elif S.ndim == 1:
            S = np.diag(S)
        if S.shape != (p, p):
            raise ValidationError(f"Sigma_beta has shape {S.shape}, expected ({p}, {p})")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("Sigma_beta must be positive definite") from exc
        return mu, S

    def phi1_bounds(self, design: TemporalDesign) -> tuple[float, float]:
        hi = self.phi1_upper if self.phi1_upper is not None else default_phi1_upper(design)
        return float(self.phi1_lower), float(hi)


def log_likelihood(ds: Dataset, params: ModelParams, Y: np.ndarray | None = None) -> float:
    """Gaussian log density of the observed cells.

    ``Y`` overrides ``ds.Y`` (used for data-augmented states where missing
    cells hold imputed values); cells that are NaN in it are skipped.
    """
    Y = ds.Y if Y is None else Y
    mask = ~np.isnan(Y)
    tau2 = np.broadcast_to(np.asarray(params.tau2, dtype=float)[:, None], Y.shape)
    r = (Y - ds.fitted(params.beta) - params.Z)[mask]
    t2 = tau2[mask]
    return float(-0.5 * np.sum(LOG_2PI + np.log(t2) + r * r / t2))


def z_prior_logpdf(
    graph: ArealGraph,
    Z: np.ndarray,
    sigma2: float,
    alpha: float,
    tfac: TemporalFactor,
) -> float:
    """``log N(vec Z | 0, R kron sigma2 (D - alpha W)^{-1})``."""
    Z = np.asarray(Z, dtype=float)
    n_s, n_t = Z.shape
    if n_s != graph.n_regions or n_t != tfac.design.n_times:
        raise ValidationError(
            f"Z has shape {Z.shape}, expected ({graph.n_regions}, {tfac.design.n_times})"
        )
    P = graph.D - alpha * graph.W_dense
    logdet_Q = graph.logdet_car(alpha) - n_s * math.log(sigma2)
    logdet_cov = n_s * tfac.logdet - n_t * logdet_Q
    quad = float(np.sum((Z @ tfac.R_inv) * (P @ Z))) / sigma2
    return -0.5 * (n_s * n_t * LOG_2PI + logdet_cov + quad)


def _ig_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    return a * math.log(b) - math.lgamma(a) - (a + 1) * np.log(x) - b / x


def log_prior(
    params: ModelParams,
    priors: Priors,
    graph: ArealGraph,
    design: TemporalDesign | None = None,
    ds: Dataset | None = None,
    tfac: TemporalFactor | None = None,
) -> float:
    """Sum of prior log densities, including the latent-field prior.

    Returns ``-inf`` whenever a parameter leaves its support.
    """
    if ds is not None:
        design = ds.design
    if design is None:
        raise ValidationError("log_prior needs the temporal design (pass design= or ds=)")
    lo, hi = priors.phi1_bounds(design)
    if not params.in_support() or not (lo <= params.phi1 <= hi):
        return -math.inf
    p = np.asarray(params.beta).size
    mu, S = priors.beta_prior(p)
    lp = float(stats.multivariate_normal.logpdf(params.beta, mu, S))
    lp += float(_ig_logpdf(params.sigma2, priors.a_sigma, priors.b_sigma))
    lp += float(np.sum(_ig_logpdf(params.tau2, priors.a_tau, priors.b_tau)))
    lp += float(stats.beta.logpdf(params.alpha, priors.a_alpha, priors.b_alpha))
    lp += -math.log(hi - lo)
    if tfac is None or tfac.phi1 != params.phi1:
        try:
            tfac = TemporalFactor(design, params.phi1)
        except NumericalError:
            return -math.inf
    lp += z_prior_logpdf(graph, params.Z, params.sigma2, params.alpha, tfac)
    return lp


def log_posterior(ds: Dataset, params: ModelParams, priors: Priors, Y=None) -> float:
    """Unnormalized joint log posterior ``log p(theta, Z | Y)``."""
    lp = log_prior(params, priors, ds.graph, ds=ds)
    if not np.isfinite(lp):
        return lp
    return lp + log_likelihood(ds, params, Y)


def impute_missing(ds: Dataset, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw every missing outcome from ``N(x'beta + Z, tau2_i)``.

    Returns values aligned with :attr:`Dataset.missing_index`.
    """
    ri, ti = ds.missing_index
    if ri.size == 0:
        return np.empty(0)
    mean = (ds.fitted(params.beta) + params.Z)[ri, ti]
    sd = np.sqrt(np.asarray(params.tau2, dtype=float)[ri])
    return mean + sd * rng.standard_normal(ri.size)
