"""Posterior predictive inference: latent interpolation, temporal gradients,
outcome prediction at arbitrary times and replicate data.

Every quantity is a composition sample: for each stored draw
``(theta, Z)`` one value is drawn from a Gaussian conditional given that
draw. Because the space-time covariance is separable, the conditionals of
``Z(t0)`` and ``Z'(t0)`` given ``Z`` reduce to ``n_t x n_t`` solves:

    Z(t0)  | Z ~ N(Z R^{-1} r0,  sigma2 (1      - r0' R^{-1} r0) (D - alpha W)^{-1})
    Z'(t0) | Z ~ N(Z R^{-1} r1,  sigma2 (phi1^2 - r1' R^{-1} r1) (D - alpha W)^{-1})

with ``r0_j = rho(t0 - t_j)`` and ``r1_j = rho'(t0 - t_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import NumericalError, ValidationError
from .graph import ArealGraph
from .kernel import TemporalDesign, TemporalFactor, neg_rho_second_at_zero, rho, rho_prime
from .mcmc import PosteriorChain
from .model import Dataset, ModelParams

__all__ = [
    "GradientCrossCov",
    "GradientPosterior",
    "PredictiveSummary",
    "gradient_conditional",
    "gradient_cross_cov",
    "gradient_posterior",
    "interpolate_Z",
    "latent_conditional",
    "predict_outcome",
    "replicate_outcomes",
]

_NEG_TOL = 1e-10


@dataclass(frozen=True)
class GradientCrossCov:
    """Blocks of ``(K_Z')'`` and ``-K_Z''(0)`` for one ``(theta, t0)``.

    ``Kprime_blocks[j] = K_Z'(t_j - t0)``; ``Kpp0 = sigma2 phi1^2 (D - alpha W)^{-1}``.
    """

    t0: float
    Kprime_blocks: np.ndarray
    Kpp0: np.ndarray


def _check_t0(t0) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t0, dtype=float))
    if t.ndim != 1 or t.size == 0:
        raise ValidationError("t0 must be a nonempty scalar or 1-D list")
    if not np.all(np.isfinite(t)):
        raise ValidationError(f"t0 must be finite, got {t0!r}")
    return t


def _spatial_cov(graph: ArealGraph, alpha: float) -> np.ndarray:
    return np.linalg.inv(graph.D - alpha * graph.W_dense)


def gradient_cross_cov(params: ModelParams, t0: float, design: TemporalDesign, graph: ArealGraph):
    t0 = float(_check_t0(t0)[0])
    S = _spatial_cov(graph, params.alpha)
    c = rho_prime(design.times - t0, params.phi1)
    blocks = params.sigma2 * c[:, None, None] * S[None, :, :]
    return GradientCrossCov(t0, blocks, params.sigma2 * neg_rho_second_at_zero(params.phi1) * S)


def _conditional(params, t0, design, graph, kind, tfac):
    t0 = float(_check_t0(t0)[0])
    if tfac is None or tfac.phi1 != params.phi1:
        tfac = TemporalFactor(design, params.phi1)
    lag = t0 - design.times
    if kind == "gradient":
        r = rho_prime(lag, params.phi1)
        c0 = neg_rho_second_at_zero(params.phi1)
    else:
        r = rho(lag, params.phi1)
        c0 = 1.0
    a = tfac.solve(r)
    mean = np.asarray(params.Z) @ a
    scale = c0 - float(r @ a)
    if scale < -_NEG_TOL * max(c0, 1.0):
        raise NumericalError(f"conditional variance factor negative ({scale:.3g}) at t0={t0}")
    scale = max(scale, 0.0)
    cov = params.sigma2 * scale * _spatial_cov(graph, params.alpha)
    return mean, 0.5 * (cov + cov.T)


def gradient_conditional(params, t0, design, graph, tfac=None):
    """Mean and covariance of ``Z'(t0)`` given ``Z`` and ``theta``."""
    return _conditional(params, t0, design, graph, "gradient", tfac)


def latent_conditional(params, t0, design, graph, tfac=None):
    """Mean and covariance of ``Z(t0)`` given ``Z`` and ``theta``."""
    return _conditional(params, t0, design, graph, "latent", tfac)


@dataclass
class PredictiveSummary:
    """Composition draws ``(n_draws, n_s, n_t0)`` with per-cell summaries."""

    quantity: str
    t0: np.ndarray
    draws: np.ndarray
    level: float = 0.95

    def __post_init__(self):
        q = 0.5 * (1.0 - self.level)
        self.mean = self.draws.mean(axis=0)
        self.lower, self.upper = np.quantile(self.draws, [q, 1.0 - q], axis=0)

    @property
    def significant(self) -> np.ndarray:
        """Interval excludes zero."""
        return (self.lower > 0) | (self.upper < 0)

    def covers(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


class GradientPosterior(PredictiveSummary):
    """Composition draws of ``Z'(t0)``; :attr:`significant` flags intervals excluding 0."""


def _require_gp(chain: PosteriorChain):
    if chain.n_draws == 0:
        raise ValidationError("chain has no stored draws")
    if chain.sigma2 is None or chain.phi1 is None or chain.alpha is None:
        raise ValidationError(f"'{chain.model}' chain has no latent-process parameters")


def _check_dims(chain: PosteriorChain, ds: Dataset):
    if chain.Z.shape[1:] != (ds.n_regions, ds.n_times) or chain.beta.shape[1] != ds.n_covariates:
        raise ValidationError(
            f"chain dimensions {chain.Z.shape[1:]}/{chain.beta.shape[1]} do not match data "
            f"({ds.n_regions}, {ds.n_times})/{ds.n_covariates}"
        )


def _latent_draws(chain, t0, ds, kind, rng):
    _require_gp(chain)
    _check_dims(chain, ds)
    t0 = _check_t0(t0)
    design, graph = ds.design, ds.graph
    n, n_s = chain.n_draws, ds.n_regions
    out = np.empty((n, n_s, t0.size))
    lags = t0[None, :] - design.times[:, None]
    tfac = None
    chol_cache = (None, None)
    for k in range(n):
        phi1, sigma2, alpha = chain.phi1[k], chain.sigma2[k], chain.alpha[k]
        if tfac is None or tfac.phi1 != phi1:
            tfac = TemporalFactor(design, phi1)
        if kind == "gradient":
            r = rho_prime(lags, phi1)
            c0 = phi1 * phi1
        else:
            r = rho(lags, phi1)
            c0 = 1.0
        A = tfac.solve(r)
        mean = chain.Z[k] @ A
        scale = c0 - np.sum(r * A, axis=0)
        if np.any(scale < -_NEG_TOL * max(c0, 1.0)):
            raise NumericalError(f"negative conditional variance at draw {k}")
        scale = np.maximum(scale, 0.0)
        if chol_cache[0] != alpha:
            L = np.linalg.cholesky(graph.D - alpha * graph.W_dense)
            chol_cache = (alpha, L)
        L = chol_cache[1]
        E = rng.standard_normal((n_s, t0.size))
        noise = sla.solve_triangular(L, E, lower=True, trans="T", check_finite=False)
        out[k] = mean + np.sqrt(sigma2 * scale)[None, :] * noise
    return t0, out


def gradient_posterior(chain, t0, ds, rng=None, level: float = 0.95) -> GradientPosterior:
    """Posterior predictive draws of the temporal gradient ``Z'(t0)``.

    ``t0`` may be a scalar or a list of times; draws have shape
    ``(n_draws, n_s, len(t0))``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    t0, draws = _latent_draws(chain, t0, ds, "gradient", rng)
    return GradientPosterior("gradient", t0, draws, level)


def interpolate_Z(chain, t0, ds, rng=None, level: float = 0.95) -> PredictiveSummary:
    """Posterior predictive draws of the latent process ``Z(t0)``."""
    rng = np.random.default_rng(0) if rng is None else rng
    t0, draws = _latent_draws(chain, t0, ds, "latent", rng)
    return PredictiveSummary("latent", t0, draws, level)


def _covariates_at(ds: Dataset, t0: np.ndarray, covariates):
    """Covariate array ``(n_s, n_t0, p)``; observed times fall back to ``ds.X``."""
    n_s, p = ds.n_regions, ds.n_covariates
    if covariates is not None:
        C = np.asarray(covariates, dtype=float)
        if C.shape == (n_s, p):
            C = np.repeat(C[:, None, :], t0.size, axis=1)
        elif C.shape == (p,):
            C = np.broadcast_to(C, (n_s, t0.size, p)).copy()
        if C.shape != (n_s, t0.size, p):
            raise ValidationError(
                f"covariates must have shape (p,), (n_s, p) or (n_s, n_t0, p); got {C.shape}"
            )
        bad = np.flatnonzero(~np.all(np.isfinite(C), axis=(0, 2)))
        if bad.size:
            raise ValidationError(f"missing covariates at t0={t0[bad[0]]:g}")
        return C
    C = np.empty((n_s, t0.size, p))
    for m, t in enumerate(t0):
        hit = np.flatnonzero(ds.design.times == t)
        if not hit.size:
            raise ValidationError(
                f"missing covariates at t0={t:g} (not an observed time; supply them explicitly)"
            )
        C[:, m, :] = ds.X[:, hit[0], :]
    return C


def predict_outcome(chain, t0, ds, covariates=None, region=None, rng=None, level: float = 0.95):
    """Posterior predictive draws of ``Y(t0)``.

    Returns ``(outcome, latent)`` summaries: ``outcome`` includes the noise
    ``N(0, tau2_i)``, ``latent`` is the fitted curve ``x(t0)'beta + Z(t0)``.
    With ``region`` given, only that region's row is kept.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    t0 = _check_t0(t0)
    C = _covariates_at(ds, t0, covariates)
    t0, zdraws = _latent_draws(chain, t0, ds, "latent", rng)
    fitted = np.einsum("stp,np->nst", C, chain.beta) + zdraws
    noise = np.sqrt(chain.tau2)[:, :, None] * rng.standard_normal(fitted.shape)
    ydraws = fitted + noise
    if region is not None:
        if not 0 <= region < ds.n_regions:
            raise ValidationError(f"region {region} out of range")
        fitted = fitted[:, [region], :]
        ydraws = ydraws[:, [region], :]
    return PredictiveSummary("outcome", t0, ydraws, level), PredictiveSummary("fitted", t0, fitted, level)


def replicate_outcomes(chain: PosteriorChain, ds: Dataset, rng=None) -> np.ndarray:
    """Independent replicates ``(n_draws, n_s, n_t)``; NaN where ``Y`` is unobserved."""
    rng = np.random.default_rng(0) if rng is None else rng
    if chain.n_draws == 0:
        raise ValidationError("chain has no stored draws")
    _check_dims(chain, ds)
    mean = np.einsum("stp,np->nst", ds.X, chain.beta) + chain.Z
    rep = mean + np.sqrt(chain.tau2)[:, :, None] * rng.standard_normal(mean.shape)
    rep[:, ~ds.mask] = np.nan
    return rep
