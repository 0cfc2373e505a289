"""Posterior sampling for the areal temporal Gaussian process model.

Gibbs steps for ``beta``, ``tau2``, ``sigma2``, ``Z`` and ``alpha`` (griddy
Gibbs on ``(0, 1)``) and a random-walk Metropolis step for ``log phi1``.

Two schemes for the latent field are available:

``"block"`` (default)
    ``(beta, Z)`` drawn jointly: ``beta`` from its distribution with ``Z``
    integrated out, then ``Z | beta`` exactly. Missing outcomes are treated
    as latent data and imputed every sweep, which keeps the noise covariance
    Kronecker-structured so both steps cost ``O(n_s n_t (n_s + n_t))``.
``"slice"``
    ``beta`` by its conjugate update, then each time slice ``Z(t_j)`` from its
    Gaussian full conditional given the other slices, in random order.
    Missing cells are simply left out of the likelihood.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .diagnostics import effective_sample_size
from .exceptions import NumericalError, ValidationError
from .kernel import TemporalFactor
from .kron import SeparablePlusDiagonal
from .model import Dataset, ModelParams, Priors, impute_missing

__all__ = [
    "BlockConditional",
    "PosteriorChain",
    "SamplerConfig",
    "alpha_log_conditional",
    "beta_conditional",
    "initial_params",
    "phi1_log_target",
    "run_chain",
    "sigma2_conditional",
    "tau2_conditional",
    "update_alpha",
    "update_beta",
    "update_beta_Z",
    "update_phi1",
    "update_phi1_marginal",
    "update_variances",
    "update_Z",
    "z_slice_conditional",
]


@dataclass
class SamplerConfig:
    n_iter: int = 10000
    n_burn: int = 5000
    thin: int = 1
    seed: int = 0
    phi1_proposal_sd: float = 0.2
    alpha_grid_size: int = 200
    adapt: bool = True
    z_update: str = "block"
    phi1_update: str = "conditional"
    alpha_update: str = "griddy"
    alpha_proposal_sd: float = 0.3
    fix_alpha: float | None = None
    fix_phi1: float | None = None

    def __post_init__(self):
        for name in ("n_iter", "thin", "alpha_grid_size"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if not 0 <= self.n_burn < self.n_iter:
            raise ValidationError("need 0 <= n_burn < n_iter")
        if not self.phi1_proposal_sd > 0:
            raise ValidationError("phi1_proposal_sd must be positive")
        if self.z_update not in ("block", "slice"):
            raise ValidationError(f"z_update must be 'block' or 'slice', got {self.z_update!r}")
        if self.phi1_update not in ("marginal", "conditional"):
            raise ValidationError(
                f"phi1_update must be 'marginal' or 'conditional', got {self.phi1_update!r}"
            )
        if self.phi1_update == "marginal" and self.z_update != "block":
            raise ValidationError("phi1_update='marginal' requires z_update='block'")
        if self.alpha_update not in ("griddy", "metropolis"):
            raise ValidationError(
                f"alpha_update must be 'griddy' or 'metropolis', got {self.alpha_update!r}"
            )

    @property
    def n_stored(self) -> int:
        return len(range(self.n_burn, self.n_iter, self.thin))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PosteriorChain:
    """Thinned post-burn-in draws.

    Array layouts: ``beta (n, p)``, ``tau2 (n, n_s)``, ``Z (n, n_s, n_t)``,
    scalars ``(n,)``; ``y_missing (n, n_missing)`` aligned with
    ``Dataset.missing_index``. Parameters a model does not have are ``None``.
    """

    model: str
    beta: np.ndarray
    tau2: np.ndarray
    Z: np.ndarray
    sigma2: np.ndarray | None = None
    alpha: np.ndarray | None = None
    phi1: np.ndarray | None = None
    y_missing: np.ndarray | None = None
    extra: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    ess: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def params_at(self, k: int) -> ModelParams:
        if self.sigma2 is None:
            raise ValidationError(f"{self.model} chain has no GP parameters")
        return ModelParams(
            beta=self.beta[k],
            sigma2=float(self.sigma2[k]),
            tau2=self.tau2[k],
            alpha=float(self.alpha[k]),
            phi1=float(self.phi1[k]),
            Z=self.Z[k],
        )

    def scalar_draws(self) -> dict[str, np.ndarray]:
        """Named 1-D draw arrays for every non-latent parameter."""
        out = {}
        for k in range(self.beta.shape[1]):
            out[f"beta_{k}"] = self.beta[:, k]
        for name in ("sigma2", "alpha", "phi1"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        for i in range(self.tau2.shape[1]):
            out[f"tau2_{i}"] = self.tau2[:, i]
        for key, v in self.extra.items():
            out[key] = v
        return out


# ----------------------------------------------------------------- conditionals


def _residual_parts(ds: Dataset, params: ModelParams, Y):
    Y = ds.Y if Y is None else Y
    mask = ~np.isnan(Y)
    R = np.where(mask, Y - ds.fitted(params.beta) - params.Z, 0.0)
    return R, mask


def beta_conditional(ds: Dataset, params: ModelParams, priors: Priors, Y=None):
    """Mean and covariance of ``beta | Z, tau2, Y`` over observed cells."""
    Y = ds.Y if Y is None else Y
    mask = ~np.isnan(Y)
    p = ds.n_covariates
    mu0, S0 = priors.beta_prior(p)
    P0 = np.linalg.inv(S0)
    w = (mask / np.asarray(params.tau2)[:, None])[mask]
    Xo = ds.X[mask]
    yo = (Y - params.Z)[mask]
    P = P0 + Xo.T @ (w[:, None] * Xo)
    b = P0 @ mu0 + Xo.T @ (w * yo)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("beta full-conditional precision is singular") from exc
    V = sla.cho_solve((L, True), np.eye(p))
    return V @ b, V


def update_beta(ds, params, priors, rng, Y=None) -> np.ndarray:
    mean, V = beta_conditional(ds, params, priors, Y)
    L = np.linalg.cholesky(V)
    return mean + L @ rng.standard_normal(mean.size)


def tau2_conditional(ds, params, priors, Y=None):
    """Inverse-gamma ``(shape, scale)`` arrays for each region's ``tau2``."""
    R, mask = _residual_parts(ds, params, Y)
    n_i = mask.sum(axis=1)
    return priors.a_tau + 0.5 * n_i, priors.b_tau + 0.5 * np.sum(R * R, axis=1)


def sigma2_conditional(ds, params, priors, tfac: TemporalFactor | None = None):
    """Inverse-gamma ``(shape, scale)`` for ``sigma2``."""
    tfac = _tfac(ds, params, tfac)
    g = ds.graph
    Z = params.Z
    P = g.D - params.alpha * g.W_dense
    quad = float(np.sum((Z @ tfac.R_inv) * (P @ Z)))
    return priors.a_sigma + 0.5 * Z.size, priors.b_sigma + 0.5 * quad


def _draw_invgamma(rng, shape, scale):
    return np.asarray(scale) / rng.gamma(np.asarray(shape))


def update_variances(ds, params, priors, rng, tfac=None, Y=None):
    """Draw ``tau2`` then ``sigma2``; returns ``(sigma2, tau2)``."""
    a, b = tau2_conditional(ds, params, priors, Y)
    tau2 = _draw_invgamma(rng, a, b)
    a, b = sigma2_conditional(ds, params, priors, tfac)
    sigma2 = float(_draw_invgamma(rng, a, b))
    return sigma2, tau2


def _tfac(ds, params, tfac):
    if tfac is None or tfac.phi1 != params.phi1:
        tfac = TemporalFactor(ds.design, params.phi1)
    return tfac


def z_slice_conditional(ds, params, j: int, tfac=None, Y=None):
    """Mean and precision of ``Z(t_j)`` given the other slices and the data."""
    tfac = _tfac(ds, params, tfac)
    Y = ds.Y if Y is None else Y
    g = ds.graph
    Q = (g.D - params.alpha * g.W_dense) / params.sigma2
    Ri = tfac.R_inv
    obs = ~np.isnan(Y[:, j])
    d = obs / np.asarray(params.tau2)
    P = Ri[j, j] * Q + np.diag(d)
    others = params.Z @ Ri[:, j] - Ri[j, j] * params.Z[:, j]
    y = np.where(obs, Y[:, j] - ds.X[:, j, :] @ params.beta, 0.0)
    rhs = d * y - Q @ others
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Z full-conditional precision singular at slice {j}") from exc
    return sla.cho_solve((L, True), rhs), P


def update_Z(ds, params, rng, tfac=None, Y=None) -> np.ndarray:
    """Slice-wise Gibbs sweep over time points in random order."""
    tfac = _tfac(ds, params, tfac)
    Y = ds.Y if Y is None else Y
    g = ds.graph
    Q = (g.D - params.alpha * g.W_dense) / params.sigma2
    Ri = tfac.R_inv
    tau2 = np.asarray(params.tau2)
    Z = np.array(params.Z, dtype=float)
    ZRi = Z @ Ri
    resid = Y - ds.fitted(params.beta)
    obs = ~np.isnan(Y)
    for j in rng.permutation(ds.n_times):
        d = obs[:, j] / tau2
        P = Ri[j, j] * Q + np.diag(d)
        others = ZRi[:, j] - Ri[j, j] * Z[:, j]
        rhs = d * np.where(obs[:, j], resid[:, j], 0.0) - Q @ others
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Z full-conditional precision singular at slice {j}") from exc
        mean = sla.cho_solve((L, True), rhs, check_finite=False)
        new = mean + sla.solve_triangular(
            L, rng.standard_normal(ds.n_regions), lower=True, trans="T", check_finite=False
        )
        ZRi += np.outer(new - Z[:, j], Ri[j, :])
        Z[:, j] = new
    return Z


class BlockConditional:
    """Joint conditional of ``(beta, Z)`` given ``(tau2, sigma2, alpha, phi1)``
    and a complete outcome matrix ``Y`` (no NaN)."""

    def __init__(self, ds: Dataset, params: ModelParams, priors: Priors, Y, tfac=None):
        Y = np.asarray(Y, dtype=float)
        if np.any(np.isnan(Y)):
            raise ValidationError("block update needs a completed Y (impute missing cells first)")
        tfac = _tfac(ds, params, tfac)
        g = ds.graph
        Q = (g.D - params.alpha * g.W_dense) / params.sigma2
        self.ds = ds
        self.Y = Y
        self.spd = SeparablePlusDiagonal(tfac.R, Q, params.tau2, eig_R=tfac.eig)
        p = ds.n_covariates
        mu0, S0 = priors.beta_prior(p)
        P0 = np.linalg.inv(S0)
        X = ds.X
        CX = np.stack([self.spd.marginal_solve(X[:, :, k]) for k in range(p)], axis=-1)
        XtCX = np.einsum("stk,stl->kl", X, CX)
        XtCy = np.einsum("stk,st->k", CX, Y)
        P = P0 + 0.5 * (XtCX + XtCX.T)
        try:
            self._L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("beta marginal precision is singular") from exc
        self.beta_mean = sla.cho_solve((self._L, True), P0 @ mu0 + XtCy)
        self.beta_prec = P

    def log_marginal(self, priors: Priors) -> float:
        """``log p(Y | tau2, sigma2, alpha, phi1)`` with ``beta`` and ``Z``
        integrated out, evaluated at ``beta`` = its conditional mean."""
        p = self.beta_mean.size
        mu0, S0 = priors.beta_prior(p)
        E = self.Y - self.ds.fitted(self.beta_mean)
        n = E.size
        ll = -0.5 * (
            n * math.log(2 * math.pi)
            + self.spd.marginal_logdet()
            + float(np.sum(E * self.spd.marginal_solve(E)))
        )
        r0 = self.beta_mean - mu0
        _, ld0 = np.linalg.slogdet(S0)
        lp0 = -0.5 * (p * math.log(2 * math.pi) + ld0 + float(r0 @ np.linalg.solve(S0, r0)))
        lpost = -0.5 * p * math.log(2 * math.pi) + float(np.sum(np.log(np.diag(self._L))))
        return ll + lp0 - lpost

    def sample(self, rng):
        z = rng.standard_normal(self.beta_mean.size)
        beta = self.beta_mean + sla.solve_triangular(self._L, z, lower=True, trans="T")
        E = self.Y - self.ds.fitted(beta)
        Z = self.spd.posterior_sample(E, rng)
        return beta, Z

    def logpdf(self, beta, Z) -> float:
        r = np.asarray(beta) - self.beta_mean
        p = r.size
        lp_beta = (
            -0.5 * p * math.log(2 * math.pi)
            + float(np.sum(np.log(np.diag(self._L))))
            - 0.5 * float(r @ self.beta_prec @ r)
        )
        E = self.Y - self.ds.fitted(beta)
        return lp_beta + self.spd.posterior_logpdf(E, Z)


def update_beta_Z(ds, params, priors, rng, Y, tfac=None):
    """Exact joint draw of ``(beta, Z)``; ``Y`` must be complete."""
    return BlockConditional(ds, params, priors, Y, tfac).sample(rng)


def alpha_log_conditional(ds, params, priors, alphas, tfac=None) -> np.ndarray:
    """Unnormalized log full conditional of ``alpha`` on an array of values."""
    tfac = _tfac(ds, params, tfac)
    g = ds.graph
    a = np.asarray(alphas, dtype=float)
    M = params.Z @ tfac.R_inv @ params.Z.T
    tD = float(np.sum(g.degrees * np.diag(M)))
    tW = float(np.sum(g.W_dense * M))
    out = 0.5 * ds.n_times * g.logdet_car(a) - 0.5 * (tD - a * tW) / params.sigma2
    with np.errstate(divide="ignore"):
        out = out + (priors.a_alpha - 1) * np.log(a) + (priors.b_alpha - 1) * np.log1p(-a)
    return np.where((a > 0) & (a < 1), out, -np.inf)


def update_alpha(ds, params, priors, rng, grid_size: int = 200, tfac=None) -> float:
    """Griddy Gibbs: sample a cell of a uniform grid on (0, 1) by its
    conditional weight at the cell midpoint, then jitter within the cell."""
    grid = (np.arange(grid_size) + 0.5) / grid_size
    logw = alpha_log_conditional(ds, params, priors, grid, tfac)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    k = rng.choice(grid_size, p=w)
    return float(grid[k] + (rng.random() - 0.5) / grid_size)


def _update_alpha_metropolis(ds, params, priors, rng, sd, tfac):
    a = params.alpha
    logit = math.log(a / (1 - a)) + sd * rng.standard_normal()
    prop = 1.0 / (1.0 + math.exp(-logit))
    if not 0 < prop < 1:
        return a, False
    cur, new = alpha_log_conditional(ds, params, priors, [a, prop], tfac)
    # Jacobian of the logit transform
    log_r = new - cur + math.log(prop * (1 - prop)) - math.log(a * (1 - a))
    if math.log(rng.random()) < log_r:
        return prop, True
    return a, False


def update_phi1_marginal(ds, params, priors, rng, proposal_sd, Y, tfac=None, current=None):
    """Random-walk Metropolis on ``log phi1`` targeting its conditional with
    ``(beta, Z)`` integrated out. Must be followed by a ``(beta, Z)`` draw.

    Returns ``(phi1, accepted, tfac, block)`` with ``block`` the
    :class:`BlockConditional` at the returned ``phi1``.
    """
    tfac = _tfac(ds, params, tfac)
    if current is None:
        current = BlockConditional(ds, params, priors, Y, tfac)
    log_prop = math.log(params.phi1) + proposal_sd * rng.standard_normal()
    prop = math.exp(log_prop)
    lo, hi = priors.phi1_bounds(ds.design)
    u = rng.random()
    if not lo <= prop <= hi:
        return params.phi1, False, tfac, current
    try:
        tfac_new = TemporalFactor(ds.design, prop)
        trial = ModelParams(params.beta, params.sigma2, params.tau2, params.alpha, prop, params.Z)
        block_new = BlockConditional(ds, trial, priors, Y, tfac_new)
    except NumericalError:
        return params.phi1, False, tfac, current
    cur = current.log_marginal(priors) + math.log(params.phi1)
    new = block_new.log_marginal(priors) + log_prop
    if math.log(u) < new - cur:
        return prop, True, tfac_new, block_new
    return params.phi1, False, tfac, current


def _phi1_target(ds, params, priors, tfac, ZtQZ) -> float:
    lo, hi = priors.phi1_bounds(ds.design)
    if not lo <= tfac.phi1 <= hi:
        return -math.inf
    quad = float(np.sum(tfac.R_inv * ZtQZ))
    return -0.5 * ds.n_regions * tfac.logdet - 0.5 * quad


def phi1_log_target(ds, params, priors, phi1: float) -> float:
    """Log full conditional of ``phi1`` (unnormalized, on the ``phi1`` scale)."""
    try:
        tfac = TemporalFactor(ds.design, phi1)
    except NumericalError:
        return -math.inf
    g = ds.graph
    P = (g.D - params.alpha * g.W_dense) / params.sigma2
    return _phi1_target(ds, params, priors, tfac, params.Z.T @ P @ params.Z)


def update_phi1(ds, params, priors, rng, proposal_sd: float, tfac=None):
    """Random-walk Metropolis on ``log phi1``.

    Returns ``(phi1, accepted, tfac)`` where ``tfac`` is the factorization at
    the returned value.
    """
    tfac = _tfac(ds, params, tfac)
    g = ds.graph
    P = (g.D - params.alpha * g.W_dense) / params.sigma2
    ZtQZ = params.Z.T @ P @ params.Z
    log_prop = math.log(params.phi1) + proposal_sd * rng.standard_normal()
    prop = math.exp(log_prop)
    lo, hi = priors.phi1_bounds(ds.design)
    u = rng.random()
    if not lo <= prop <= hi:
        return params.phi1, False, tfac
    try:
        tfac_new = TemporalFactor(ds.design, prop)
    except NumericalError:
        return params.phi1, False, tfac
    cur = _phi1_target(ds, params, priors, tfac, ZtQZ) + math.log(params.phi1)
    new = _phi1_target(ds, params, priors, tfac_new, ZtQZ) + log_prop
    if math.log(u) < new - cur:
        return prop, True, tfac_new
    return params.phi1, False, tfac


# ------------------------------------------------------------------- driver


def initial_params(ds: Dataset, priors: Priors, cfg: SamplerConfig) -> ModelParams:
    """Least-squares start: ``beta`` by OLS, half the residual in ``Z``."""
    mask = ds.mask
    Xo = ds.X[mask]
    yo = ds.Y[mask]
    beta = np.linalg.lstsq(Xo, yo, rcond=None)[0]
    resid = np.where(mask, ds.Y - ds.fitted(beta), 0.0)
    Z = 0.5 * resid
    total_var = float(np.var(resid[mask])) + 1e-8
    tau2 = np.array(
        [max(float(np.var(0.5 * resid[i, mask[i]])), 0.01 * total_var) for i in range(ds.n_regions)]
    )
    lo, hi = priors.phi1_bounds(ds.design)
    gap = float(np.mean(np.diff(ds.design.times))) if ds.n_times > 1 else 1.0
    phi1 = cfg.fix_phi1 if cfg.fix_phi1 is not None else float(np.clip(1.0 / gap, lo, hi))
    alpha = cfg.fix_alpha if cfg.fix_alpha is not None else 0.5
    tfac = TemporalFactor(ds.design, phi1)
    g = ds.graph
    quad = float(np.sum((Z @ tfac.R_inv) * ((g.D - alpha * g.W_dense) @ Z)))
    sigma2 = max(quad / Z.size, 0.01 * total_var)
    return ModelParams(beta=beta, sigma2=sigma2, tau2=tau2, alpha=alpha, phi1=phi1, Z=Z)


def _alpha_step(ds, params, priors, rng, cfg, sd, tfac):
    if cfg.fix_alpha is not None:
        return params.alpha, False
    if cfg.alpha_update == "griddy":
        return update_alpha(ds, params, priors, rng, cfg.alpha_grid_size, tfac), False
    return _update_alpha_metropolis(ds, params, priors, rng, sd, tfac)


def _guard(it, name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NumericalError(f"iteration {it}: update of {name} failed: {exc}") from exc


def run_chain(
    ds: Dataset,
    priors: Priors | None = None,
    cfg: SamplerConfig | None = None,
    init: ModelParams | None = None,
) -> PosteriorChain:
    """Run one MCMC chain. Deterministic given ``cfg.seed``."""
    priors = Priors() if priors is None else priors
    cfg = SamplerConfig() if cfg is None else cfg
    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = priors.phi1_bounds(ds.design)
    if cfg.fix_phi1 is not None and not lo <= cfg.fix_phi1 <= hi:
        raise ValidationError(f"fix_phi1={cfg.fix_phi1} outside prior support [{lo}, {hi}]")
    if cfg.fix_alpha is not None and not 0 < cfg.fix_alpha < 1:
        raise ValidationError("fix_alpha must lie in (0, 1)")

    params = initial_params(ds, priors, cfg) if init is None else init.copy()
    tfac = TemporalFactor(ds.design, params.phi1)
    block = cfg.z_update == "block"
    ri, ti = ds.missing_index
    n_mis = ri.size
    Yc = np.array(ds.Y)
    if block and n_mis:
        Yc[ri, ti] = (ds.fitted(params.beta) + params.Z)[ri, ti]

    n_keep = cfg.n_stored
    p, n_s, n_t = ds.n_covariates, ds.n_regions, ds.n_times
    out = {
        "beta": np.empty((n_keep, p)),
        "sigma2": np.empty(n_keep),
        "tau2": np.empty((n_keep, n_s)),
        "alpha": np.empty(n_keep),
        "phi1": np.empty(n_keep),
        "Z": np.empty((n_keep, n_s, n_t)),
        "y_missing": np.empty((n_keep, n_mis)),
    }
    phi_sd = cfg.phi1_proposal_sd
    alpha_sd = cfg.alpha_proposal_sd
    acc_phi = acc_alpha = 0
    batch_phi = batch_alpha = 0
    n_post = 0
    k = 0
    collapsed = block and cfg.phi1_update == "marginal"
    for it in range(cfg.n_iter):
        if collapsed:
            a, b = tau2_conditional(ds, params, priors, Yc)
            params.tau2 = _draw_invgamma(rng, a, b)
            a, b = _guard(it, "sigma2", sigma2_conditional, ds, params, priors, tfac)
            params.sigma2 = float(_draw_invgamma(rng, a, b))
            params.alpha, ok = _alpha_step(ds, params, priors, rng, cfg, alpha_sd, tfac)
            batch_alpha += ok
            acc_alpha += ok and it >= cfg.n_burn
            if cfg.fix_phi1 is None:
                params.phi1, ok, tfac, bc = _guard(
                    it, "phi1", update_phi1_marginal, ds, params, priors, rng, phi_sd, Yc, tfac
                )
                batch_phi += ok
                acc_phi += ok and it >= cfg.n_burn
            else:
                bc = _guard(it, "beta,Z", BlockConditional, ds, params, priors, Yc, tfac)
            params.beta, params.Z = bc.sample(rng)
        else:
            if block:
                params.beta, params.Z = _guard(
                    it, "beta,Z", update_beta_Z, ds, params, priors, rng, Yc, tfac
                )
                a, b = tau2_conditional(ds, params, priors, Yc)
            else:
                params.beta = _guard(it, "beta", update_beta, ds, params, priors, rng)
                a, b = tau2_conditional(ds, params, priors)
            params.tau2 = _draw_invgamma(rng, a, b)
            a, b = _guard(it, "sigma2", sigma2_conditional, ds, params, priors, tfac)
            params.sigma2 = float(_draw_invgamma(rng, a, b))
            if not block:
                params.Z = _guard(it, "Z", update_Z, ds, params, rng, tfac)
            params.alpha, ok = _alpha_step(ds, params, priors, rng, cfg, alpha_sd, tfac)
            batch_alpha += ok
            acc_alpha += ok and it >= cfg.n_burn
            if cfg.fix_phi1 is None:
                params.phi1, ok, tfac = _guard(
                    it, "phi1", update_phi1, ds, params, priors, rng, phi_sd, tfac
                )
                batch_phi += ok
                acc_phi += ok and it >= cfg.n_burn

        if n_mis:
            draws = impute_missing(ds, params, rng)
            if block:
                Yc[ri, ti] = draws
        else:
            draws = np.empty(0)

        if cfg.adapt and it < cfg.n_burn and (it + 1) % 50 == 0:
            step = min(0.5, 1.0 / math.sqrt((it + 1) / 50))
            phi_sd *= math.exp(step if batch_phi / 50 > 0.4 else -step)
            alpha_sd *= math.exp(step if batch_alpha / 50 > 0.4 else -step)
            batch_phi = batch_alpha = 0
        elif (it + 1) % 50 == 0:
            batch_phi = batch_alpha = 0

        if it >= cfg.n_burn:
            n_post += 1
            if (it - cfg.n_burn) % cfg.thin == 0:
                out["beta"][k] = params.beta
                out["sigma2"][k] = params.sigma2
                out["tau2"][k] = params.tau2
                out["alpha"][k] = params.alpha
                out["phi1"][k] = params.phi1
                out["Z"][k] = params.Z
                out["y_missing"][k] = draws
                k += 1

    acceptance = {}
    if cfg.fix_phi1 is None:
        acceptance["phi1"] = acc_phi / max(n_post, 1)
    if cfg.fix_alpha is None and cfg.alpha_update == "metropolis":
        acceptance["alpha"] = acc_alpha / max(n_post, 1)
    chain = PosteriorChain(
        model="gp",
        beta=out["beta"],
        tau2=out["tau2"],
        Z=out["Z"],
        sigma2=out["sigma2"],
        alpha=out["alpha"],
        phi1=out["phi1"],
        y_missing=out["y_missing"],
        acceptance=acceptance,
        config={**cfg.to_dict(), "phi1_proposal_sd_final": phi_sd},
    )
    chain.ess = {name: effective_sample_size(v) for name, v in chain.scalar_draws().items()}
    chain.runtime_s = time.perf_counter() - t_start
    return chain
