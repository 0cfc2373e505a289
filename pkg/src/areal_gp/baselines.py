"""Comparison models sharing the outcome layer of the GP model.

    Y_i(t) = x_i(t)' beta + Z_i(t) + eps_i(t),   eps_i(t) ~ N(0, tau2_i)

``ols``
    ``Z = 0``.
``random_slopes``
    ``Z_i(t) = a0_i + a1_i t`` with ``a_k ~ N(0, sigma2_k I)``.
``car_slopes``
    As above with ``a_k ~ N(0, sigma2_k (D - rho W)^{-1})`` for a fixed
    propriety parameter ``rho`` (default 0.99).

The slope models are not identified alongside a global intercept, so the
covariates must not contain a constant column. Every model is sampled by
blocked Gibbs: ``(beta, a0, a1)`` jointly, then the variances. Missing
outcomes are left out of the likelihood and drawn from their predictive at
each stored iteration.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg as sla

from .diagnostics import effective_sample_size
from .exceptions import NumericalError, ValidationError
from .mcmc import PosteriorChain, SamplerConfig
from .model import Dataset, Priors

__all__ = ["BASELINE_KINDS", "drop_intercept", "fit_baseline"]

BASELINE_KINDS = ("ols", "random_slopes", "car_slopes")


def drop_intercept(ds: Dataset) -> Dataset:
    """Copy of ``ds`` without constant covariate columns."""
    keep = [k for k in range(ds.n_covariates) if k not in ds.intercept_columns()]
    names = [ds.covariate_names[k] for k in keep]
    return ds.with_X(ds.X[:, :, keep], names)


def _effect_structure(ds: Dataset, kind: str, car_alpha: float) -> np.ndarray | None:
    """Prior precision of one coefficient vector, up to ``1 / sigma2_k``."""
    if kind == "ols":
        return None
    if ds.intercept_columns():
        names = [ds.covariate_names[k] for k in ds.intercept_columns()]
        raise ValidationError(
            f"{kind} has its own per-region intercepts; remove the global intercept "
            f"column(s) {names} from the covariates (see drop_intercept)"
        )
    if kind == "random_slopes":
        return np.eye(ds.n_regions)
    lo, hi = ds.graph.alpha_interval
    if not lo < car_alpha < hi:
        raise ValidationError(f"car_alpha={car_alpha} outside ({lo:.4g}, {hi:.4g})")
    return ds.graph.D - car_alpha * ds.graph.W_dense


def fit_baseline(
    ds: Dataset,
    priors: Priors | None = None,
    cfg: SamplerConfig | None = None,
    kind: str = "ols",
    car_alpha: float = 0.99,
) -> PosteriorChain:
    """Gibbs sampler for one comparison model.

    The returned chain stores ``Z[k] = a0 + a1 t`` (zeros for ``ols``) so it
    can be scored exactly like a GP chain; ``sigma2_a0``/``sigma2_a1`` draws
    go to ``chain.extra``.
    """
    if kind not in BASELINE_KINDS:
        raise ValidationError(f"kind must be one of {BASELINE_KINDS}, got {kind!r}")
    priors = Priors() if priors is None else priors
    cfg = SamplerConfig() if cfg is None else cfg
    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    P_eff = _effect_structure(ds, kind, car_alpha)

    n_s, n_t, p = ds.n_regions, ds.n_times, ds.n_covariates
    t = ds.design.times
    mask = ds.mask
    n_eff = 0 if P_eff is None else n_s
    dim = p + 2 * n_eff

    # per-region Gram blocks of the stacked design [x, e_i, t e_i]
    G = np.zeros((n_s, dim, dim))
    h = np.zeros((n_s, dim))
    F_all = np.zeros((n_s, n_t, dim))
    F_all[:, :, :p] = ds.X
    if n_eff:
        idx = np.arange(n_s)
        F_all[idx, :, p + idx] = 1.0
        F_all[idx, :, p + n_s + idx] = t[None, :]
    for i in range(n_s):
        F = F_all[i, mask[i]]
        G[i] = F.T @ F
        h[i] = F.T @ ds.Y[i, mask[i]]
    n_i = mask.sum(axis=1)

    mu0, S0 = priors.beta_prior(p)
    P0 = np.linalg.inv(S0) if p else np.zeros((0, 0))
    prior_shift = np.zeros(dim)
    prior_shift[:p] = P0 @ mu0

    tau2 = np.full(n_s, max(float(np.nanvar(ds.Y)), 1e-6))
    sig_a = np.ones(2)
    coef = np.zeros(dim)

    n_keep = cfg.n_stored
    ri, ti = ds.missing_index
    out = {
        "beta": np.empty((n_keep, p)),
        "tau2": np.empty((n_keep, n_s)),
        "Z": np.zeros((n_keep, n_s, n_t)),
        "y_missing": np.empty((n_keep, ri.size)),
        "sigma2_a0": np.empty(n_keep),
        "sigma2_a1": np.empty(n_keep),
    }
    k = 0
    for it in range(cfg.n_iter):
        w = 1.0 / tau2
        prec = np.einsum("i,ijk->jk", w, G)
        prec[:p, :p] += P0
        if n_eff:
            prec[p : p + n_s, p : p + n_s] += P_eff / sig_a[0]
            prec[p + n_s :, p + n_s :] += P_eff / sig_a[1]
        rhs = w @ h + prior_shift
        try:
            L = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"iteration {it}: {kind} coefficient precision singular") from exc
        mean = sla.cho_solve((L, True), rhs, check_finite=False)
        coef = mean + sla.solve_triangular(
            L, rng.standard_normal(dim), lower=True, trans="T", check_finite=False
        )
        fitted = F_all @ coef
        resid = np.where(mask, ds.Y - fitted, 0.0)
        tau2 = (priors.b_tau + 0.5 * np.sum(resid * resid, axis=1)) / rng.gamma(
            priors.a_tau + 0.5 * n_i
        )
        if n_eff:
            for m in range(2):
                a = coef[p + m * n_s : p + (m + 1) * n_s]
                sig_a[m] = (priors.b_sigma + 0.5 * float(a @ P_eff @ a)) / rng.gamma(
                    priors.a_sigma + 0.5 * n_s
                )
        if it >= cfg.n_burn and (it - cfg.n_burn) % cfg.thin == 0:
            out["beta"][k] = coef[:p]
            out["tau2"][k] = tau2
            if n_eff:
                out["Z"][k] = fitted - ds.X @ coef[:p]
            out["sigma2_a0"][k], out["sigma2_a1"][k] = sig_a
            out["y_missing"][k] = fitted[ri, ti] + np.sqrt(tau2[ri]) * rng.standard_normal(ri.size)
            k += 1

    extra = {}
    if n_eff:
        extra = {"sigma2_a0": out["sigma2_a0"], "sigma2_a1": out["sigma2_a1"]}
    chain = PosteriorChain(
        model=kind,
        beta=out["beta"],
        tau2=out["tau2"],
        Z=out["Z"],
        y_missing=out["y_missing"],
        extra=extra,
        config={**cfg.to_dict(), "car_alpha": car_alpha if kind == "car_slopes" else None},
    )
    chain.ess = {name: effective_sample_size(v) for name, v in chain.scalar_draws().items()}
    chain.runtime_s = time.perf_counter() - t_start
    return chain
