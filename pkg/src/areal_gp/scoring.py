"""Model comparison: DIC with its effective number of parameters and the
Dawid–Sebastiani predictive score, both computed over observed cells.

All models share the Gaussian outcome layer, so both criteria only need the
stored ``(beta, Z, tau2)`` draws of a :class:`~areal_gp.mcmc.PosteriorChain`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import BASELINE_KINDS, drop_intercept, fit_baseline
from .exceptions import NumericalError, ValidationError
from .mcmc import PosteriorChain, SamplerConfig, run_chain
from .model import Dataset, Priors
from .predictive import replicate_outcomes

__all__ = [
    "MODELS",
    "ScoreReport",
    "deviance_draws",
    "dic",
    "ds_score",
    "ds_score_from_moments",
    "score_models",
]

MODELS = ("gp",) + BASELINE_KINDS

LOG_2PI = math.log(2.0 * math.pi)


def _check(chain: PosteriorChain, ds: Dataset):
    if chain.n_draws == 0:
        raise ValidationError("chain has no stored draws")
    if chain.Z.shape[1:] != (ds.n_regions, ds.n_times) or chain.beta.shape[1] != ds.n_covariates:
        raise ValidationError("chain dimensions do not match the dataset")


def _deviance(ds: Dataset, mean: np.ndarray, tau2: np.ndarray) -> np.ndarray:
    """``-2 log p(Y_obs | mean, tau2)``; ``mean (..., n_s, n_t)``, ``tau2 (..., n_s)``."""
    mask = ds.mask
    y = np.where(mask, ds.Y, 0.0)
    r2 = np.where(mask, (y - mean) ** 2, 0.0)
    n_i = mask.sum(axis=1)
    return (
        ds.n_obs * LOG_2PI
        + np.sum(n_i * np.log(tau2), axis=-1)
        + np.sum(np.sum(r2, axis=-1) / tau2, axis=-1)
    )


def deviance_draws(chain: PosteriorChain, ds: Dataset) -> np.ndarray:
    """Deviance at every stored draw."""
    _check(chain, ds)
    mean = np.einsum("stp,np->nst", ds.X, chain.beta) + chain.Z
    return _deviance(ds, mean, chain.tau2)


def dic(chain: PosteriorChain, ds: Dataset) -> tuple[float, float]:
    """``(pD, DIC)`` with ``pD = mean deviance - deviance at the posterior mean``.

    The plug-in point uses the posterior means of ``beta``, ``Z`` and ``tau2``.
    """
    dbar = float(np.mean(deviance_draws(chain, ds)))
    plug_mean = ds.fitted(chain.beta.mean(axis=0)) + chain.Z.mean(axis=0)
    dhat = float(_deviance(ds, plug_mean, chain.tau2.mean(axis=0)))
    pd = dbar - dhat
    return pd, dbar + pd


def ds_score_from_moments(y, mu, var, mask=None) -> float:
    """Sum over cells of ``log var + (y - mu)^2 / var``. Lower is better."""
    y, mu, var = (np.asarray(a, dtype=float) for a in (y, mu, var))
    mask = np.ones(y.shape, bool) if mask is None else np.asarray(mask, bool)
    bad = np.argwhere(mask & ~(var > 0))
    if bad.size:
        cell = tuple(int(c) for c in bad[0])
        raise NumericalError(f"zero predictive variance at cell {cell}")
    v = var[mask]
    return float(np.sum(np.log(v) + (y[mask] - mu[mask]) ** 2 / v))


def ds_score(chain: PosteriorChain, ds: Dataset, rng=None) -> float:
    """Dawid–Sebastiani score of the observed cells.

    The predictive mean and variance of each cell come from replicate draws
    (one per stored iteration); cells are scored independently.
    """
    _check(chain, ds)
    rep = replicate_outcomes(chain, ds, rng)
    mu = rep.mean(axis=0)
    var = rep.var(axis=0)
    bad = np.argwhere(ds.mask & ~(var > 0))
    if bad.size:
        i, j = (int(c) for c in bad[0])
        raise NumericalError(
            f"zero predictive variance at region {i}, time {ds.design.times[j]:g}"
        )
    return ds_score_from_moments(ds.Y, mu, var, ds.mask)


@dataclass
class ScoreReport:
    """Per-model ``pD``, ``DIC`` and D–S with differences from a reference."""

    rows: dict = field(default_factory=dict)
    reference: str = "gp"
    failed: dict = field(default_factory=dict)

    def add(self, model: str, pd: float, dic_value: float, ds_value: float):
        self.rows[model] = {"pD": pd, "DIC": dic_value, "DS": ds_value}

    def _ref(self):
        if self.reference in self.rows:
            return self.rows[self.reference]
        if not self.rows:
            raise ValidationError("score report is empty")
        return next(iter(self.rows.values()))

    def deltas(self) -> dict:
        ref = self._ref()
        return {
            m: {"DIC": r["DIC"] - ref["DIC"], "DS": r["DS"] - ref["DS"]}
            for m, r in self.rows.items()
        }

    @property
    def complete(self) -> bool:
        return not self.failed

    def best(self, criterion: str) -> str:
        return min(self.rows, key=lambda m: self.rows[m][criterion])

    def table(self) -> list[dict]:
        d = self.deltas()
        return [
            {
                "model": m,
                "pD": r["pD"],
                "DIC": r["DIC"],
                "DS": r["DS"],
                "dDIC": d[m]["DIC"],
                "dDS": d[m]["DS"],
            }
            for m, r in self.rows.items()
        ]

    def to_markdown(self) -> str:
        lines = [
            "| model | pD | DIC | D-S | dDIC | dD-S |",
            "|---|---:|---:|---:|---:|---:|",
        ]
        for r in self.table():
            lines.append(
                f"| {r['model']} | {r['pD']:.1f} | {r['DIC']:.1f} | {r['DS']:.1f} "
                f"| {r['dDIC']:.1f} | {r['dDS']:.1f} |"
            )
        for m, msg in self.failed.items():
            lines.append(f"\n**{m} failed:** {msg}")
        if self.failed:
            lines.append("\nReport is incomplete.")
        return "\n".join(lines) + "\n"


def score_models(
    ds: Dataset,
    priors: Priors | None = None,
    cfg: SamplerConfig | None = None,
    models=MODELS,
    car_alpha: float = 0.99,
) -> ScoreReport:
    """Fit each model on ``ds`` and score it.

    The slope models are fitted without the intercept column(s). A model
    whose fit raises is recorded in :attr:`ScoreReport.failed` and skipped.
    """
    cfg = SamplerConfig() if cfg is None else cfg
    report = ScoreReport()
    for m in models:
        if m not in MODELS:
            raise ValidationError(f"unknown model {m!r}; choose from {MODELS}")
        data = drop_intercept(ds) if m in ("random_slopes", "car_slopes") else ds
        try:
            if m == "gp":
                chain = run_chain(data, priors, cfg)
            else:
                chain = fit_baseline(data, priors, cfg, kind=m, car_alpha=car_alpha)
            pd, d = dic(chain, data)
            report.add(m, pd, d, ds_score(chain, data, np.random.default_rng(cfg.seed)))
        except (NumericalError, np.linalg.LinAlgError) as exc:
            report.failed[m] = str(exc)
    return report
