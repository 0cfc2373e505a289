"""Synthetic data and frequentist coverage studies.

Two generators are provided:

* :func:`simulate_gp_dataset` draws ``Z`` from the separable prior and ``Y``
  from the full model (parameter recovery study).
* :func:`simulate_sinusoid_dataset` draws ``Y_i(t) ~ N(5 + x_i1 sin(t/2) +
  x_i2 cos(t/2), tau2_i)`` whose temporal gradient is known in closed form
  (gradient study; fitted with an intercept only).

:func:`run_coverage_study` fits many replicates and tallies how often the
credible intervals contain the truth.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NumericalError, ValidationError
from .graph import ArealGraph, grid_graph
from .kernel import TemporalDesign, correlation_matrix
from .kron import SeparableCovariance, unvec
from .mcmc import SamplerConfig, run_chain
from .model import Dataset, ModelParams, Priors
from .predictive import gradient_posterior

__all__ = [
    "CoverageReport",
    "GPTruth",
    "SimSpec",
    "SimulatedData",
    "SinusoidTruth",
    "default_sim_graph",
    "run_coverage_study",
    "simulate_dataset",
    "simulate_gp_dataset",
    "simulate_replicate",
    "simulate_sinusoid_dataset",
    "smooth_field",
]

STUDY1_BETA = (9.17, 0.60, -0.18, 1.24, 1.12)
SMALL_TAU2 = 0.15


def default_sim_graph() -> ArealGraph:
    """Ten regions on a 2 x 5 rook grid."""
    return grid_graph(2, 5)


@dataclass(frozen=True)
class GPTruth:
    """Generating values for the recovery study.

    ``tau2`` fixes the noise variances; otherwise each replicate draws
    ``tau2_i ~ IG(tau2_shape, tau2_scale)`` (mean 1, sd about 0.32 by default).
    Covariates after the intercept are iid standard normal per cell.
    """

    beta: tuple = STUDY1_BETA
    sigma2: float = 18.0
    alpha: float = 0.90
    phi1: float = 1.0
    tau2_shape: float = 12.0
    tau2_scale: float = 11.0
    tau2: tuple | None = None

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.phi1 > 0 and 0 < self.alpha < 1):
            raise ValidationError("GP truth outside the parameter support")
        if not (self.tau2_shape > 0 and self.tau2_scale > 0):
            raise ValidationError("tau2 inverse-gamma parameters must be positive")


@dataclass(frozen=True)
class SinusoidTruth:
    """Mean ``intercept + x1 sin(rate t) + x2 cos(rate t)``.

    ``x1``/``x2`` default to smooth spatial fields drawn per replicate with
    the given means and standard deviations.
    """

    intercept: float = 5.0
    rate: float = 0.5
    x1: tuple | None = None
    x2: tuple | None = None
    x_means: tuple = (3.0, 2.0)
    x_sds: tuple = (1.5, 1.0)
    tau2_low: float = 0.5
    tau2_high: float = 2.0

    def mean(self, t, x1, x2):
        t = np.asarray(t, dtype=float)
        x1, x2 = np.asarray(x1)[:, None], np.asarray(x2)[:, None]
        return self.intercept + x1 * np.sin(self.rate * t) + x2 * np.cos(self.rate * t)

    def gradient(self, t, x1, x2):
        t = np.asarray(t, dtype=float)
        x1, x2 = np.asarray(x1)[:, None], np.asarray(x2)[:, None]
        r = self.rate
        return r * x1 * np.cos(r * t) - r * x2 * np.sin(r * t)


@dataclass(frozen=True)
class SimSpec:
    graph: ArealGraph = field(default_factory=default_sim_graph)
    design: TemporalDesign = field(default_factory=lambda: TemporalDesign(np.arange(1.0, 51.0)))
    truth: GPTruth | SinusoidTruth = field(default_factory=GPTruth)
    n_datasets: int = 20
    seed: int = 0
    coverage_level: float = 0.95
    missing_fraction: float = 0.0

    def __post_init__(self):
        if self.n_datasets < 1:
            raise ValidationError("n_datasets must be at least 1")
        if not 0 < self.coverage_level < 1:
            raise ValidationError("coverage_level must lie in (0, 1)")
        if not 0 <= self.missing_fraction < 1:
            raise ValidationError("missing_fraction must lie in [0, 1)")

    @property
    def study(self) -> str:
        return "gp" if isinstance(self.truth, GPTruth) else "sinusoid"


@dataclass
class SimulatedData:
    """A replicate with everything needed to score it.

    ``Y_full`` is the complete outcome matrix; ``ds.Y`` has the masked cells
    set to NaN. ``params`` holds the GP truth (``None`` for sinusoids);
    ``x1``/``x2`` the sinusoid coefficients.
    """

    ds: Dataset
    Y_full: np.ndarray
    params: ModelParams | None = None
    x1: np.ndarray | None = None
    x2: np.ndarray | None = None
    truth: GPTruth | SinusoidTruth | None = None

    def gradient_truth(self, t0) -> np.ndarray:
        if self.x1 is None:
            raise ValidationError("analytic gradients exist only for sinusoid data")
        return self.truth.gradient(t0, self.x1, self.x2)


def smooth_field(graph: ArealGraph, rng, mean=0.0, sd=1.0, alpha=0.95) -> np.ndarray:
    """Spatially correlated values: a CAR draw standardized to ``(mean, sd)``."""
    L = np.linalg.cholesky(graph.D - alpha * graph.W_dense)
    v = solve_triangular(L, rng.standard_normal(graph.n_regions), lower=True, trans="T")
    v = (v - v.mean()) / (v.std() if v.std() > 0 else 1.0)
    return mean + sd * v


def _mask(Y, frac, rng):
    if frac == 0:
        return Y.copy()
    Yo = Y.copy()
    n_s, n_t = Y.shape
    n_mis = int(round(frac * Y.size))
    # keep at least one observation per region
    cand = rng.permutation(Y.size)
    hidden = np.zeros(Y.shape, bool)
    for c in cand:
        if hidden.sum() == n_mis:
            break
        i, j = divmod(int(c), n_t)
        if (~hidden[i]).sum() > 1:
            hidden[i, j] = True
    Yo[hidden] = np.nan
    return Yo


def simulate_gp_dataset(spec: SimSpec, rng) -> SimulatedData:
    tr = spec.truth
    if not isinstance(tr, GPTruth):
        raise ValidationError("simulate_gp_dataset needs a GPTruth spec")
    g, d = spec.graph, spec.design
    n_s, n_t = g.n_regions, d.n_times
    beta = np.asarray(tr.beta, dtype=float)
    R = correlation_matrix(d, tr.phi1)
    Q = (g.D - tr.alpha * g.W_dense) / tr.sigma2
    Z = unvec(SeparableCovariance(R, Q).sample(rng), n_s, n_t)
    X = np.concatenate(
        [np.ones((n_s, n_t, 1)), rng.standard_normal((n_s, n_t, beta.size - 1))], axis=2
    )
    if tr.tau2 is not None:
        tau2 = np.broadcast_to(np.asarray(tr.tau2, dtype=float), (n_s,)).copy()
    else:
        tau2 = tr.tau2_scale / rng.gamma(tr.tau2_shape, size=n_s)
    Y = X @ beta + Z + np.sqrt(tau2)[:, None] * rng.standard_normal((n_s, n_t))
    names = ("intercept",) + tuple(f"x{k}" for k in range(1, beta.size))
    ds = Dataset(g, d, _mask(Y, spec.missing_fraction, rng), X, names)
    params = ModelParams(beta, tr.sigma2, tau2, tr.alpha, tr.phi1, Z)
    return SimulatedData(ds, Y, params=params, truth=tr)


def simulate_sinusoid_dataset(spec: SimSpec, rng) -> SimulatedData:
    tr = spec.truth
    if not isinstance(tr, SinusoidTruth):
        raise ValidationError("simulate_sinusoid_dataset needs a SinusoidTruth spec")
    g, d = spec.graph, spec.design
    n_s, n_t = g.n_regions, d.n_times
    xs = []
    for k, given in enumerate((tr.x1, tr.x2)):
        if given is None:
            xs.append(smooth_field(g, rng, tr.x_means[k], tr.x_sds[k]))
        else:
            x = np.asarray(given, dtype=float)
            if x.shape != (n_s,):
                raise ValidationError(f"x{k + 1} must have one value per region")
            xs.append(x)
    x1, x2 = xs
    tau2 = rng.uniform(tr.tau2_low, tr.tau2_high, size=n_s)
    Y = tr.mean(d.times, x1, x2) + np.sqrt(tau2)[:, None] * rng.standard_normal((n_s, n_t))
    ds = Dataset(g, d, _mask(Y, spec.missing_fraction, rng), np.ones((n_s, n_t, 1)), ("intercept",))
    return SimulatedData(ds, Y, x1=x1, x2=x2, truth=tr)


def simulate_dataset(spec: SimSpec, rng) -> SimulatedData:
    if spec.study == "gp":
        return simulate_gp_dataset(spec, rng)
    return simulate_sinusoid_dataset(spec, rng)


@dataclass
class CoverageReport:
    """Interval hits and totals per quantity, pooled over replicates.

    ``medians[name]`` lists per-replicate posterior medians;
    ``per_dataset[name]`` per-replicate coverage proportions;
    ``small_tau2`` lists ``(replicate, region, true tau2)`` below 0.15;
    ``excluded`` maps replicate index to the error that stopped its fit.
    """

    study: str
    n_datasets: int
    level: float
    hits: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)
    medians: dict = field(default_factory=dict)
    per_dataset: dict = field(default_factory=dict)
    small_tau2: list = field(default_factory=list)
    excluded: dict = field(default_factory=dict)

    def _tally(self, name, covered):
        covered = np.asarray(covered, bool)
        self.hits[name] = self.hits.get(name, 0) + int(covered.sum())
        self.totals[name] = self.totals.get(name, 0) + int(covered.size)
        self.per_dataset.setdefault(name, []).append(float(covered.mean()))

    def coverage(self, name: str) -> float:
        if self.totals.get(name, 0) == 0:
            return math.nan
        return self.hits[name] / self.totals[name]

    def mean_median(self, name: str) -> float:
        return float(np.mean(self.medians[name])) if self.medians.get(name) else math.nan

    @property
    def n_used(self) -> int:
        return self.n_datasets - len(self.excluded)

    def rows(self) -> list[dict]:
        out = []
        for name in self.totals:
            out.append(
                {
                    "quantity": name,
                    "hits": self.hits[name],
                    "total": self.totals[name],
                    "coverage": self.coverage(name),
                    "mean_median": self.mean_median(name) if name in self.medians else math.nan,
                }
            )
        return out

    def summary(self) -> str:
        lines = [
            f"{self.study} coverage study: {self.n_used}/{self.n_datasets} replicates used, "
            f"{100 * self.level:g}% intervals"
        ]
        for r in self.rows():
            extra = "" if math.isnan(r["mean_median"]) else f"  mean median {r['mean_median']:.4g}"
            lines.append(
                f"  {r['quantity']:<16} {r['coverage']:.3f} ({r['hits']}/{r['total']}){extra}"
            )
        if self.small_tau2:
            lines.append(
                f"  {len(self.small_tau2)} region(s) with true tau2 < {SMALL_TAU2}; "
                "their tau2 coverage is expected to be poor"
            )
        for k, msg in self.excluded.items():
            lines.append(f"  replicate {k} excluded: {msg}")
        return "\n".join(lines)


def _covers(draws, truth, level):
    q = 0.5 * (1 - level)
    lo, hi = np.quantile(draws, [q, 1 - q], axis=0)
    truth = np.asarray(truth, dtype=float)
    return (lo <= truth) & (truth <= hi)


def _seeds(spec: SimSpec, index: int):
    data = np.random.SeedSequence(spec.seed, spawn_key=(index, 0))
    chain = np.random.SeedSequence(spec.seed, spawn_key=(index, 1))
    return data, chain


def simulate_replicate(spec: SimSpec, index: int) -> SimulatedData:
    """Replicate ``index`` of a study, exactly as :func:`run_coverage_study` sees it."""
    return simulate_dataset(spec, np.random.default_rng(_seeds(spec, index)[0]))


def _replicate(spec: SimSpec, model_cfg: SamplerConfig, priors, index: int):
    """Simulate and fit replicate ``index``; returns a dict of results."""
    chain_ss = _seeds(spec, index)[1]
    sim = simulate_replicate(spec, index)
    cfg = SamplerConfig(**{**model_cfg.to_dict(), "seed": int(chain_ss.generate_state(1)[0])})
    chain = run_chain(sim.ds, priors, cfg)
    lvl = spec.coverage_level
    res = {"covered": {}, "medians": {}, "small_tau2": []}
    cov = res["covered"]
    if sim.params is not None:
        tp = sim.params
        for k in range(tp.beta.size):
            cov[f"beta_{k}"] = _covers(chain.beta[:, k], tp.beta[k], lvl)
        cov["beta"] = _covers(chain.beta, tp.beta, lvl)
        for name in ("sigma2", "alpha", "phi1"):
            cov[name] = _covers(getattr(chain, name), getattr(tp, name), lvl)
            res["medians"][name] = float(np.median(getattr(chain, name)))
        cov["tau2"] = _covers(chain.tau2, tp.tau2, lvl)
        cov["Z"] = _covers(chain.Z, tp.Z, lvl)
        small = np.flatnonzero(tp.tau2 < SMALL_TAU2)
        res["small_tau2"] = [(index, int(i), float(tp.tau2[i])) for i in small]
    else:
        mids = sim.ds.design.midpoints()
        gp = gradient_posterior(chain, mids, sim.ds, np.random.default_rng(chain_ss), lvl)
        cov["gradient"] = gp.covers(sim.gradient_truth(mids))
        for name in ("sigma2", "alpha", "phi1"):
            res["medians"][name] = float(np.median(getattr(chain, name)))
    ri, ti = sim.ds.missing_index
    if ri.size:
        cov["y_missing"] = _covers(chain.y_missing, sim.Y_full[ri, ti], lvl)
    return res


def _run_one(args):
    spec, model_cfg, priors, index = args
    try:
        return index, _replicate(spec, model_cfg, priors, index), None
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return index, None, str(exc)


def run_coverage_study(
    spec: SimSpec,
    model_cfg: SamplerConfig | None = None,
    priors: Priors | None = None,
    n_workers: int = 1,
) -> CoverageReport:
    """Simulate ``spec.n_datasets`` replicates, fit each, tally coverage.

    Replicate ``k`` seeds its data and its chain from
    ``SeedSequence(spec.seed, spawn_key=(k, 0 or 1))``, so results do not
    depend on ``n_workers``. Replicates whose fit fails are excluded with a
    warning.
    """
    model_cfg = SamplerConfig(n_iter=10000, n_burn=5000) if model_cfg is None else model_cfg
    jobs = [(spec, model_cfg, priors, k) for k in range(spec.n_datasets)]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    report = CoverageReport(spec.study, spec.n_datasets, spec.coverage_level)
    for index, res, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            warnings.warn(f"replicate {index} excluded: {err}", RuntimeWarning, stacklevel=2)
            report.excluded[index] = err
            continue
        for name, covered in res["covered"].items():
            report._tally(name, covered)
        for name, v in res["medians"].items():
            report.medians.setdefault(name, []).append(v)
        report.small_tau2.extend(res["small_tau2"])
    return report
