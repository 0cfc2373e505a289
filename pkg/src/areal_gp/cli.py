"""Command-line entry point ``areal-gp``.

Subcommands ``fit``, ``gradient``, ``predict``, ``score`` and ``simulate``
share ``--config`` (flat ``key = value`` file), ``--seed`` and ``--out``.
Any config key may also be given as ``--set key=value``. Precedence is
command-line flag, then config file, then built-in default.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .exceptions import NumericalError, ValidationError
from .graph import grid_graph
from .kernel import TemporalDesign
from .mcmc import SamplerConfig, run_chain
from .model import Priors
from .predictive import gradient_posterior, predict_outcome
from .scoring import MODELS, score_models
from .simulate import GPTruth, SimSpec, SinusoidTruth, run_coverage_study, simulate_replicate

__all__ = ["main"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _opt_float(s: str):
    return None if str(s).strip().lower() in ("", "none") else float(s)


def _floats(s) -> list[float]:
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(v) for v in str(s).replace(",", " ").split()]


def _words(s) -> list[str]:
    if isinstance(s, (list, tuple)):
        return list(s)
    return [v for v in str(s).replace(",", " ").split()]


KEYS = {
    # shared
    "data": str,
    "adjacency": str,
    "out": str,
    "seed": int,
    # sampler
    "n_iter": int,
    "n_burn": int,
    "thin": int,
    "phi1_proposal_sd": float,
    "alpha_grid_size": int,
    "adapt": _bool,
    "z_update": str,
    "phi1_update": str,
    "alpha_update": str,
    "alpha_proposal_sd": float,
    "fix_alpha": _opt_float,
    "fix_phi1": _opt_float,
    # priors
    "mu_beta": float,
    "Sigma_beta": float,
    "a_sigma": float,
    "b_sigma": float,
    "a_tau": float,
    "b_tau": float,
    "a_alpha": float,
    "b_alpha": float,
    "phi1_lower": float,
    "phi1_upper": _opt_float,
    # gradient / predict
    "chain": str,
    "t0": _floats,
    "midpoints": _bool,
    "covariates": str,
    "level": float,
    # score
    "models": _words,
    "car_alpha": float,
    # simulate
    "study": str,
    "n_datasets": int,
    "missing_fraction": float,
    "workers": int,
    "grid_rows": int,
    "grid_cols": int,
    "n_times": int,
    "save_datasets": _bool,
}

SAMPLER_KEYS = {f.name for f in fields(SamplerConfig)}
PRIOR_KEYS = {f.name for f in fields(Priors)}


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags into typed values."""
    raw: dict[str, object] = {}
    if args.config:
        raw.update(io.read_config(args.config))
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        raw[key.strip()] = val.strip()
    for key in KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    out = {}
    for key, val in raw.items():
        if key not in KEYS:
            raise ValidationError(f"unknown setting {key!r}")
        try:
            out[key] = KEYS[key](val) if isinstance(val, str) else val
        except ValueError:
            raise ValidationError(f"setting {key!r}: cannot parse {val!r}") from None
    return out


def _sampler(s: dict) -> SamplerConfig:
    return SamplerConfig(**{k: v for k, v in s.items() if k in SAMPLER_KEYS})


def _priors(s: dict) -> Priors:
    return Priors(**{k: v for k, v in s.items() if k in PRIOR_KEYS})


def _require(s: dict, *keys):
    for k in keys:
        if s.get(k) in (None, ""):
            raise ValidationError(f"missing required setting {k!r} (flag --{k.replace('_', '-')})")


def _out_dir(s: dict) -> Path:
    _require(s, "out")
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(s: dict):
    _require(s, "data", "adjacency")
    graph = io.read_adjacency(s["adjacency"])
    return io.read_dataset(s["data"], graph)


def _load_chain(s: dict):
    _require(s, "chain")
    chain, man = io.read_chain(s["chain"])
    for key in ("data", "adjacency"):
        if key not in s and man.get(key):
            s[key] = man[key]
    return chain, _load_data(s)


def _summary_rows(summary, prefix: str, regions=None):
    regions = range(summary.mean.shape[0]) if regions is None else regions
    rows = []
    for r_idx, region in enumerate(regions):
        for m, t0 in enumerate(summary.t0):
            rows.append((region, t0, f"{prefix}mean", summary.mean[r_idx, m]))
            rows.append((region, t0, f"{prefix}lower", summary.lower[r_idx, m]))
            rows.append((region, t0, f"{prefix}upper", summary.upper[r_idx, m]))
    return rows


# ----------------------------------------------------------------- commands


def cmd_fit(s: dict) -> int:
    ds = _load_data(s)
    out = _out_dir(s)
    cfg = _sampler(s)
    chain = run_chain(ds, _priors(s), cfg)
    io.write_chain(
        chain,
        out,
        {"data": str(Path(s["data"]).resolve()), "adjacency": str(Path(s["adjacency"]).resolve())},
    )
    with (out / "params.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "mean", "sd", "q2.5", "q50", "q97.5", "ess"])
        for name, v in chain.scalar_draws().items():
            q = np.quantile(v, [0.025, 0.5, 0.975])
            w.writerow([name, *(repr(float(x)) for x in (v.mean(), v.std(), *q, chain.ess[name]))])
    print(f"fit: {chain.n_draws} draws in {chain.runtime_s:.1f}s -> {out}")
    for k, v in chain.acceptance.items():
        print(f"  acceptance {k}: {v:.3f}")
    return EXIT_OK


def cmd_gradient(s: dict) -> int:
    chain, ds = _load_chain(s)
    out = _out_dir(s)
    if s.get("midpoints"):
        t0 = ds.design.midpoints()
    else:
        t0 = np.asarray(s.get("t0") or [], dtype=float)
    if t0.size == 0:
        raise ValidationError("no gradient times: give --t0 or --midpoints")
    gp = gradient_posterior(chain, t0, ds, np.random.default_rng(s.get("seed", 0)), s.get("level", 0.95))
    rows = _summary_rows(gp, "")
    for region in range(ds.n_regions):
        for m, t in enumerate(gp.t0):
            rows.append((region, t, "significant", float(gp.significant[region, m])))
    io.write_summary(rows, out / "gradient.csv")
    n_sig = int(gp.significant.sum())
    print(f"gradient: {gp.mean.size} region-times, {n_sig} with intervals excluding 0 -> {out}")
    return EXIT_OK


def cmd_predict(s: dict) -> int:
    chain, ds = _load_chain(s)
    out = _out_dir(s)
    covariates = None
    t0 = np.asarray(s.get("t0") or [], dtype=float)
    if s.get("covariates"):
        t_cov, C = io.read_covariates_at(s["covariates"], ds.n_regions, ds.n_covariates)
        if t0.size == 0:
            t0 = t_cov
        lookup = {t: k for k, t in enumerate(t_cov)}
        missing = [t for t in t0 if t not in lookup]
        if missing:
            raise ValidationError(f"missing covariates at t0={missing[0]:g}")
        covariates = C[:, [lookup[t] for t in t0], :]
    if t0.size == 0:
        raise ValidationError("no prediction times: give --t0 or a covariates file")
    rng = np.random.default_rng(s.get("seed", 0))
    y, fit = predict_outcome(chain, t0, ds, covariates, rng=rng, level=s.get("level", 0.95))
    rows = _summary_rows(y, "y_") + _summary_rows(fit, "fit_")
    rows.sort(key=lambda r: (r[0], r[1]))
    io.write_summary(rows, out / "predict.csv")
    print(f"predict: {ds.n_regions} regions x {t0.size} times -> {out}")
    return EXIT_OK


def cmd_score(s: dict) -> int:
    ds = _load_data(s)
    out = _out_dir(s)
    models = s.get("models") or list(MODELS)
    report = score_models(ds, _priors(s), _sampler(s), models, s.get("car_alpha", 0.99))
    if not report.rows:
        raise NumericalError("every model failed: " + "; ".join(report.failed.values()))
    with (out / "score.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "pD", "DIC", "DS", "dDIC", "dDS"])
        for r in report.table():
            w.writerow([r["model"], *(repr(float(r[k])) for k in ("pD", "DIC", "DS", "dDIC", "dDS"))])
    md = report.to_markdown()
    (out / "score.md").write_text(md)
    print(md, end="")
    return EXIT_OK


def cmd_simulate(s: dict) -> int:
    out = _out_dir(s)
    study = s.get("study", "gp")
    if study == "gp":
        truth = GPTruth()
    elif study == "sinusoid":
        truth = SinusoidTruth()
    else:
        raise ValidationError(f"study must be 'gp' or 'sinusoid', got {study!r}")
    graph = grid_graph(s.get("grid_rows", 2), s.get("grid_cols", 5))
    design = TemporalDesign(np.arange(1.0, s.get("n_times", 50) + 1.0))
    spec = SimSpec(
        graph=graph,
        design=design,
        truth=truth,
        n_datasets=s.get("n_datasets", 20),
        seed=s.get("seed", 0),
        coverage_level=s.get("level", 0.95),
        missing_fraction=s.get("missing_fraction", 0.0),
    )
    if s.get("save_datasets", True):
        ddir = out / "datasets"
        ddir.mkdir(exist_ok=True)
        io.write_adjacency(graph, ddir / "adjacency.txt")
        for k in range(spec.n_datasets):
            io.write_dataset(simulate_replicate(spec, k).ds, ddir / f"rep_{k:03d}.csv")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run_coverage_study(spec, _sampler(s), _priors(s), s.get("workers", 1))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    with (out / "coverage.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "hits", "total", "coverage", "mean_median"])
        for r in report.rows():
            w.writerow([r["quantity"], r["hits"], r["total"], repr(r["coverage"]), repr(r["mean_median"])])
    text = report.summary()
    (out / "coverage.md").write_text(text + "\n")
    (out / "medians.json").write_text(json.dumps(report.medians, indent=2) + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "gradient": cmd_gradient,
    "predict": cmd_predict,
    "score": cmd_score,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any setting")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="long-format CSV: region,time,y,x1,...")
    data.add_argument("--adjacency", help="adjacency list with n_regions header")

    sampler = argparse.ArgumentParser(add_help=False)
    sampler.add_argument("--n-iter", dest="n_iter", type=int)
    sampler.add_argument("--n-burn", dest="n_burn", type=int)
    sampler.add_argument("--thin", type=int)

    parser = argparse.ArgumentParser(prog="areal-gp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common, data, sampler], help="run the MCMC sampler")

    p = sub.add_parser("gradient", parents=[common, data], help="temporal gradients from a chain")
    p.add_argument("--chain", help="chain directory written by fit")
    p.add_argument("--t0", nargs="+", type=float)
    p.add_argument("--midpoints", action="store_const", const=True)
    p.add_argument("--level", type=float)

    p = sub.add_parser("predict", parents=[common, data], help="predict outcomes at new times")
    p.add_argument("--chain", help="chain directory written by fit")
    p.add_argument("--t0", nargs="+", type=float)
    p.add_argument("--covariates", help="CSV region,t0,x1,... of covariates at t0")
    p.add_argument("--level", type=float)

    p = sub.add_parser("score", parents=[common, data, sampler], help="DIC and D-S for all models")
    p.add_argument("--models", nargs="+", choices=MODELS)
    p.add_argument("--car-alpha", dest="car_alpha", type=float)

    p = sub.add_parser("simulate", parents=[common, sampler], help="coverage simulation study")
    p.add_argument("--study", choices=("gp", "sinusoid"))
    p.add_argument("--n-datasets", dest="n_datasets", type=int)
    p.add_argument("--missing-fraction", dest="missing_fraction", type=float)
    p.add_argument("--workers", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
