"""Plain-text formats: adjacency lists, long-format data, chain directories,
flat configs and ``region,t0,stat,value`` summaries.

Floats are written with ``repr`` so every file reads back to identical
values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .graph import ArealGraph, build_graph
from .kernel import TemporalDesign
from .mcmc import PosteriorChain
from .model import Dataset

__all__ = [
    "config_hash",
    "read_adjacency",
    "read_chain",
    "read_config",
    "read_covariates_at",
    "read_dataset",
    "read_summary",
    "write_adjacency",
    "write_chain",
    "write_dataset",
    "write_summary",
]


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


# ---------------------------------------------------------------- adjacency


def read_adjacency(path) -> ArealGraph:
    """Parse ``n_regions=<int>`` followed by ``i j [weight]`` lines (0-based)."""
    path = Path(path)
    n_regions = None
    edges = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if n_regions is None:
                key, sep, val = line.partition("=")
                if not sep or key.strip() != "n_regions":
                    raise ValidationError(f"{path}:{lineno}: expected header 'n_regions=<int>'")
                try:
                    n_regions = int(val)
                except ValueError:
                    raise ValidationError(f"{path}:{lineno}: n_regions is not an integer") from None
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValidationError(f"{path}:{lineno}: expected 'i j [weight]', got {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: cannot parse {line!r}") from None
            for r in (i, j):
                if not 0 <= r < n_regions:
                    raise ValidationError(
                        f"{path}:{lineno}: region {r} is not in 0..{n_regions - 1}"
                    )
            edges.append((i, j, w))
    if n_regions is None:
        raise ValidationError(f"{path}: missing 'n_regions=<int>' header")
    return build_graph(edges, n_regions)


def write_adjacency(graph: ArealGraph, path) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"n_regions={graph.n_regions}\n")
        for i, j, w in graph.edges():
            fh.write(f"{i} {j}\n" if w == 1.0 else f"{i} {j} {w!r}\n")


# --------------------------------------------------------------------- data


def read_dataset(data_path, graph: ArealGraph) -> Dataset:
    """Read ``region,time,y,x1,...,xp``; an empty ``y`` marks a missing outcome.

    Every region of ``graph`` must appear at every time exactly once.
    """
    data_path = Path(data_path)
    with data_path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{data_path}: empty file") from None
        if header[:3] != ["region", "time", "y"]:
            raise ValidationError(f"{data_path}:1: header must start with 'region,time,y'")
        names = tuple(header[3:])
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ValidationError(
                    f"{data_path}:{lineno}: expected {len(header)} fields, got {len(rec)}"
                )
            try:
                region = int(rec[0])
                t = float(rec[1])
                y = float(rec[2]) if rec[2].strip() else math.nan
                x = [float(c) for c in rec[3:]]
            except ValueError:
                raise ValidationError(f"{data_path}:{lineno}: non-numeric field") from None
            if not math.isfinite(t) or not all(math.isfinite(v) for v in x):
                raise ValidationError(f"{data_path}:{lineno}: time and covariates must be finite")
            rows.append((lineno, region, t, y, x))
    if not rows:
        raise ValidationError(f"{data_path}: no data rows")

    regions = sorted({r[1] for r in rows})
    expected = set(range(graph.n_regions))
    unknown = sorted(set(regions) - expected)
    absent = sorted(expected - set(regions))
    if unknown or absent:
        parts = []
        if unknown:
            parts.append(f"regions not in the adjacency file: {unknown}")
        if absent:
            parts.append(f"adjacency regions with no data: {absent}")
        raise ValidationError(f"{data_path}: " + "; ".join(parts))

    times = np.array(sorted({r[2] for r in rows}))
    t_index = {t: k for k, t in enumerate(times)}
    n_s, n_t, p = graph.n_regions, times.size, len(names)
    Y = np.full((n_s, n_t), math.nan)
    X = np.full((n_s, n_t, p), math.nan)
    seen = np.zeros((n_s, n_t), dtype=int)
    for lineno, region, t, y, x in rows:
        j = t_index[t]
        if seen[region, j]:
            raise ValidationError(
                f"{data_path}:{lineno}: duplicate row for region {region}, time {t:g} "
                f"(first at line {seen[region, j]})"
            )
        seen[region, j] = lineno
        Y[region, j] = y
        X[region, j] = x
    gaps = np.argwhere(seen == 0)
    if gaps.size:
        shown = ", ".join(f"({i}, {times[j]:g})" for i, j in gaps[:5])
        raise ValidationError(
            f"{data_path}: incomplete grid, {len(gaps)} (region, time) rows missing: {shown}"
        )
    return Dataset(graph, TemporalDesign(times), Y, X, names)


def write_dataset(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "time", "y", *ds.covariate_names])
        for i in range(ds.n_regions):
            for j, t in enumerate(ds.design.times):
                w.writerow([i, repr(float(t)), _fmt(ds.Y[i, j]), *map(_fmt, ds.X[i, j])])


def read_covariates_at(path, n_regions: int, n_covariates: int):
    """Read ``region,t0,x1..xp`` into ``(t0 array, C (n_s, n_t0, p))``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["region", "t0"] or len(header) != 2 + n_covariates:
            raise ValidationError(
                f"{path}:1: header must be 'region,t0' followed by {n_covariates} covariates"
            )
        vals = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                i, t, x = int(rec[0]), float(rec[1]), [float(c) for c in rec[2:]]
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: cannot parse row") from None
            if not 0 <= i < n_regions:
                raise ValidationError(f"{path}:{lineno}: region {i} is not in 0..{n_regions - 1}")
            vals[(i, t)] = x
    t0 = np.array(sorted({k[1] for k in vals}))
    C = np.full((n_regions, t0.size, n_covariates), math.nan)
    for (i, t), x in vals.items():
        C[i, np.searchsorted(t0, t)] = x
    return t0, C


# -------------------------------------------------------------------- chain

DRAWS = "draws.csv"
Z_DRAWS = "z_draws.npy"
Y_MISSING = "y_missing.npy"
MANIFEST = "manifest.json"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_chain(chain: PosteriorChain, out_dir, extra_manifest: dict | None = None) -> Path:
    """Write draws (one CSV row per stored iteration), latent draws and a manifest.

    ``draws.csv`` columns: ``beta_0..beta_{p-1}``, then ``sigma2``,
    ``alpha``, ``phi1`` (GP only), ``tau2_0..tau2_{n_s-1}`` and any
    model-specific extras. ``z_draws.npy`` is ``(n, n_s, n_t)``;
    ``y_missing.npy`` is ``(n, n_missing)``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = chain.scalar_draws()
    names = list(cols)
    M = np.column_stack([cols[n] for n in names]) if names else np.empty((chain.n_draws, 0))
    with (out / DRAWS).open("w") as fh:
        fh.write(",".join(names) + "\n")
        for row in M:
            fh.write(",".join(repr(v) for v in row.tolist()) + "\n")
    np.save(out / Z_DRAWS, chain.Z)
    y_mis = chain.y_missing if chain.y_missing is not None else np.empty((chain.n_draws, 0))
    np.save(out / Y_MISSING, y_mis)
    manifest = {
        "model": chain.model,
        "n_draws": chain.n_draws,
        "n_covariates": int(chain.beta.shape[1]),
        "n_regions": int(chain.tau2.shape[1]),
        "n_times": int(chain.Z.shape[2]),
        "columns": names,
        "extra_columns": list(chain.extra),
        "seed": chain.config.get("seed"),
        "config": chain.config,
        "config_hash": config_hash(chain.config),
        "acceptance": chain.acceptance,
        "ess": chain.ess,
        "runtime_s": chain.runtime_s,
    }
    manifest.update(extra_manifest or {})
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return out


def read_chain(chain_dir) -> tuple[PosteriorChain, dict]:
    d = Path(chain_dir)
    for name in (DRAWS, Z_DRAWS, MANIFEST):
        if not (d / name).exists():
            raise ValidationError(f"{d}: not a chain directory (missing {name})")
    man = json.loads((d / MANIFEST).read_text())
    with (d / DRAWS).open() as fh:
        names = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    M = np.array(rows, dtype=float).reshape(len(rows), len(names))
    col = {n: M[:, k] for k, n in enumerate(names)}
    p, n_s = man["n_covariates"], man["n_regions"]
    beta = np.column_stack([col[f"beta_{k}"] for k in range(p)]) if p else np.empty((len(rows), 0))
    tau2 = np.column_stack([col[f"tau2_{i}"] for i in range(n_s)])
    y_mis = np.load(d / Y_MISSING) if (d / Y_MISSING).exists() else None
    chain = PosteriorChain(
        model=man["model"],
        beta=beta,
        tau2=tau2,
        Z=np.load(d / Z_DRAWS),
        sigma2=col.get("sigma2"),
        alpha=col.get("alpha"),
        phi1=col.get("phi1"),
        y_missing=y_mis,
        extra={k: col[k] for k in man.get("extra_columns", [])},
        acceptance=man.get("acceptance", {}),
        ess=man.get("ess", {}),
        config=man.get("config", {}),
        runtime_s=man.get("runtime_s", 0.0),
    )
    return chain, man


# ------------------------------------------------------------------- config


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; later keys win."""
    path = Path(path)
    out = {}
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip()] = val.strip()
    return out


# ------------------------------------------------------------------ summary

SUMMARY_HEADER = ["region", "t0", "stat", "value"]


def write_summary(rows, path) -> None:
    """Write ``(region, t0, stat, value)`` tuples."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for region, t0, stat, value in rows:
            w.writerow([int(region), repr(float(t0)), stat, repr(float(value))])


def read_summary(path) -> list[tuple[int, float, str, float]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SUMMARY_HEADER:
            raise ValidationError(f"{path}:1: header must be {','.join(SUMMARY_HEADER)}")
        return [(int(r[0]), float(r[1]), r[2], float(r[3])) for r in reader if r]
