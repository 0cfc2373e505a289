"""Areal adjacency structure and the CAR precision built on it.

Regions are indexed ``0 .. n_regions-1``. The adjacency ``W`` is stored
sparse; the spatial precision for a propriety parameter ``alpha`` and
variance ``sigma2`` is ``(D - alpha W) / sigma2`` with ``D = diag(W 1)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import NumericalError, ValidationError

__all__ = [
    "ArealGraph",
    "build_graph",
    "car_precision",
    "grid_graph",
    "mrf_full_conditional",
]

_LAMBDA_MAX_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ArealGraph:
    """Immutable region adjacency.

    Attributes
    ----------
    n_regions : int
    neighbor_lists : tuple of tuple of int
        Sorted neighbor indices per region.
    W : scipy.sparse.csr_matrix
        Symmetric, nonnegative, zero diagonal.
    degrees : ndarray
        Row sums ``w_{i+}`` (the diagonal of ``D``).
    alpha_interval : tuple of float
        Open interval ``(1/lambda_min, 1/lambda_max)`` on which ``D - alpha W``
        is positive definite.
    """

    n_regions: int
    neighbor_lists: tuple
    W: sp.csr_matrix = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    n_components: int = 1

    @property
    def alpha_interval(self) -> tuple[float, float]:
        return 1.0 / self.eigenvalues[0], 1.0 / self.eigenvalues[-1]

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.degrees)

    @cached_property
    def W_dense(self) -> np.ndarray:
        return self.W.toarray()

    @cached_property
    def log_degree_sum(self) -> float:
        return float(np.sum(np.log(self.degrees)))

    def logdet_car(self, alpha):
        """``log det(D - alpha W)``; vectorized over ``alpha``.

        Uses ``det(D - aW) = det(D) prod(1 - a lambda_k)`` with ``lambda_k`` the
        eigenvalues of ``D^{-1/2} W D^{-1/2}``.
        """
        a = np.asarray(alpha, dtype=float)
        terms = np.log1p(-np.multiply.outer(a, self.eigenvalues))
        return self.log_degree_sum + terms.sum(axis=-1)

    def edges(self):
        """Yield ``(i, j, w)`` with ``i < j``."""
        coo = sp.triu(self.W, k=1).tocoo()
        for i, j, w in zip(coo.row, coo.col, coo.data):
            yield int(i), int(j), float(w)


def build_graph(edges, n_regions: int) -> ArealGraph:
    """Assemble an :class:`ArealGraph` from an edge list.

    Parameters
    ----------
    edges : iterable
        Pairs ``(i, j)`` or triples ``(i, j, weight)``; weight defaults to 1.
        An edge and its reverse may both appear if their weights agree.
    n_regions : int

    Raises
    ------
    ValidationError
        Self-edges, out-of-range indices, nonpositive or conflicting weights,
        or a region with no neighbors.
    """
    if int(n_regions) != n_regions or n_regions < 1:
        raise ValidationError(f"n_regions must be a positive integer, got {n_regions!r}")
    n_regions = int(n_regions)

    pairs: dict[tuple[int, int], float] = {}
    for edge in edges:
        if len(edge) == 2:
            i, j = edge
            w = 1.0
        elif len(edge) == 3:
            i, j, w = edge
            w = float(w)
        else:
            raise ValidationError(f"edge must be (i, j) or (i, j, weight), got {edge!r}")
        if int(i) != i or int(j) != j:
            raise ValidationError(f"edge indices must be integers, got {edge!r}")
        i, j = int(i), int(j)
        for k in (i, j):
            if not 0 <= k < n_regions:
                raise ValidationError(
                    f"edge {edge!r} references region {k} outside [0, {n_regions})"
                )
        if i == j:
            raise ValidationError(f"self-edge on region {i}")
        if not (w > 0 and np.isfinite(w)):
            raise ValidationError(f"edge ({i}, {j}) has nonpositive weight {w}")
        key = (min(i, j), max(i, j))
        if key in pairs and pairs[key] != w:
            raise ValidationError(
                f"edge {key} given twice with different weights ({pairs[key]} vs {w})"
            )
        pairs[key] = w

    rows, cols, vals = [], [], []
    for (i, j), w in pairs.items():
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n_regions, n_regions), dtype=float)
    W.sort_indices()
    degrees = np.asarray(W.sum(axis=1)).ravel()

    isolated = np.flatnonzero(degrees <= 0)
    if isolated.size:
        names = ", ".join(str(k) for k in isolated)
        raise ValidationError(f"region {names} is isolated (no neighbors)")

    n_comp, _ = connected_components(W, directed=False)
    if n_comp > 1:
        warnings.warn(
            f"adjacency has {n_comp} connected components; spatial smoothing "
            "will not cross components",
            stacklevel=2,
        )

    d_isqrt = 1.0 / np.sqrt(degrees)
    M = d_isqrt[:, None] * W.toarray() * d_isqrt[None, :]
    eig = sla.eigvalsh(0.5 * (M + M.T))
    if abs(eig[-1] - 1.0) > _LAMBDA_MAX_TOL:
        raise NumericalError(
            f"largest eigenvalue of D^-1/2 W D^-1/2 is {eig[-1]!r}, expected 1"
        )
    # exact in theory; snapping makes alpha = 1 fall outside the open interval
    eig[-1] = 1.0

    neighbor_lists = tuple(
        tuple(int(k) for k in W.indices[W.indptr[i]:W.indptr[i + 1]])
        for i in range(n_regions)
    )
    return ArealGraph(
        n_regions=n_regions,
        neighbor_lists=neighbor_lists,
        W=W,
        degrees=degrees,
        eigenvalues=eig,
        n_components=int(n_comp),
    )


def grid_graph(n_rows: int, n_cols: int) -> ArealGraph:
    """Rook-adjacency lattice, regions numbered row-major."""
    edges = []
    for r in range(n_rows):
        for c in range(n_cols):
            k = r * n_cols + c
            if c + 1 < n_cols:
                edges.append((k, k + 1))
            if r + 1 < n_rows:
                edges.append((k, k + n_cols))
    return build_graph(edges, n_rows * n_cols)


def _check_alpha(graph: ArealGraph, alpha: float) -> None:
    lo, hi = graph.alpha_interval
    if not (lo < alpha < hi):
        raise ValidationError(
            f"alpha={alpha!r} outside the propriety interval ({lo:.6g}, {hi:.6g})"
        )


def car_precision(graph: ArealGraph, alpha: float, sigma2: float) -> np.ndarray:
    """Dense CAR precision ``(D - alpha W) / sigma2``.

    Raises
    ------
    ValidationError
        ``alpha`` on or outside the propriety interval, or ``sigma2 <= 0``.
    """
    _check_alpha(graph, alpha)
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2!r}")
    Q = (graph.D - alpha * graph.W_dense) / sigma2
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"CAR precision not positive definite at alpha={alpha}") from exc
    return Q


def mrf_full_conditional(graph: ArealGraph, z, i: int, alpha: float, sigma2: float):
    """Mean and variance of ``z[i]`` given all other regions.

    Mean is ``alpha * sum_j (w_ij / w_i+) z_j``, variance ``sigma2 / w_i+``.
    """
    _check_alpha(graph, alpha)
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2!r}")
    z = np.asarray(z, dtype=float)
    if z.shape != (graph.n_regions,):
        raise ValidationError(f"z must have shape ({graph.n_regions},), got {z.shape}")
    if not 0 <= i < graph.n_regions:
        raise ValidationError(f"region index {i} out of range")
    W = graph.W
    lo, hi = W.indptr[i], W.indptr[i + 1]
    w_i = W.data[lo:hi]
    deg = graph.degrees[i]
    mean = alpha * float(np.dot(w_i, z[W.indices[lo:hi]])) / deg
    return mean, sigma2 / deg
