import numpy as np
import pytest

from areal_gp.graph import build_graph, grid_graph
from areal_gp.kernel import TemporalDesign, correlation_matrix, rho, rho_prime
from areal_gp.model import Dataset, ModelParams

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_graph(rng, n_s):
    """Connected graph: a path plus a few random chords."""
    edges = [(i, i + 1) for i in range(n_s - 1)]
    for _ in range(n_s // 2):
        i, j = rng.choice(n_s, 2, replace=False)
        edges.append((int(min(i, j)), int(max(i, j))))
    return build_graph(sorted(set(edges)), n_s)


def random_design(rng, n_t):
    return TemporalDesign(np.cumsum(rng.uniform(0.3, 1.5, size=n_t)))


def random_params(rng, graph, design, p=2):
    lo, hi = graph.alpha_interval
    return ModelParams(
        beta=rng.normal(size=p),
        sigma2=float(rng.uniform(0.5, 3.0)),
        tau2=rng.uniform(0.2, 2.0, size=graph.n_regions),
        alpha=float(rng.uniform(max(lo, 0.05), 0.95)),
        phi1=float(rng.uniform(0.3, 2.0)),
        Z=rng.normal(size=(graph.n_regions, design.n_times)),
    )


def random_dataset(rng, graph, design, p=2, missing=0):
    X = np.concatenate(
        [np.ones((graph.n_regions, design.n_times, 1)),
         rng.normal(size=(graph.n_regions, design.n_times, p - 1))],
        axis=2,
    )
    Y = rng.normal(size=(graph.n_regions, design.n_times)) * 2 + 1
    for _ in range(missing):
        i = rng.integers(graph.n_regions)
        j = rng.integers(1, design.n_times)
        Y[i, j] = np.nan
    return Dataset(graph, design, Y, X)


def dense_latent_cov(graph, design, sigma2, alpha, phi1):
    """``Cov(vec Z)`` built by brute force (column-stacked, region fastest)."""
    S = sigma2 * np.linalg.inv(graph.D - alpha * graph.W_dense)
    return np.kron(correlation_matrix(design, phi1), S)


def dense_cross_cov(graph, design, t0, sigma2, alpha, phi1, kind):
    """``Cov(W(t0), vec Z)`` and ``Var(W(t0))`` for ``W = Z`` or ``W = Z'``.

    The gradient cross-covariance differentiates ``Cov(Z(s), Z(t_j))`` in
    its first argument, which is how the oracle is derived independently
    of the code under test.
    """
    S = sigma2 * np.linalg.inv(graph.D - alpha * graph.W_dense)
    lag = t0 - design.times
    if kind == "gradient":
        c = rho_prime(lag, phi1)
        var = phi1**2 * S
    else:
        c = rho(lag, phi1)
        var = S
    cross = np.hstack([cj * S for cj in np.atleast_1d(c)])
    return cross, var


def dense_conditional(graph, design, params, t0, kind):
    Sigma = dense_latent_cov(graph, design, params.sigma2, params.alpha, params.phi1)
    C, V = dense_cross_cov(graph, design, t0, params.sigma2, params.alpha, params.phi1, kind)
    z = params.Z.reshape(-1, order="F")
    A = np.linalg.solve(Sigma, C.T)
    return C @ np.linalg.solve(Sigma, z), V - C @ A


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_graph():
    return grid_graph(2, 2)


@pytest.fixture
def small_design():
    return TemporalDesign(np.array([0.0, 1.0, 2.5, 3.0]))
