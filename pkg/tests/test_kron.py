import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from areal_gp.exceptions import ValidationError
from areal_gp.graph import car_precision
from areal_gp.kernel import correlation_matrix
from areal_gp.kron import (
    SeparableCovariance,
    SeparablePlusDiagonal,
    kron_logdet,
    kron_quad,
    kron_sample,
    kron_solve,
    unvec,
    vec,
)

from conftest import random_design, random_graph


def make_cov(rng, n_s, n_t):
    g = random_graph(rng, n_s)
    d = random_design(rng, n_t)
    Q = car_precision(g, 0.8, 1.5)
    R = correlation_matrix(d, 0.9)
    return SeparableCovariance(R, Q), np.kron(R, np.linalg.inv(Q))


def test_vec_is_column_stacking():
    Z = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(vec(Z), [0, 3, 1, 4, 2, 5])
    np.testing.assert_array_equal(unvec(vec(Z), 2, 3), Z)


def test_vec_kron_identity(rng):
    # (A kron B) vec(X) = vec(B X A')
    A, B, X = rng.normal(size=(3, 3)), rng.normal(size=(2, 2)), rng.normal(size=(2, 3))
    np.testing.assert_allclose(np.kron(A, B) @ vec(X), vec(B @ X @ A.T))


@pytest.mark.parametrize("n_s, n_t", [(2, 2), (3, 4), (5, 3), (5, 4)])
def test_solve_logdet_quad_match_dense(rng, n_s, n_t):
    cov, dense = make_cov(rng, n_s, n_t)
    v = rng.normal(size=n_s * n_t)
    np.testing.assert_allclose(kron_solve(cov, v), np.linalg.solve(dense, v), rtol=1e-9, atol=1e-9)
    assert kron_logdet(cov) == pytest.approx(np.linalg.slogdet(dense)[1], abs=1e-8)
    assert kron_quad(cov, v) == pytest.approx(v @ np.linalg.solve(dense, v), rel=1e-10)
    np.testing.assert_allclose(cov.matvec(v), dense @ v, rtol=1e-10, atol=1e-12)
    M = rng.normal(size=(n_s * n_t, 3))
    np.testing.assert_allclose(cov.solve(M), np.linalg.solve(dense, M), rtol=1e-9, atol=1e-9)


def test_solve_rejects_wrong_length(rng):
    cov, _ = make_cov(rng, 3, 2)
    with pytest.raises(ValidationError):
        cov.solve(np.ones(5))


def test_sample_covariance_within_mc_error(rng):
    cov, dense = make_cov(rng, 3, 3)
    n = 20000
    draws = kron_sample(cov, np.random.default_rng(7), size=n)
    S = draws.T @ draws / n
    se = np.sqrt((np.outer(np.diag(dense), np.diag(dense)) + dense**2) / n)
    assert np.all(np.abs(S - dense) < 4 * se)
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * np.sqrt(np.diag(dense) / n))


def test_single_sample_shape_and_reproducible(rng):
    cov, _ = make_cov(rng, 4, 3)
    a = cov.sample(np.random.default_rng(3))
    b = cov.sample(np.random.default_rng(3))
    assert a.shape == (12,)
    np.testing.assert_array_equal(a, b)


def dense_plus_diag(R, Q, tau2):
    n_t = R.shape[0]
    S = np.linalg.inv(Q)
    prior = np.kron(R, S)
    noise = np.kron(np.eye(n_t), np.diag(tau2))
    return prior, noise


@pytest.mark.parametrize("n_s, n_t", [(2, 3), (4, 4), (5, 2)])
def test_separable_plus_diagonal_against_dense(rng, n_s, n_t):
    g = random_graph(rng, n_s)
    d = random_design(rng, n_t)
    R = correlation_matrix(d, 1.1)
    Q = car_precision(g, 0.6, 2.0)
    tau2 = rng.uniform(0.3, 2.0, size=n_s)
    spd = SeparablePlusDiagonal(R, Q, tau2)
    prior, noise = dense_plus_diag(R, Q, tau2)
    C = prior + noise
    E = rng.normal(size=(n_s, n_t))
    e = vec(E)
    np.testing.assert_allclose(vec(spd.marginal_solve(E)), np.linalg.solve(C, e), rtol=1e-9, atol=1e-10)
    assert spd.marginal_logdet() == pytest.approx(np.linalg.slogdet(C)[1], abs=1e-9)

    # posterior of Z given Y - mean = E: precision prior^-1 + noise^-1
    P = np.linalg.inv(prior) + np.linalg.inv(noise)
    V = np.linalg.inv(P)
    m = V @ np.linalg.solve(noise, e)
    Z = rng.normal(size=(n_s, n_t))
    expected = stats.multivariate_normal(m, V).logpdf(vec(Z))
    assert spd.posterior_logpdf(E, Z) == pytest.approx(expected, abs=1e-8)


def test_separable_plus_diagonal_sampling_moments(rng):
    n_s, n_t = 3, 3
    g = random_graph(rng, n_s)
    R = correlation_matrix(random_design(rng, n_t), 0.8)
    Q = car_precision(g, 0.7, 1.0)
    tau2 = np.array([0.5, 1.0, 1.5])
    spd = SeparablePlusDiagonal(R, Q, tau2)
    prior, noise = dense_plus_diag(R, Q, tau2)
    V = np.linalg.inv(np.linalg.inv(prior) + np.linalg.inv(noise))
    E = rng.normal(size=(n_s, n_t))
    m = V @ np.linalg.solve(noise, vec(E))
    r = np.random.default_rng(11)
    n = 20000
    draws = np.array([vec(spd.posterior_sample(E, r)) for _ in range(n)])
    assert np.all(np.abs(draws.mean(axis=0) - m) < 4 * np.sqrt(np.diag(V) / n))
    S = np.cov(draws.T, bias=True)
    se = np.sqrt((np.outer(np.diag(V), np.diag(V)) + V**2) / n)
    assert np.all(np.abs(S - V) < 4 * se)


@settings(max_examples=25, deadline=None)
@given(n_s=st.integers(2, 5), n_t=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_solve_inverts_matvec(n_s, n_t, seed):
    rng = np.random.default_rng(seed)
    cov, _ = make_cov(rng, n_s, n_t)
    v = rng.normal(size=n_s * n_t)
    np.testing.assert_allclose(cov.solve(cov.matvec(v)), v, rtol=1e-8, atol=1e-8)
