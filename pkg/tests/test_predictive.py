import numpy as np
import pytest

from areal_gp.exceptions import ValidationError
from areal_gp.graph import grid_graph
from areal_gp.kernel import TemporalDesign, rho
from areal_gp.mcmc import PosteriorChain
from areal_gp.model import Dataset, ModelParams
from areal_gp.predictive import (
    PredictiveSummary,
    gradient_conditional,
    gradient_cross_cov,
    gradient_posterior,
    interpolate_Z,
    latent_conditional,
    predict_outcome,
    replicate_outcomes,
)

from conftest import dense_conditional, dense_cross_cov, random_dataset, random_design, random_graph, random_params


def chain_from(params_list, model="gp"):
    stack = lambda name: np.array([getattr(p, name) for p in params_list])  # noqa: E731
    return PosteriorChain(
        model=model,
        beta=stack("beta"),
        tau2=stack("tau2"),
        Z=stack("Z"),
        sigma2=stack("sigma2"),
        alpha=stack("alpha"),
        phi1=stack("phi1"),
    )


def setup(seed, n_s=4, n_t=4):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_s)
    d = random_design(rng, n_t)
    ds = random_dataset(rng, g, d)
    return rng, ds, random_params(rng, g, d)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", ["gradient", "latent"])
def test_conditionals_match_dense_oracle(seed, kind):
    rng, ds, p = setup(seed, n_s=int(2 + seed % 4), n_t=int(1 + seed % 4))
    t0 = float(rng.uniform(ds.design.times[0] - 1, ds.design.times[-1] + 1))
    fn = gradient_conditional if kind == "gradient" else latent_conditional
    mean, cov = fn(p, t0, ds.design, ds.graph)
    m_ref, V_ref = dense_conditional(ds.graph, ds.design, p, t0, kind)
    np.testing.assert_allclose(mean, m_ref, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(cov, V_ref, rtol=1e-8, atol=1e-8)


def test_cross_cov_blocks(rng, small_graph, small_design):
    p = random_params(rng, small_graph, small_design)
    t0 = 1.7
    cc = gradient_cross_cov(p, t0, small_design, small_graph)
    S = p.sigma2 * np.linalg.inv(small_graph.D - p.alpha * small_graph.W_dense)

    def K(lag):
        return rho(lag, p.phi1) * S

    h = 1e-6
    for j, tj in enumerate(small_design.times):
        lag = tj - t0
        np.testing.assert_allclose(cc.Kprime_blocks[j], (K(lag + h) - K(lag - h)) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(cc.Kpp0, p.phi1**2 * S)
    # Cov(Z'(t0), Z(t_j)) = -K'(t_j - t0)
    C, _ = dense_cross_cov(
        small_graph, small_design, t0, p.sigma2, p.alpha, p.phi1, "gradient"
    )
    np.testing.assert_allclose(np.hstack(list(-cc.Kprime_blocks)), C, atol=1e-12)


def test_finite_difference_of_interpolant_converges_to_gradient(rng, small_graph):
    d = TemporalDesign(np.arange(6.0))
    p = random_params(rng, small_graph, d)
    t0 = 2.4
    g_mean, _ = gradient_conditional(p, t0, d, small_graph)
    errs = []
    for h in (0.1, 0.05, 0.025):
        up, _ = latent_conditional(p, t0 + h, d, small_graph)
        dn, _ = latent_conditional(p, t0 - h, d, small_graph)
        errs.append(np.max(np.abs((up - dn) / (2 * h) - g_mean)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5)), ratios


def test_far_from_data_gives_prior(rng, small_graph, small_design):
    p = random_params(rng, small_graph, small_design)
    S = p.sigma2 * np.linalg.inv(small_graph.D - p.alpha * small_graph.W_dense)
    m, V = latent_conditional(p, 1e4, small_design, small_graph)
    np.testing.assert_allclose(m, 0.0, atol=1e-12)
    np.testing.assert_allclose(V, S, rtol=1e-12)
    m, V = gradient_conditional(p, -1e4, small_design, small_graph)
    np.testing.assert_allclose(m, 0.0, atol=1e-12)
    np.testing.assert_allclose(V, p.phi1**2 * S, rtol=1e-12)


def test_interpolation_at_knots_is_exact(rng, small_graph, small_design):
    p = random_params(rng, small_graph, small_design)
    for j, t in enumerate(small_design.times):
        m, V = latent_conditional(p, t, small_design, small_graph)
        np.testing.assert_allclose(m, p.Z[:, j], atol=1e-9)
        np.testing.assert_allclose(V, 0.0, atol=1e-9)


def test_one_draw_chain_summary(rng, small_graph, small_design):
    p = random_params(rng, small_graph, small_design)
    ds = random_dataset(rng, small_graph, small_design)
    ch = chain_from([p])
    post = interpolate_Z(ch, small_design.times[1], ds)
    np.testing.assert_allclose(post.draws[0, :, 0], p.Z[:, 1], atol=1e-9)
    np.testing.assert_allclose(post.mean[:, 0], p.Z[:, 1], atol=1e-9)
    np.testing.assert_allclose(post.lower, post.upper, atol=1e-9)


def test_composition_moments_match_conditional(small_graph, small_design):
    rng = np.random.default_rng(5)
    p = random_params(rng, small_graph, small_design)
    ds = random_dataset(rng, small_graph, small_design)
    n = 20000
    ch = chain_from([p] * n)
    t0 = 1.3
    post = gradient_posterior(ch, t0, ds, rng=np.random.default_rng(1))
    m, V = gradient_conditional(p, t0, small_design, small_graph)
    x = post.draws[:, :, 0]
    assert np.all(np.abs(x.mean(axis=0) - m) < 4 * np.sqrt(np.diag(V) / n))
    np.testing.assert_allclose(np.cov(x.T), V, atol=6 * np.max(np.diag(V)) / np.sqrt(n))


def test_gradient_of_constant_and_linear_latent(rng):
    g = grid_graph(1, 3)
    d = TemporalDesign(np.linspace(0, 10, 21))
    X = np.ones((3, 21, 1))
    ds = Dataset(g, d, rng.normal(size=(3, 21)), X)
    flat = ModelParams(np.zeros(1), 0.01, np.ones(3), 0.5, 0.5, np.full((3, 21), 4.0))
    post = gradient_posterior(chain_from([flat] * 400), [2.5, 5.25], ds, rng=rng)
    # far from the edges the constant is reproduced, so the slope is about 0
    assert np.all(np.abs(post.mean) < 4 * post.draws.std(axis=0) + 0.05)
    slope = np.array([0.5, -1.0, 2.0])
    lin = ModelParams(np.zeros(1), 0.01, np.ones(3), 0.5, 0.5, slope[:, None] * d.times[None, :])
    post = gradient_posterior(chain_from([lin] * 400), [5.25], ds, rng=rng)
    sd = post.draws.std(axis=0)[:, 0]
    assert np.all(np.abs(post.mean[:, 0] - slope) < 3 * sd + 0.05)


def test_significance_flags():
    draws = np.stack([np.array([[1.0], [-1.0], [0.0]]) + 0.1 * k for k in range(-5, 6)])
    s = PredictiveSummary("gradient", np.array([0.0]), draws)
    assert s.significant[:, 0].tolist() == [True, True, False]
    assert s.covers(np.array([[1.0], [5.0], [0.0]]))[:, 0].tolist() == [True, False, True]


def test_predict_outcome_and_covariates(rng, small_graph, small_design):
    ds = random_dataset(rng, small_graph, small_design, p=2)
    p = random_params(rng, small_graph, small_design, p=2)
    ch = chain_from([p] * 50)
    y, fit = predict_outcome(ch, small_design.times[2], ds, rng=rng)
    np.testing.assert_allclose(fit.mean[:, 0], ds.fitted(p.beta)[:, 2] + p.Z[:, 2], atol=1e-8)
    assert y.draws.shape == (50, 4, 1)
    with pytest.raises(ValidationError, match="missing covariates at t0=1.7"):
        predict_outcome(ch, 1.7, ds)
    y, fit = predict_outcome(ch, 1.7, ds, covariates=[1.0, 2.0], region=2)
    assert fit.draws.shape == (50, 1, 1)
    with pytest.raises(ValidationError, match="shape"):
        predict_outcome(ch, 1.7, ds, covariates=np.ones(3))
    with pytest.raises(ValidationError, match="missing covariates"):
        predict_outcome(ch, [1.7], ds, covariates=[np.nan, 1.0])


def test_replicates(rng, small_graph, small_design):
    ds = random_dataset(rng, small_graph, small_design, missing=2)
    p = random_params(rng, small_graph, small_design)
    p.tau2 = np.full(4, 1e-300)
    rep = replicate_outcomes(chain_from([p] * 3), ds, rng=rng)
    mean = ds.fitted(p.beta) + p.Z
    np.testing.assert_allclose(rep[:, ds.mask], np.broadcast_to(mean[ds.mask], (3, ds.n_obs)))
    assert np.all(np.isnan(rep[:, ~ds.mask]))


def test_replicate_mean_identity(rng, small_graph, small_design):
    ds = random_dataset(rng, small_graph, small_design)
    p = random_params(rng, small_graph, small_design)
    n = 20000
    rep = replicate_outcomes(chain_from([p] * n), ds, rng=rng)
    mean = ds.fitted(p.beta) + p.Z
    se = np.sqrt(p.tau2[:, None] / n)
    assert np.all(np.abs(rep.mean(axis=0) - mean) < 4.5 * se)


def test_input_errors(rng, small_graph, small_design):
    ds = random_dataset(rng, small_graph, small_design)
    p = random_params(rng, small_graph, small_design)
    ch = chain_from([p])
    with pytest.raises(ValidationError, match="finite"):
        gradient_posterior(ch, np.nan, ds)
    with pytest.raises(ValidationError, match="nonempty"):
        gradient_posterior(ch, [], ds)
    empty = PosteriorChain("gp", np.empty((0, 1)), np.empty((0, 4)), np.empty((0, 4, 4)),
                           np.empty(0), np.empty(0), np.empty(0))
    with pytest.raises(ValidationError, match="no stored draws"):
        gradient_posterior(empty, 1.0, ds)
    with pytest.raises(ValidationError, match="no latent-process"):
        interpolate_Z(PosteriorChain("ols", ch.beta, ch.tau2, ch.Z), 1.0, ds)
    other = random_dataset(rng, grid_graph(1, 3), small_design)
    with pytest.raises(ValidationError, match="do not match"):
        interpolate_Z(ch, 1.0, other)
