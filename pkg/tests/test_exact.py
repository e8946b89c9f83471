import itertools

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from irga.errors import RankDeficient, TooManyVariables
from irga.exact import (
    BetaPosterior,
    NuisanceSummary,
    SubsetBlock,
    beta_posterior,
    exact_selection_oracle,
    gprior_log_marginal,
    inclusion_probs,
    spike_slab_enumeration,
)
from irga.priors import GPrior, SpikeSlabPrior

# importance-weighted prior draws, 10^6 samples (scripts/freeze_oracles.py)
P2_MC_EST = np.array([0.3024655412345851, 0.29791838661521125])
P2_MC_SE = np.array([0.00055103402587211, 0.00051395721960078])
# quadrature over beta_gamma for the fixed n = 5 instance below
GPRIOR_Y = np.array([0.9, -0.3, 1.7, 0.2, -1.1])
GPRIOR_X = np.array([[1.0, 0.5], [-0.4, 1.2], [1.3, -0.7], [0.1, 0.3], [-0.8, -1.0]])
GPRIOR_REF = {(0,): -5.595574718297784, (0, 1): -6.2862686271864305}


def _single_column_log_odds(a, y, prior, sigma2):
    d = a @ a
    z = a @ y
    return prior.prior_log_odds + 0.5 * np.log(sigma2 / (sigma2 + prior.psi * d)) \
        + 0.5 * z**2 * prior.psi / (sigma2 * (sigma2 + prior.psi * d))


def test_null_observation_closed_form():
    sigma2, psi = 0.8, 1.7
    post = beta_posterior(np.zeros(1), np.eye(1), NuisanceSummary.zero(1), sigma2, SpikeSlabPrior(0.5, psi))
    assert abs(post.inclusion_log_odds()[0] - 0.5 * np.log(sigma2 / (psi + sigma2))) < 1e-12
    assert post.inclusion_probs()[0] < 0.5


def test_two_coefficients_match_importance_sampling():
    post = beta_posterior(
        np.array([1.1, -0.6]),
        np.array([[1.5, 0.4], [0.0, 0.9]]),
        NuisanceSummary(np.array([0.2, -0.1]), np.array([[0.5, 0.2], [0.2, 0.3]])),
        0.7,
        SpikeSlabPrior(0.4, 2.0),
    )
    z = np.abs(inclusion_probs(post) - P2_MC_EST) / P2_MC_SE
    assert np.all(z < 3), z


def test_isotropic_nuisance_covariance_acts_like_extra_noise():
    rng = np.random.default_rng(0)
    Ry, RX = rng.standard_normal(3), np.triu(rng.standard_normal((3, 3))) + 2 * np.eye(3)
    prior, c = SpikeSlabPrior(0.3, 1.0), 0.6
    a = beta_posterior(Ry, RX, NuisanceSummary(np.zeros(3), c * np.eye(3)), 1.0, prior)
    b = beta_posterior(Ry, RX, NuisanceSummary.zero(3), 1.0 + c, prior)
    np.testing.assert_allclose(a.log_weights(), b.log_weights(), atol=1e-10)
    for ta, tb in zip(a.models, b.models):
        assert ta.gamma == tb.gamma
        np.testing.assert_allclose(ta.cond_mean, tb.cond_mean, atol=1e-10)
        np.testing.assert_allclose(ta.cond_cov, tb.cond_cov, atol=1e-10)


def _posterior_with_weights(p, weights):
    subsets = [s for k in range(p + 1) for s in itertools.combinations(range(p), k)]
    blocks = []
    for k in range(p + 1):
        rows = [s for s in subsets if len(s) == k]
        lw = np.log(np.array([weights.get(s, 0.0) for s in rows]) + 1e-300)
        blocks.append(SubsetBlock(np.array(rows, dtype=int).reshape(len(rows), k), lw,
                                  np.zeros((len(rows), k)), np.tile(np.eye(k), (len(rows), 1, 1))))
    return BetaPosterior(p=p, blocks=blocks)


def test_inclusion_counting():
    single = _posterior_with_weights(3, {(0,): 1.0})
    np.testing.assert_allclose(inclusion_probs(single), [1.0, 0.0, 0.0], atol=1e-12)
    uniform = _posterior_with_weights(2, {(): 0.25, (0,): 0.25, (1,): 0.25, (0, 1): 0.25})
    np.testing.assert_allclose(inclusion_probs(uniform), [0.5, 0.5], atol=1e-12)


def test_posterior_structure():
    rng = np.random.default_rng(1)
    p = 5
    post = beta_posterior(rng.standard_normal(p), np.triu(rng.standard_normal((p, p))) + 2 * np.eye(p),
                          NuisanceSummary(rng.standard_normal(p), 0.3 * np.eye(p)), 0.9, SpikeSlabPrior(0.4, 1.5))
    assert len(post) == 2**p
    assert abs(np.logaddexp.reduce(post.log_weights())) < 1e-10
    for term in post.models:
        if term.gamma:
            np.testing.assert_allclose(term.cond_cov, term.cond_cov.T, atol=1e-14)
            assert np.linalg.eigvalsh(term.cond_cov).min() > 0


def test_posterior_mean_and_covariance_match_sampling():
    rng = np.random.default_rng(2)
    p = 3
    post = beta_posterior(np.array([1.5, -0.5, 0.8]), np.triu(rng.standard_normal((p, p))) + 1.5 * np.eye(p),
                          NuisanceSummary(np.zeros(p), 0.2 * np.eye(p)), 0.5, SpikeSlabPrior(0.5, 2.0))
    mix = post.as_mixture()
    draws = mix.sample(100_000, np.random.default_rng(3))
    se = draws.std(axis=0) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - post.mean()) < 4 * se)
    np.testing.assert_allclose(np.cov(draws, rowvar=False), post.cov(), atol=0.03)


def test_oracle_factorises_for_orthogonal_columns():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 6)))
    A = Q * np.array([1.0, 2.0, 0.5, 3.0, 1.0, 1.5])
    y = A @ np.array([1.0, 0, 0.5, 0, -1.2, 0]) + rng.standard_normal(40)
    prior, sigma2 = SpikeSlabPrior(0.3, 1.0), 1.0
    got = exact_selection_oracle(y, A, prior, sigma2)
    want = expit([_single_column_log_odds(A[:, j], y, prior, sigma2) for j in range(6)])
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_oracle_exchangeable_for_duplicated_column():
    rng = np.random.default_rng(5)
    a = rng.standard_normal(30)
    A = np.column_stack([a, a])
    y = 3 * a + rng.standard_normal(30)
    probs = exact_selection_oracle(y, A, SpikeSlabPrior(0.5, 1.0), 1.0)
    assert abs(probs[0] - probs[1]) < 1e-10


def test_oracle_agrees_with_enumeration_route():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((40, 10))
    y = A @ np.where(rng.random(10) < 0.3, rng.standard_normal(10) * 2, 0.0) + rng.standard_normal(40)
    prior = SpikeSlabPrior(0.3, 1.0)
    oracle = exact_selection_oracle(y, A, prior, 1.0)
    Q, Rm = np.linalg.qr(A)
    sign = np.sign(np.diag(Rm))
    post = beta_posterior((Q * sign).T @ y, Rm * sign[:, None], NuisanceSummary.zero(10), 1.0, prior)
    np.testing.assert_allclose(post.inclusion_probs(), oracle, atol=1e-8)
    np.testing.assert_allclose(spike_slab_enumeration(y, A, prior, 1.0).inclusion_probs(), oracle, atol=1e-8)


def test_enumeration_guards():
    prior = SpikeSlabPrior(0.5, 1.0)
    with pytest.raises(TooManyVariables):
        exact_selection_oracle(np.zeros(20), np.zeros((20, 16)), prior, 1.0)
    with pytest.raises(TooManyVariables):
        beta_posterior(np.zeros(26), np.eye(26), NuisanceSummary.zero(26), 1.0, prior)


def test_gprior_vanishing_scale_is_null_model():
    null = gprior_log_marginal(GPRIOR_Y, None, 1.0, 0.8)
    assert abs(null - stats.multivariate_normal(np.zeros(5), 0.8 * np.eye(5)).logpdf(GPRIOR_Y)) < 1e-12
    assert abs(gprior_log_marginal(GPRIOR_Y, GPRIOR_X[:, :1], 1e-12, 0.8) - null) < 1e-6


@pytest.mark.parametrize("cols", [(0,), (0, 1)])
def test_gprior_matches_quadrature(cols):
    got = gprior_log_marginal(GPRIOR_Y, GPRIOR_X[:, list(cols)], 3.0, 0.8)
    assert abs(got - GPRIOR_REF[cols]) < 1e-6


def test_gprior_scaling_identity():
    c = 2.7
    base = gprior_log_marginal(GPRIOR_Y, GPRIOR_X, 3.0, 0.8)
    scaled = gprior_log_marginal(c * GPRIOR_Y, GPRIOR_X, 3.0, 0.8 * c**2)
    assert abs(scaled - (base - 5 * np.log(c))) < 1e-8


def test_gprior_rejects_collinear_subset():
    x = GPRIOR_X[:, 0]
    with pytest.raises(RankDeficient):
        gprior_log_marginal(GPRIOR_Y, np.column_stack([x, -x]), 3.0, 0.8)


def test_gprior_enumeration_matches_marginals():
    rng = np.random.default_rng(7)
    n, p, g = 30, 3, 30.0
    X = rng.standard_normal((n, p))
    y = X @ np.array([1.0, 0.0, -0.7]) + rng.standard_normal(n)
    Q, Rm = np.linalg.qr(X)
    post = beta_posterior(Q.T @ y, Rm, NuisanceSummary.zero(p), 1.0, GPrior(g))
    # only Ry enters, so marginals are computed on the rotated p-dimensional model
    Ry = Q.T @ y
    logm = {}
    for term in post.models:
        cols = list(term.gamma)
        logm[term.gamma] = gprior_log_marginal(Ry, Rm[:, cols] if cols else None, g, 1.0)
    vals = np.array(list(logm.values()))
    want = dict(zip(logm, vals - np.logaddexp.reduce(vals)))
    for term in post.models:
        assert abs(term.log_weight - want[term.gamma]) < 1e-10


def test_gprior_bayes_factor_grows_with_n():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((1600, 3))
    y = X @ np.array([0.6, 0.0, -0.4]) + rng.standard_normal(1600)
    true, wrong = [0, 2], [0, 1]
    lbf = []
    for n in (50, 200, 800, 1600):
        lbf.append(gprior_log_marginal(y[:n], X[:n, true], n, 1.0) - gprior_log_marginal(y[:n], X[:n, wrong], n, 1.0))
    assert np.all(np.diff(lbf) > 0)
