import warnings

import numpy as np
import pytest

from irga.errors import ConfigError, InvalidVariance
from irga.exact import spike_slab_enumeration
from irga.priors import SpikeSlabPrior
from irga.vamp import VampConfig, VampSolver, vamp_fit

from conftest import vamp_oracle_instance

KNOWN = VampConfig(estimate_sigma2=False)


def test_identity_design_gaussian_limit_is_ridge():
    rng = np.random.default_rng(0)
    q, psi, sigma2 = 6, 2.0, 0.5
    y = rng.standard_normal(q) * 2
    fit = vamp_fit(y, np.eye(q), SpikeSlabPrior(1 - 1e-15, psi), sigma2, KNOWN)
    np.testing.assert_allclose(fit.mean, y * psi / (psi + sigma2), atol=1e-6)


def test_two_coefficients_match_enumeration():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((20, 2))
    assert np.linalg.cond(A) < 3
    sigma2 = 0.25
    y = A @ np.array([3.0, 0.0]) + np.sqrt(sigma2) * rng.standard_normal(20)
    prior = SpikeSlabPrior(0.3, 1.0)
    fit = vamp_fit(y, A, prior, sigma2, KNOWN)
    exact = spike_slab_enumeration(y, A, prior, sigma2)
    assert np.abs(fit.inclusion_probs - exact.inclusion_probs()).max() < 0.02
    assert np.abs(fit.mean - exact.mean()).max() < 0.02


def test_no_signal_gives_zero_mean_and_shrunk_inclusion():
    A = np.random.default_rng(2).standard_normal((30, 5))
    prior = SpikeSlabPrior(0.4, 1.0)
    fit = vamp_fit(np.zeros(30), A, prior, 1.0, KNOWN)
    assert np.abs(fit.mean).max() < 1e-8
    assert np.all(fit.inclusion_probs <= prior.lam)


def test_fixed_point_is_stable():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((60, 8))
    y = A @ np.r_[2.0, 0, -1.5, 0, 0, 0, 0.8, 0] + rng.standard_normal(60)
    cfg = VampConfig(estimate_sigma2=False, tol=1e-9)
    solver = VampSolver(y, A, SpikeSlabPrior(0.3, 1.0), cfg)
    fit = solver.run(1.0)
    assert fit.converged
    nxt = solver.step(fit.state)
    change = np.linalg.norm(nxt.x1hat - fit.state.x1hat) / np.linalg.norm(fit.state.x1hat)
    assert change < 10 * cfg.tol


@pytest.mark.parametrize("seed", range(50))
def test_agrees_with_enumeration_on_random_instances(seed):
    y, A = vamp_oracle_instance(seed)
    prior = SpikeSlabPrior(0.3, 1.0)
    fit = vamp_fit(y, A, prior, 1.0, KNOWN)
    exact = spike_slab_enumeration(y, A, prior, 1.0)
    assert np.abs(fit.mean - exact.mean()).max() < 0.05
    assert np.abs(fit.inclusion_probs - exact.inclusion_probs()).max() < 0.05


@pytest.mark.parametrize("m,q", [(40, 10), (12, 30)])
def test_lmmse_covariance_matches_direct_inverse(m, q):
    rng = np.random.default_rng(4)
    A = rng.standard_normal((m, q)) * rng.uniform(0.5, 2.0, q)
    y = A @ np.where(rng.random(q) < 0.3, 2.0, 0.0) + rng.standard_normal(m)
    fit = vamp_fit(y, A, SpikeSlabPrior(0.3, 1.0), 1.0, KNOWN)
    _, _, gamma2, scale = fit.lmmse_factors
    direct = np.linalg.inv(A.T @ A / fit.sigma2_hat + gamma2 * np.diag(scale**2))
    B = rng.standard_normal((3, q))
    np.testing.assert_allclose(fit.projected_covariance(np.eye(q)), direct, atol=1e-10, rtol=1e-8)
    np.testing.assert_allclose(fit.projected_covariance(B), B @ direct @ B.T, atol=1e-10, rtol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_noise_variance_estimate_is_sane(seed):
    rng = np.random.default_rng(100 + seed)
    m, q = 400, 40
    A = rng.standard_normal((m, q))
    alpha = np.zeros(q)
    alpha[rng.choice(q, 5, replace=False)] = rng.choice([-1.0, 1.0], 5) * rng.uniform(1, 3, 5)
    y = A @ alpha + rng.standard_normal(m)
    fit = vamp_fit(y, A, SpikeSlabPrior(0.2, 1.0), float(y @ y) / m)
    assert 0.7 <= fit.sigma2_hat <= 1.4


def test_iteration_cap_warns_and_flags():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((30, 10))
    y = A @ np.r_[3.0, -3.0, np.zeros(8)] + rng.standard_normal(30)
    with pytest.warns(Warning):
        fit = vamp_fit(y, A, SpikeSlabPrior(0.3, 1.0), 1.0, VampConfig(max_iters=1, estimate_sigma2=False))
    assert not fit.converged and fit.iters_used == 1


def test_repeatable():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((50, 12))
    y = A[:, 0] * 2 + rng.standard_normal(50)
    a = vamp_fit(y, A, SpikeSlabPrior(0.3, 1.0), 1.0)
    b = vamp_fit(y, A, SpikeSlabPrior(0.3, 1.0), 1.0)
    assert np.array_equal(a.mean, b.mean) and a.sigma2_hat == b.sigma2_hat


def test_summary_ranges():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((25, 40))
    y = A[:, :3] @ np.r_[1.0, -2.0, 1.5] + rng.standard_normal(25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = vamp_fit(y, A, SpikeSlabPrior(0.1, 1.0), 1.0, VampConfig(damping=0.5))
    assert np.all(fit.variances >= 0)
    assert np.all((fit.inclusion_probs >= 0) & (fit.inclusion_probs <= 1))
    assert fit.sigma2_hat > 0


def test_bad_inputs():
    with pytest.raises(InvalidVariance):
        vamp_fit(np.zeros(3), np.eye(3), SpikeSlabPrior(0.5, 1.0), 0.0)
    for kw in (dict(damping=0.0), dict(damping=1.5), dict(tol=0.0), dict(max_iters=0)):
        with pytest.raises(ConfigError):
            VampConfig(**kw)
