"""Accuracy diagnostics for the Gaussian nuisance approximation.

Monte Carlo KL divergences, the concentration and correlation functionals
``m1``/``m2`` of the nuisance posterior, the bound terms ``delta1``/``delta2``
on the expected KL of the scalar-covariance approximation, and end-to-end
empirical checks of the KL bounds and of selection consistency.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .algorithm import NuisanceEstimator, irga_fit
from .errors import ConfigError, DegenerateCovariance, UnboundedRatio
from .exact import BetaPosterior, beta_posterior, spike_slab_enumeration
from .mixtures import GaussianMixture, SubsetMixture
from .priors import GPrior, SpikeSlabPrior
from .rotation import Dataset, compute_rotation, rotate
from .synthetic import ScenarioSpec, consistency_sequence

_LOG_2PI = np.log(2.0 * np.pi)


def kl_mixture_mc(P, Q, n_mc: int = 100_000, seed: int = 0, chunk: int = 20_000) -> tuple[float, float]:
    """Monte Carlo ``KL(P || Q)`` from draws of ``P``; returns the estimate and its standard error.

    ``P`` needs ``sample(size, rng)`` and ``logpdf``; ``Q`` needs ``logpdf``.
    """
    if n_mc < 2:
        raise ConfigError("n_mc must be at least 2")
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    shift = None
    while done < n_mc:
        size = min(chunk, n_mc - done)
        x = P.sample(size, rng)
        ratio = P.logpdf(x) - Q.logpdf(x)
        if not np.all(np.isfinite(ratio)):
            raise UnboundedRatio("log density ratio is not finite on a draw from P")
        if shift is None:
            shift = float(ratio[0])
        d = ratio - shift
        total += d.sum()
        total_sq += (d * d).sum()
        done += size
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0) * n_mc / (n_mc - 1)
    return float(mean + shift), float(np.sqrt(var / n_mc))


def gaussian(mean, cov) -> GaussianMixture:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return GaussianMixture(np.zeros(1), mean[None], cov[None])


@dataclass
class ApproximationDiagnostics:
    m1: float
    m1_se: float
    m2: float
    Lambda: np.ndarray
    xi: np.ndarray
    Psi: np.ndarray
    delta1: Optional[float] = None
    delta2: Optional[float] = None
    kl_estimate: Optional[float] = None
    kl_se: Optional[float] = None

    @property
    def trace_LPsi(self) -> float:
        return float(np.sum(self.Lambda * self.Psi.T))


def m2_value(Lambda, Psi) -> float:
    LP = np.asarray(Lambda, dtype=float) @ np.asarray(Psi, dtype=float)
    t = float(np.trace(LP))
    if not t > 0:
        raise DegenerateCovariance(f"tr(Lambda Psi) must be positive, got {t}")
    return float(np.sum(LP * LP.T) / t**2)


def compute_m1_m2(
    Lambda: np.ndarray,
    Psi: np.ndarray,
    alpha_sampler: Callable[[int, np.random.Generator], np.ndarray],
    xi: np.ndarray,
    n_mc: int = 10_000,
    seed: int = 0,
) -> ApproximationDiagnostics:
    """``m1`` by Monte Carlo over ``alpha_sampler`` draws and ``m2`` in closed form."""
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    xi = np.asarray(xi, dtype=float)
    if n_mc < 1000:
        raise ConfigError("n_mc must be at least 1000")
    m2 = m2_value(Lambda, Psi)
    t = float(np.sum(Lambda * Psi.T))
    draws = alpha_sampler(n_mc, np.random.default_rng(seed)) - xi
    quad = np.einsum("ij,jk,ik->i", draws, Lambda, draws)
    dev = np.abs(quad / t - 1.0)
    return ApproximationDiagnostics(
        m1=float(dev.mean()), m1_se=float(dev.std(ddof=1) / np.sqrt(n_mc)), m2=m2,
        Lambda=Lambda, xi=xi, Psi=Psi,
    )


def compute_delta_bound(diag: ApproximationDiagnostics, sigma2: float, p: int, xi_hat, Psi_hat) -> tuple[float, float]:
    """Bound terms for the expected KL of ``N(R^T Z xi_hat, tr(Lambda Psi_hat) I_p)``."""
    if not sigma2 > 0:
        raise ConfigError("sigma2 must be positive")
    t = diag.trace_LPsi
    t_hat = float(np.sum(diag.Lambda * np.atleast_2d(Psi_hat).T))
    delta1 = 3.0 * p * (
        diag.m1 * np.log1p(t / sigma2)
        + diag.m2 ** 0.25
        + diag.m2 ** 0.5 * (1.0 + 3.0 * t / sigma2) ** (p / 4.0)
    )
    d = np.asarray(diag.xi, dtype=float) - np.asarray(xi_hat, dtype=float)
    delta2 = p * float(d @ diag.Lambda @ d) / (2.0 * sigma2) + p / (2.0 * sigma2) * (np.sqrt(t) - np.sqrt(t_hat)) ** 2
    return float(delta1), float(delta2)


# Product-form nuisance law used by the scalar-covariance check


@dataclass(frozen=True)
class ProductLaw:
    """Independent ``alpha_j ~ pi_j N(m_j, v_j) + (1 - pi_j) delta_0``."""

    pi: np.ndarray
    m: np.ndarray
    v: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.pi * self.m

    @property
    def variances(self) -> np.ndarray:
        return self.pi * self.v + self.pi * (1.0 - self.pi) * self.m**2

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        on = rng.random((size, self.pi.size)) < self.pi
        return np.where(on, self.m + np.sqrt(self.v) * rng.standard_normal((size, self.pi.size)), 0.0)

    def projected_mixture(self, B: np.ndarray, sigma2: float) -> GaussianMixture:
        """Exact law of ``B alpha + N(0, sigma2 I)`` as a Gaussian mixture."""
        unc = np.flatnonzero(self.pi < 1.0)
        sure = np.flatnonzero(self.pi >= 1.0)
        p = B.shape[0]
        base_mean = B[:, sure] @ self.m[sure]
        base_cov = (B[:, sure] * self.v[sure]) @ B[:, sure].T + sigma2 * np.eye(p)
        states = np.array(list(itertools.product((0, 1), repeat=unc.size)), dtype=bool).reshape(-1, unc.size)
        pu = self.pi[unc]
        logw = (np.where(states, np.log(pu), np.log1p(-pu))).sum(axis=1)
        Bu = B[:, unc]
        means = base_mean + (states * self.m[unc]) @ Bu.T
        outer = np.einsum("ij,kj->jik", Bu, Bu) * self.v[unc][:, None, None]  # (u, p, p)
        covs = base_cov + np.einsum("su,uij->sij", states.astype(float), outer)
        return GaussianMixture(logw, means, covs)


@dataclass(frozen=True)
class ScalarCovarianceConfig:
    p: int
    q: int = 50
    n_uncertain: int = 8
    sigma2: float = 1.0
    n_draws: int = 50
    n_mc: int = 20_000
    xi_shift: float = 0.0
    psi_scale: float = 1.0
    seed: int = 0


@dataclass
class ScalarCovarianceReport:
    config: ScalarCovarianceConfig
    kl_mean: float
    kl_se: float
    delta1: float
    delta2: float
    m1: float
    m1_se: float
    m2: float
    kl_draws: np.ndarray = field(repr=False, default=None)

    @property
    def holds(self) -> bool:
        return self.kl_mean <= self.delta1 + self.delta2 + 3.0 * self.kl_se


def product_law(q: int, n_uncertain: int, rng: np.random.Generator) -> ProductLaw:
    pi = np.ones(q)
    pi[:n_uncertain] = rng.uniform(0.1, 0.9, n_uncertain)
    m = rng.normal(0.0, 1.0, q) * np.where(np.arange(q) < n_uncertain, 1.5, 0.3)
    v = rng.uniform(0.01, 0.1, q)
    return ProductLaw(pi, m, v)


def scalar_covariance_check(config: ScalarCovarianceConfig) -> ScalarCovarianceReport:
    """Average KL of the scalar-covariance Gaussian approximation over draws of ``R^T Z``.

    Rows of ``Z`` are ``N(0, I_q)``, so ``R^T Z`` has i.i.d. standard normal
    entries. The conditional law of ``alpha`` is a fixed product-form law.
    """
    rng = np.random.default_rng(config.seed)
    law = product_law(config.q, config.n_uncertain, rng)
    Lambda = np.eye(config.q)
    xi, Psi = law.mean, np.diag(law.variances)
    xi_hat = xi + config.xi_shift * rng.standard_normal(config.q) * np.sqrt(law.variances)
    Psi_hat = config.psi_scale * Psi
    diag = compute_m1_m2(Lambda, Psi, law.sample, xi, n_mc=20_000, seed=config.seed + 1)
    d1, d2 = compute_delta_bound(diag, config.sigma2, config.p, xi_hat, Psi_hat)
    t_hat = float(np.trace(Psi_hat))
    kls = np.empty(config.n_draws)
    for i in range(config.n_draws):
        B = rng.standard_normal((config.p, config.q))
        P = law.projected_mixture(B, config.sigma2)
        Q = gaussian(B @ xi_hat, (t_hat + config.sigma2) * np.eye(config.p))
        kls[i], _ = kl_mixture_mc(P, Q, config.n_mc, seed=config.seed * 1000 + i)
    se = float(kls.std(ddof=1) / np.sqrt(config.n_draws))
    diag.delta1, diag.delta2 = d1, d2
    diag.kl_estimate, diag.kl_se = float(kls.mean()), se
    return ScalarCovarianceReport(config, float(kls.mean()), se, d1, d2, diag.m1, diag.m1_se, diag.m2, kls)


# Bound on the beta posterior error


@dataclass(frozen=True)
class PosteriorKLConfig:
    """Fixed design with spike-and-slab (or Gaussian) ``beta`` and ``alpha``.

    ``nuisance="gaussian"`` gives ``alpha ~ N(0, psi I)`` so that the nuisance
    posterior is Gaussian.
    """

    n: int = 12
    p: int = 1
    q: int = 8
    lam: float = 0.25
    psi: float = 1.0
    sigma2: float = 1.0
    z_scale: float = 1.0
    nuisance: str = "spike_slab"
    n_outer: int = 500
    n_inner: int = 200
    n_kl: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.nuisance not in ("spike_slab", "gaussian"):
            raise ConfigError("nuisance must be 'spike_slab' or 'gaussian'")
        if self.q > 12:
            raise ConfigError("exact nuisance posterior needs q <= 12")


@dataclass
class PosteriorKLReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.lhs_se, self.rhs_se))

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * self.combined_se


def exact_beta_mixture(Ry, RX, log_w, mus, Sigmas, sigma2, prior: SpikeSlabPrior) -> SubsetMixture:
    """Exact posterior of spike-and-slab ``beta`` when ``Ry - RX beta`` is a Gaussian mixture.

    Component ``k`` of the nuisance is ``N(mus[k], Sigmas[k] + sigma2 I)``.
    Computed directly in the ``p``-dimensional observation space.
    """
    Ry = np.asarray(Ry, dtype=float)
    RX = np.atleast_2d(np.asarray(RX, dtype=float))
    m, p = RX.shape
    K = mus.shape[0]
    C = Sigmas + sigma2 * np.eye(m)
    resid = Ry - mus  # (K, m)
    out_w, out_masks, out_means, out_covs = [], [], [], []
    for k in range(p + 1):
        for s in itertools.combinations(range(p), k):
            s = list(s)
            Xs = RX[:, s]
            M = C + prior.psi * Xs @ Xs.T
            L = np.linalg.cholesky(M)
            z = np.linalg.solve(L, resid[..., None])[..., 0]
            ll = -0.5 * (m * _LOG_2PI + 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1) + (z * z).sum(axis=1))
            out_w.append(log_w + ll + k * np.log(prior.lam) + (p - k) * np.log1p(-prior.lam))
            mask = np.zeros(p, dtype=bool)
            mask[s] = True
            out_masks.append(np.broadcast_to(mask, (K, p)))
            means = np.zeros((K, p))
            covs = np.zeros((K, p, p))
            if k:
                # beta_s | k ~ N(psi Xs^T M^{-1} resid, psi I - psi^2 Xs^T M^{-1} Xs)
                Minv_X = np.linalg.solve(M, np.broadcast_to(Xs, (K, m, k)))
                Minv_r = np.linalg.solve(M, resid[..., None])[..., 0]
                means[:, s] = prior.psi * Minv_r @ Xs
                block = prior.psi * np.eye(k) - prior.psi**2 * np.einsum("ji,kjl->kil", Xs, Minv_X)
                covs[np.ix_(np.arange(K), s, s)] = 0.5 * (block + block.transpose(0, 2, 1))
            out_means.append(means)
            out_covs.append(covs)
    return SubsetMixture(np.concatenate(out_w), np.vstack(out_masks), np.vstack(out_means), np.vstack(out_covs))


def _nuisance_components(rot, config: PosteriorKLConfig):
    """Exact law of ``R^T Z alpha | S^T y`` as (log weights, means, covariances)."""
    p = rot.RX.shape[1]
    if config.nuisance == "gaussian":
        V = config.psi * np.eye(config.q)
        gain = np.linalg.solve(rot.SZ @ V @ rot.SZ.T + config.sigma2 * np.eye(rot.Sy.size), rot.SZ @ V).T
        m = gain @ rot.Sy
        C = V - gain @ rot.SZ @ V
        return np.zeros(1), (rot.RZ @ m)[None], (rot.RZ @ C @ rot.RZ.T)[None]
    post = spike_slab_enumeration(rot.Sy, rot.SZ, SpikeSlabPrior(config.lam, config.psi), config.sigma2)
    log_w, mus, Sigmas = [], [], []
    for term in post.models:
        log_w.append(term.log_weight)
        idx = list(term.gamma)
        if idx:
            Bs = rot.RZ[:, idx]
            mus.append(Bs @ term.cond_mean)
            Sigmas.append(Bs @ term.cond_cov @ Bs.T)
        else:
            mus.append(np.zeros(p))
            Sigmas.append(np.zeros((p, p)))
    return np.array(log_w), np.array(mus), np.array(Sigmas)


def posterior_kl_check(
    config: PosteriorKLConfig,
    estimator: Optional[NuisanceEstimator] = None,
    n_replicates: int = 20,
) -> list[PosteriorKLReport]:
    """Compare the expected KL between exact and approximate ``beta`` posteriors with
    the KL between the exact and Gaussian-approximated projected nuisance laws.

    Each replicate draws ``(beta, alpha, y)`` from the prior predictive, fixes
    ``S^T y``, and averages the posterior KL over ``R^T y | S^T y`` (outer
    draws) with an inner Monte Carlo KL per outer draw.
    """
    if estimator is None:
        estimator = (
            NuisanceEstimator.exact() if config.nuisance == "spike_slab"
            else NuisanceEstimator.gaussian(config.psi * np.eye(config.n))
        )
    rng = np.random.default_rng(config.seed)
    n, p, q = config.n, config.p, config.q
    X = rng.standard_normal((n, p))
    Z = config.z_scale * rng.standard_normal((n, q))
    prior = SpikeSlabPrior(config.lam, config.psi)
    split = compute_rotation(X)
    reports = []
    for rep in range(n_replicates):
        beta = np.where(rng.random(p) < config.lam, rng.normal(0.0, np.sqrt(config.psi), p), 0.0)
        if config.nuisance == "gaussian":
            alpha = rng.normal(0.0, np.sqrt(config.psi), q)
        else:
            alpha = np.where(rng.random(q) < config.lam, rng.normal(0.0, np.sqrt(config.psi), q), 0.0)
        y = X @ beta + Z @ alpha + np.sqrt(config.sigma2) * rng.standard_normal(n)
        est = estimator
        if est.kind == "gaussian":
            est = NuisanceEstimator.gaussian(Z @ (config.psi * np.eye(q)) @ Z.T)
        data = Dataset(y, X, Z, config.sigma2)
        rot = rotate(data, split)
        summary = irga_fit(data, prior, est).summary
        log_w, mus, Sigmas = _nuisance_components(rot, config)
        # right side: KL between the convolved nuisance laws
        P = GaussianMixture(log_w, mus, Sigmas + config.sigma2 * np.eye(p))
        Q = gaussian(summary.mu_hat, summary.Sigma_hat + config.sigma2 * np.eye(p))
        rhs, rhs_se = kl_mixture_mc(P, Q, config.n_kl, seed=int(rng.integers(2**31)))
        # left side: E over R^T y | S^T y of KL(exact beta posterior || approximation)
        sub = np.random.default_rng(rng.integers(2**31))
        inner = np.empty(config.n_outer)
        for o in range(config.n_outer):
            b = np.where(sub.random(p) < config.lam, sub.normal(0.0, np.sqrt(config.psi), p), 0.0)
            Ry = rot.RX @ b + P.sample(1, sub)[0]
            exact = exact_beta_mixture(Ry, rot.RX, log_w, mus, Sigmas, config.sigma2, prior)
            approx = beta_posterior(Ry, rot.RX, summary, config.sigma2, prior).as_mixture()
            draws = exact.sample(config.n_inner, sub)
            ratio = exact.logpdf(draws) - approx.logpdf(draws)
            if not np.all(np.isfinite(ratio)):
                raise UnboundedRatio("posterior log density ratio is not finite")
            inner[o] = ratio.mean()
        lhs = float(inner.mean())
        lhs_se = float(inner.std(ddof=1) / np.sqrt(config.n_outer))
        reports.append(PosteriorKLReport(lhs, lhs_se, rhs, rhs_se))
    return reports


# Selection consistency under the g-prior


@dataclass(frozen=True)
class ConsistencyConfig:
    beta: tuple = (1.0, -1.0, 0.5, 0.0)
    q: int = 20
    alpha_nonzero: int = 3
    n_values: tuple = (100, 200, 400, 800, 1600)
    n_seeds: int = 20
    rho: float = 0.3
    sigma2: float = 1.0
    lam: float = 0.3
    psi: float = 1.0
    seed: int = 0


def model_probability(post: BetaPosterior, subset: Sequence[int]) -> float:
    target = tuple(sorted(int(j) for j in subset))
    for term in post.models:
        if term.gamma == target:
            return float(np.exp(term.log_weight))
    return 0.0


def consistency_trend(config: ConsistencyConfig, estimator: Optional[NuisanceEstimator] = None) -> np.ndarray:
    """Approximate ``pr(gamma = gamma0 | y)`` with ``g_n = n``; array of shape (n_seeds, len(n_values))."""
    estimator = estimator or NuisanceEstimator.vamp(alpha_prior=SpikeSlabPrior(config.lam, config.psi))
    p = len(config.beta)
    out = np.empty((config.n_seeds, len(config.n_values)))
    for s in range(config.n_seeds):
        rng = np.random.default_rng([config.seed, s])
        alpha = np.zeros(config.q)
        idx = rng.choice(config.q, config.alpha_nonzero, replace=False)
        alpha[idx] = rng.choice([-1.0, 1.0], config.alpha_nonzero) * rng.uniform(1.0, 2.0, config.alpha_nonzero)
        spec = ScenarioSpec(
            "consistency", n=max(config.n_values), p=p, q=config.q, rho=config.rho,
            beta=config.beta, alpha=tuple(alpha), sigma2=config.sigma2, seed=int(rng.integers(2**31)),
        )
        for i, (data, truth) in enumerate(consistency_sequence(spec, config.n_values)):
            res = irga_fit(data, GPrior(g_n=float(data.n)), estimator)
            out[s, i] = model_probability(res.posterior, truth.gamma)
    return out
