"""Reference samplers used to validate the approximations.

* :func:`gibbs_spike_slab`: systematic-scan Gibbs sampler for spike-and-slab
  linear regression with an optional gamma prior on the noise precision.
* :func:`mh_gp`: random-walk Metropolis-Hastings on the latent GP values with
  the regression coefficients integrated out.
* :func:`batch_means_se`: overlapping batch means standard errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, DimensionMismatch, InvalidVariance, TraceTooShort
from .gp import GpConfig, get_link, kernel_cholesky
from .priors import GaussianPrior, SpikeSlabPrior

_CHUNK = 1000


@dataclass(frozen=True)
class McmcConfig:
    burnin: int = 10_000
    recorded: int = 90_000
    seed: int = 0
    rw_step: float = 0.1
    batch_length: Optional[int] = None

    def __post_init__(self):
        if self.burnin < 0:
            raise ConfigError("burnin must be nonnegative")
        if self.recorded < 1:
            raise ConfigError("recorded must be at least 1")
        if not self.rw_step > 0:
            raise ConfigError("rw_step must be positive")
        if self.batch_length is not None and self.batch_length < 1:
            raise ConfigError("batch_length must be at least 1")


def batch_means_se(trace, batch_length: Optional[int] = None):
    """Overlapping batch means standard error of the mean of ``trace``.

    A 2-d trace is treated column by column. The default batch length is
    ``floor(sqrt(N))``.
    """
    x = np.asarray(trace, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    N = x.shape[0]
    b = int(np.floor(np.sqrt(N))) if batch_length is None else int(batch_length)
    if b < 1 or N < 2 * b:
        raise TraceTooShort(f"trace of length {N} is too short for batch length {b}")
    x = x - x[0]
    cs = np.vstack([np.zeros(x.shape[1]), np.cumsum(x, axis=0)])
    window = (cs[b:] - cs[:-b]) / b
    dev = window - cs[-1] / N
    var = N * b / ((N - b) * (N - b + 1)) * np.sum(dev * dev, axis=0)
    se = np.sqrt(var / N)
    return float(se[0]) if squeeze else se


@numba.njit(cache=True)
def _gibbs_chunk(G, b, yy, n, theta, c, sigma2, lam_logit, psi, unif, normal, gam, fix_sigma2,
                 a_post, rate0, rec_ind, rec_rb, rec_theta, rec_s2, start):
    r = theta.shape[0]
    for s in range(unif.shape[0]):
        for j in range(r):
            Gjj = G[j, j]
            resid_j = b[j] - (c[j] - Gjj * theta[j])
            prec = Gjj / sigma2 + 1.0 / psi
            mu = (resid_j / sigma2) / prec
            lo = lam_logit - 0.5 * np.log(psi * prec) + 0.5 * mu * mu * prec
            pj = 1.0 / (1.0 + np.exp(-lo))
            if unif[s, j] < pj:
                new = mu + normal[s, j] / np.sqrt(prec)
                ind = 1
            else:
                new = 0.0
                ind = 0
            delta = new - theta[j]
            if delta != 0.0:
                for k in range(r):
                    c[k] += G[k, j] * delta
                theta[j] = new
            row = start + s
            if row >= 0:
                rec_ind[row, j] = ind
                rec_rb[row, j] = pj
        if not fix_sigma2:
            sse = yy - 2.0 * np.dot(b, theta) + np.dot(theta, c)
            if sse < 0.0:
                sse = 0.0
            sigma2 = (rate0 + 0.5 * sse) / gam[s]
        row = start + s
        if row >= 0:
            for k in range(r):
                rec_theta[row, k] = theta[k]
            rec_s2[row] = sigma2
    return sigma2


@dataclass
class GibbsResult:
    inclusion_probs: np.ndarray  # indicator frequencies
    rao_blackwell_probs: np.ndarray
    theta_mean: np.ndarray
    sigma2_trace: np.ndarray
    indicator_trace: np.ndarray  # (recorded, r) int8
    se: np.ndarray  # batch-means SE of each indicator frequency

    @property
    def mean_se(self) -> float:
        return float(np.mean(self.se))


def gibbs_spike_slab(
    y: np.ndarray,
    A: np.ndarray,
    prior: SpikeSlabPrior,
    config: McmcConfig,
    sigma2: Optional[float] = None,
    sigma2_shape: float = 1.0,
    sigma2_rate: float = 1.0,
) -> GibbsResult:
    """Spike-and-slab Gibbs sampler for ``y ~ N(A theta, sigma2 I)``.

    Each coordinate's indicator is drawn with ``theta_j`` integrated out, then
    ``theta_j`` from its conditional. With ``sigma2=None`` the noise precision
    has a ``Ga(sigma2_shape, sigma2_rate)`` prior and is resampled every sweep.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != y.size:
        raise DimensionMismatch(f"A has {A.shape[0]} rows, y has {y.size}")
    if sigma2 is not None and not sigma2 > 0:
        raise InvalidVariance(f"sigma2 must be positive, got {sigma2}")
    n, r = A.shape
    G = np.ascontiguousarray(A.T @ A)
    b = A.T @ y
    yy = float(y @ y)
    fix = sigma2 is not None
    s2 = float(sigma2) if fix else max(yy / n, 1e-8)
    theta = np.zeros(r)
    c = np.zeros(r)
    a_post = sigma2_shape + 0.5 * n
    total = config.burnin + config.recorded
    rec_ind = np.zeros((config.recorded, r), dtype=np.int8)
    rec_rb = np.zeros((config.recorded, r))
    rec_theta = np.zeros((config.recorded, r))
    rec_s2 = np.zeros(config.recorded)
    rng = np.random.default_rng(config.seed)
    for start in range(0, total, _CHUNK):
        size = min(_CHUNK, total - start)
        unif = rng.random((size, r))
        normal = rng.standard_normal((size, r))
        gam = rng.standard_gamma(a_post, size)
        s2 = _gibbs_chunk(G, b, yy, n, theta, c, s2, prior.prior_log_odds, prior.psi, unif, normal, gam, fix,
                          a_post, sigma2_rate, rec_ind, rec_rb, rec_theta, rec_s2, start - config.burnin)
    freq = rec_ind.mean(axis=0)
    if config.recorded >= 2:
        bl = config.batch_length
        try:
            se = batch_means_se(rec_ind.astype(float), bl)
        except TraceTooShort:
            se = np.full(r, np.nan)
    else:
        se = np.full(r, np.nan)
    return GibbsResult(freq, rec_rb.mean(axis=0), rec_theta.mean(axis=0), rec_s2, rec_ind, np.atleast_1d(se))


@dataclass
class MhResult:
    beta_mean_trace: np.ndarray  # (recorded, p) conditional means of beta given F
    beta_cond_cov: np.ndarray  # (p, p), the same for every F
    F_samples: np.ndarray  # thinned recorded F draws
    acceptance_rate: float
    beta_se: np.ndarray

    def beta_mean(self) -> np.ndarray:
        return self.beta_mean_trace.mean(axis=0)

    def beta_sd(self) -> np.ndarray:
        return np.sqrt(self.beta_mean_trace.var(axis=0) + np.diag(self.beta_cond_cov))

    def beta_density(self, j: int, grid: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Rao-Blackwellised marginal density of ``beta_j`` on ``grid``."""
        grid = np.asarray(grid, dtype=float)
        sd = np.sqrt(self.beta_cond_cov[j, j])
        means = self.beta_mean_trace[:, j]
        out = np.zeros(grid.size)
        for s in range(0, means.size, chunk):
            z = (grid[None, :] - means[s:s + chunk, None]) / sd
            out += np.exp(-0.5 * z * z).sum(axis=0)
        return out / (means.size * sd * np.sqrt(2.0 * np.pi))


def mh_gp(
    y: np.ndarray,
    X: np.ndarray,
    gp_config: GpConfig,
    config: McmcConfig,
    beta_prior: GaussianPrior,
    sigma2: float,
    f_thin: int = 100,
) -> MhResult:
    """Random-walk Metropolis-Hastings for ``y = X beta + g(F) + eps`` with ``beta`` integrated out.

    The chain runs on whitened latents ``u`` with ``F = L u`` (``L`` the kernel
    Cholesky factor), so a spherical step in ``u`` has covariance
    ``rw_step^2 K`` in ``F``.
    """
    if not sigma2 > 0:
        raise InvalidVariance(f"sigma2 must be positive, got {sigma2}")
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim == 2 and X.shape[0] != y.size:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {y.size}")
    n, p = X.shape
    if beta_prior.mean.size != p:
        raise DimensionMismatch("beta prior does not match X")
    if gp_config.features.shape[0] != n:
        raise DimensionMismatch("GP features do not match y")
    link = get_link(gp_config.link)
    _, Lk = kernel_cholesky(gp_config)
    m0, V0 = beta_prior.mean, beta_prior.covariance
    Sigma_y = sigma2 * np.eye(n) + X @ V0 @ X.T
    Ly = np.linalg.cholesky(Sigma_y)
    W = solve_triangular(Ly, np.eye(n), lower=True)  # Ly^{-1}
    base = W @ (y - X @ m0)
    # beta | F, y: mean m0 + gain @ (y - X m0 - g(F)), fixed covariance
    gain = (W @ X @ V0).T @ W
    cond_cov = V0 - (W @ X @ V0).T @ (W @ X @ V0)
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    resid0 = y - X @ m0

    def log_target(u):
        e = base - W @ link.g(Lk @ u)
        return -0.5 * (e @ e) - 0.5 * (u @ u)

    rng = np.random.default_rng(config.seed)
    u = np.zeros(n)
    lp = log_target(u)
    total = config.burnin + config.recorded
    beta_trace = np.empty((config.recorded, p))
    F_keep = []
    accepted = 0
    step = config.rw_step
    for start in range(0, total, _CHUNK):
        size = min(_CHUNK, total - start)
        eps = rng.standard_normal((size, n))
        logu = np.log(rng.random(size))
        for s in range(size):
            prop = u + step * eps[s]
            lp_prop = log_target(prop)
            if logu[s] < lp_prop - lp:
                u, lp = prop, lp_prop
                accepted += 1
            row = start + s - config.burnin
            if row >= 0:
                F = Lk @ u
                beta_trace[row] = m0 + gain @ (resid0 - link.g(F))
                if row % f_thin == 0:
                    F_keep.append(F)
    try:
        se = batch_means_se(beta_trace, config.batch_length)
    except TraceTooShort:
        se = np.full(p, np.nan)
    return MhResult(beta_trace, cond_cov, np.array(F_keep), accepted / total, np.atleast_1d(se))
