"""Gaussian-process nuisance ``eta_i = g(f(z_i))`` with ``f ~ GP(0, k)``.

On the complement submodel ``S^T y ~ N(S^T G(F), sigma2 I)`` the posterior of
``F = f(z_{1:n})`` is approximated by a Laplace fit found with Gauss-Newton:
``G`` is linearised around the current iterate, the resulting Gaussian model
is solved exactly, and a backtracking line search on the exact log posterior
keeps every accepted step non-decreasing.

For ``g(a) = a^2`` the point ``F = 0`` is a stationary point of the exact log
posterior (the linearised design vanishes there), so the fit is restarted from
a few seeded prior draws and the best mode is kept. Only one mode is captured;
``F`` and ``-F`` are equally good under the square link.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from .errors import ConfigError, DimensionMismatch, InvalidVariance, NonConvergence, SingularKernel
from .exact import NuisanceSummary


@dataclass(frozen=True)
class Link:
    name: str
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]


def _square(a):
    return a * a


def _dsquare(a):
    return 2.0 * a


def _identity(a):
    return a


def _one(a):
    return np.ones_like(a)


LINKS = {
    "square": Link("square", _square, _dsquare),
    "identity": Link("identity", _identity, _one),
}


def get_link(link: Union[str, Link]) -> Link:
    if isinstance(link, Link):
        return link
    try:
        return LINKS[link]
    except KeyError:
        raise ConfigError(f"unknown link {link!r}; choose from {sorted(LINKS)}") from None


@dataclass(frozen=True)
class GpConfig:
    features: np.ndarray
    lengthscale_sq: float = 10.0
    link: Union[str, Link] = "square"
    jitter: float = 1e-8
    gn_max_iters: int = 100
    gn_tol: float = 1e-8
    n_samples: int = 4096
    n_restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        object.__setattr__(self, "features", feats)
        if not self.lengthscale_sq > 0:
            raise ConfigError("lengthscale_sq must be positive")
        if not self.jitter > 0:
            raise ConfigError("jitter must be positive")
        if self.n_samples < 100:
            raise ConfigError("n_samples must be at least 100")
        get_link(self.link)


def kernel_matrix(features: np.ndarray, lengthscale_sq: float) -> np.ndarray:
    """Squared-exponential covariance ``exp(-|z_i - z_j|^2 / lengthscale_sq)``."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 1:
        feats = feats[:, None]
    return np.exp(-cdist(feats, feats, "sqeuclidean") / lengthscale_sq)


def kernel_cholesky(config: GpConfig) -> tuple[np.ndarray, np.ndarray]:
    K = kernel_matrix(config.features, config.lengthscale_sq)
    K[np.diag_indices_from(K)] += config.jitter
    try:
        return K, np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise SingularKernel("kernel matrix is not positive definite after jitter") from exc


@dataclass
class LaplaceFit:
    """Laplace approximation ``N(F_mode, (K^{-1} + J^T J / sigma2)^{-1})``.

    The precision is kept in factored form: ``kernel_chol`` factors the jittered
    kernel ``K`` and ``innov_chol`` factors ``J K J^T + sigma2 I``, where ``J`` is
    the linearised design at the mode.
    """

    F_mode: np.ndarray
    K: np.ndarray
    kernel_chol: np.ndarray
    jacobian: np.ndarray
    innov_chol: np.ndarray
    sigma2: float
    converged: bool
    iters: int
    log_post: float
    link: Link = field(repr=False, default=LINKS["square"])

    def _gain(self, v: np.ndarray) -> np.ndarray:
        """``K J^T (J K J^T + sigma2 I)^{-1} v``."""
        return self.K @ (self.jacobian.T @ cho_solve((self.innov_chol, True), v))

    def covariance(self) -> np.ndarray:
        B = solve_triangular(self.innov_chol, self.jacobian @ self.K, lower=True)
        cov = self.K - B.T @ B
        return 0.5 * (cov + cov.T)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draws (one per row) by conditioning prior draws on simulated data."""
        n = self.F_mode.size
        m = self.jacobian.shape[0]
        f = self.kernel_chol @ rng.standard_normal((n, size))
        e = np.sqrt(self.sigma2) * rng.standard_normal((m, size))
        draws = self.F_mode[:, None] + f - self._gain(self.jacobian @ f + e)
        return draws.T


def _log_post(Sy, S, F, w, link, sigma2):
    resid = Sy - S.T @ link.g(F)
    return -0.5 * (resid @ resid) / sigma2 - 0.5 * (F @ w)


def _gauss_newton(Sy, S, K, F0, w0, link, sigma2, config):
    F, w = F0, w0
    lp = _log_post(Sy, S, F, w, link, sigma2)
    m = Sy.size
    converged = False
    it = 0
    for it in range(1, config.gn_max_iters + 1):
        D = link.dg(F)
        J = S.T * D[None, :]
        target = Sy - S.T @ (link.g(F) - D * F)
        M = J @ K @ J.T
        M[np.diag_indices(m)] += sigma2
        try:
            Lm = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise SingularKernel("linearised innovation covariance is singular") from exc
        w_new = J.T @ cho_solve((Lm, True), target)
        F_new = K @ w_new
        step = 1.0
        accepted = False
        for _ in range(40):
            F_t = F + step * (F_new - F)
            w_t = w + step * (w_new - w)
            lp_t = _log_post(Sy, S, F_t, w_t, link, sigma2)
            if lp_t >= lp:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        change = np.linalg.norm(F_t - F) / max(np.linalg.norm(F_t), 1e-12)
        F, w, lp = F_t, w_t, lp_t
        if change < config.gn_tol:
            converged = True
            break
    return F, w, lp, converged, it


def gp_laplace_fit(Sy: np.ndarray, S: np.ndarray, config: GpConfig, sigma2: float) -> LaplaceFit:
    """Gauss-Newton Laplace approximation of ``F | S^T y``."""
    if not sigma2 > 0:
        raise InvalidVariance(f"sigma2 must be positive, got {sigma2}")
    Sy = np.asarray(Sy, dtype=float)
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if config.features.shape[0] != n or S.shape[1] != Sy.size:
        raise DimensionMismatch("features, S and S^T y disagree in dimension")
    link = get_link(config.link)
    K, Lk = kernel_cholesky(config)
    rng = np.random.default_rng(config.seed)
    starts = [np.zeros(n)] + [Lk @ rng.standard_normal(n) for _ in range(config.n_restarts)]
    best = None
    for F0 in starts:
        w0 = cho_solve((Lk, True), F0)
        res = _gauss_newton(Sy, S, K, F0, w0, link, sigma2, config)
        if best is None or res[2] > best[2]:
            best = res
    F, w, lp, converged, iters = best
    if not converged:
        warnings.warn("Gauss-Newton hit its iteration cap; returning the last iterate", NonConvergence)
    D = link.dg(F)
    J = S.T * D[None, :]
    M = J @ K @ J.T
    M[np.diag_indices(Sy.size)] += sigma2
    Lm = np.linalg.cholesky(M)
    return LaplaceFit(F, K, Lk, J, Lm, float(sigma2), converged, iters, float(lp), link)


def gp_nuisance_summary(fit: LaplaceFit, R: np.ndarray, config: GpConfig) -> NuisanceSummary:
    """Monte Carlo mean and covariance of ``R^T G(F)`` under the Laplace fit."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    draws = fit.sample(config.n_samples, rng)
    proj = fit.link.g(draws) @ np.asarray(R, dtype=float)
    mu = proj.mean(axis=0)
    Sigma = np.atleast_2d(np.cov(proj, rowvar=False))
    return NuisanceSummary(mu, Sigma)
