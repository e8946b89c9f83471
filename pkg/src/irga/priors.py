"""Prior families and the scalar spike-and-slab denoiser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InvalidVariance


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Independent ``lam * N(0, psi) + (1 - lam) * delta_0`` on every coordinate."""

    lam: float
    psi: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"inclusion probability must lie in (0, 1), got {self.lam}")
        if not self.psi > 0.0:
            raise ConfigError(f"slab variance must be positive, got {self.psi}")

    @property
    def prior_log_odds(self) -> float:
        return float(np.log(self.lam) - np.log1p(-self.lam))


@dataclass(frozen=True)
class GPrior:
    """Zellner prior ``beta_g | g ~ N(0, sigma2 * g_n * (X_g^T X_g)^{-1})``.

    ``inclusion`` is the independent prior inclusion probability defining
    ``pr(gamma)``; 1/2 gives the uniform prior over subsets.
    """

    g_n: float
    inclusion: float = 0.5

    def __post_init__(self):
        if not self.g_n > 0.0:
            raise ConfigError(f"g_n must be positive, got {self.g_n}")
        if not 0.0 < self.inclusion < 1.0:
            raise ConfigError(f"inclusion must lie in (0, 1), got {self.inclusion}")


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ConfigError(f"covariance shape {cov.shape} does not match mean {mean.shape}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ConfigError("prior covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ConfigError("prior covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def isotropic(cls, p: int, variance: float, mean: float = 0.0) -> "GaussianPrior":
        return cls(np.full(p, float(mean)), float(variance) * np.eye(p))


def spike_slab_log_odds(r, tau, prior: SpikeSlabPrior, psi=None):
    """Posterior log-odds of inclusion for ``r ~ N(alpha, tau)``.

    Also returns the slab-component posterior mean and variance. ``psi`` may
    override the prior's slab variance with a per-coordinate array.
    """
    r = np.asarray(r, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise InvalidVariance("pseudo-noise variance must be positive")
    psi = prior.psi if psi is None else np.asarray(psi, dtype=float)
    total = psi + tau
    # log N(r|0, psi+tau) - log N(r|0, tau), arranged to avoid cancellation
    log_bf = 0.5 * (np.log(tau) - np.log(total)) + 0.5 * r**2 * psi / (tau * total)
    log_odds = prior.prior_log_odds + log_bf
    shrink = psi / total
    return log_odds, r * shrink, tau * shrink


def spike_slab_denoise(r, tau, prior: SpikeSlabPrior, psi=None):
    """Posterior mean, variance and inclusion probability of a scalar spike-and-slab
    coefficient observed through ``r ~ N(alpha, tau)``. Vectorised over ``r``/``tau``.
    """
    log_odds, slab_mean, slab_var = spike_slab_log_odds(r, tau, prior, psi)
    pi = expit(log_odds)
    mean = pi * slab_mean
    var = pi * slab_var + pi * (1.0 - pi) * slab_mean**2
    return mean, var, pi
