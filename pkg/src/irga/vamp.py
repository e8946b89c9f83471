"""Vector approximate message passing for ``y ~ N(A alpha, sigma2 I)`` with a
spike-and-slab prior on ``alpha``.

This is the SVD form of VAMP with scalar (isotropic) precisions, run on the
column-normalised design ``A D^{-1}`` (``D`` = column norms) with the slab
variance rescaled per coordinate to ``psi * d_j^2``. Without the rescaling a
single precision would hand every coordinate the same effective noise level
even when column norms differ. The SVD is computed once, after which each
iteration costs ``O(q min(m, q))``. Iterates in :class:`VampState` live in the
normalised coordinates ``D alpha``.

The noise variance can be re-estimated at every iteration by an EM step that
uses the current LMMSE belief and the gamma prior on the noise precision.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionMismatch, InvalidVariance, NonConvergence, NumericalDivergence
from .priors import SpikeSlabPrior, spike_slab_denoise

MIN_PRECISION = 1e-11


@dataclass(frozen=True)
class VampConfig:
    max_iters: int = 500
    tol: float = 1e-7
    damping: float = 1.0
    estimate_sigma2: bool = True
    sigma2_prior_shape: float = 1.0
    sigma2_prior_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0.0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not (self.sigma2_prior_shape > 0 and self.sigma2_prior_rate > 0):
            raise ConfigError("sigma2 prior shape and rate must be positive")


@dataclass
class VampState:
    r1: np.ndarray
    r2: np.ndarray
    gamma1: float
    gamma2: float
    x1hat: np.ndarray
    x2hat: np.ndarray
    eta1: float
    eta2: float
    sigma2: float
    var1: np.ndarray
    pi1: np.ndarray
    damping: float
    iteration: int = 0

    def copy(self) -> "VampState":
        return replace(
            self,
            r1=self.r1.copy(), r2=self.r2.copy(), x1hat=self.x1hat.copy(),
            x2hat=self.x2hat.copy(), var1=self.var1.copy(), pi1=self.pi1.copy(),
        )


@dataclass
class AlphaPosteriorSummary:
    mean: np.ndarray
    variances: np.ndarray
    inclusion_probs: np.ndarray
    sigma2_hat: float
    converged: bool
    iters_used: int
    state: Optional[VampState] = None
    lmmse_factors: Optional[tuple] = field(default=None, repr=False)

    def projected_covariance(self, B: np.ndarray) -> np.ndarray:
        """``B Psi B^T`` for the LMMSE-stage covariance ``Psi = (A^T A / sigma2 + gamma2 D^2)^{-1}``.

        This is the Gaussian belief of the linear step at the final iterate; unlike
        ``variances`` it keeps the posterior correlations induced by the design.
        """
        if self.lmmse_factors is None:
            raise ValueError("no LMMSE factors stored")
        V, inv_den, gamma2, scale = self.lmmse_factors
        Bs = np.atleast_2d(B) / scale
        BV = Bs @ V
        out = (BV * inv_den) @ BV.T + (Bs @ Bs.T - BV @ BV.T) / gamma2
        return 0.5 * (out + out.T)


class _Retry(Exception):
    pass


class VampSolver:
    """Holds the one-off SVD of the design and runs VAMP iterations."""

    def __init__(self, y: np.ndarray, A: np.ndarray, prior: SpikeSlabPrior, config: VampConfig):
        y = np.asarray(y, dtype=float)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != y.size:
            raise DimensionMismatch(f"design has {A.shape[0]} rows, response has {y.size}")
        if y.size < 1 or A.shape[1] < 1:
            raise DimensionMismatch("need at least one observation and one coefficient")
        self.prior = prior
        self.config = config
        self.m, self.q = A.shape
        norms = np.linalg.norm(A, axis=0)
        self.scale = np.where(norms > 0, norms, 1.0)
        self.psi = prior.psi * self.scale**2
        U, s, Vt = np.linalg.svd(A / self.scale, full_matrices=False)
        self.s = s
        self.d = s * s
        self.V = Vt.T
        self.Uty = U.T @ y
        self.resid_perp = max(float(y @ y - self.Uty @ self.Uty), 0.0)

    def initial_state(self, sigma2: float) -> VampState:
        q = self.q
        zeros = np.zeros(q)
        return VampState(
            r1=zeros.copy(), r2=zeros.copy(), gamma1=np.nan, gamma2=1.0 / float(np.mean(self.psi)),
            x1hat=zeros.copy(), x2hat=zeros.copy(), eta1=np.nan, eta2=np.nan,
            sigma2=float(sigma2), var1=self.prior.lam * self.psi,
            pi1=np.full(q, self.prior.lam), damping=self.config.damping,
        )

    def _combine(self, new_r, new_gamma, old_r, old_gamma, damping, clip):
        if not np.isfinite(new_gamma) or new_gamma <= 0.0:
            if not clip:
                raise _Retry
            # the extrinsic mean is undefined for a nonpositive precision; keep the old message
            new_gamma = MIN_PRECISION
            new_r = old_r if old_r is not None else np.zeros_like(new_r)
        new_gamma = max(new_gamma, MIN_PRECISION)
        if old_r is None or not np.isfinite(old_gamma) or damping >= 1.0:
            return new_r, new_gamma
        r = damping * new_r + (1.0 - damping) * old_r
        gamma = float(np.exp(damping * np.log(new_gamma) + (1.0 - damping) * np.log(old_gamma)))
        return r, gamma

    def _iterate(self, st: VampState, clip: bool) -> VampState:
        cfg = self.config
        st = st.copy()
        gw = 1.0 / st.sigma2
        # linear MMSE step
        Vtr = self.V.T @ st.r2
        denom = gw * self.d + st.gamma2
        coef = gw * self.s / denom * (self.Uty - self.s * Vtr)
        x2 = st.r2 + self.V @ coef
        k = self.d.size
        alpha2 = (st.gamma2 / self.q) * (np.sum(1.0 / denom) + (self.q - k) / st.gamma2)
        eta2 = st.gamma2 / alpha2
        gamma1_raw = eta2 - st.gamma2
        with np.errstate(divide="ignore", invalid="ignore"):
            r1_raw = (eta2 * x2 - st.gamma2 * st.r2) / gamma1_raw
        prev_r1 = st.r1 if st.iteration > 0 else None
        st.r1, st.gamma1 = self._combine(r1_raw, gamma1_raw, prev_r1, st.gamma1, st.damping, clip)
        st.x2hat, st.eta2 = x2, eta2
        if cfg.estimate_sigma2:
            fitted = self.Uty - self.s * (Vtr + coef)
            esse = fitted @ fitted + self.resid_perp + np.sum(self.d / denom)
            a, b = cfg.sigma2_prior_shape, cfg.sigma2_prior_rate
            st.sigma2 = float((b + 0.5 * esse) / max(a + 0.5 * self.m - 1.0, 1e-12))
        # separable denoising step
        tau1 = 1.0 / st.gamma1
        x1, var1, pi1 = spike_slab_denoise(st.r1, tau1, self.prior, self.psi)
        mean_var = float(np.mean(var1))
        eta1 = 1.0 / mean_var if mean_var > 0 else np.inf
        gamma2_raw = eta1 - st.gamma1
        with np.errstate(divide="ignore", invalid="ignore"):
            r2_raw = (eta1 * x1 - st.gamma1 * st.r1) / gamma2_raw
        st.r2, st.gamma2 = self._combine(r2_raw, gamma2_raw, st.r2, st.gamma2, st.damping, clip)
        st.x1hat, st.var1, st.pi1, st.eta1 = x1, var1, pi1, eta1
        st.iteration += 1
        return st

    def step(self, st: VampState) -> VampState:
        """One VAMP iteration with the clip-and-retry policy for negative precisions."""
        try:
            return self._iterate(st, clip=False)
        except _Retry:
            pass
        retry = st.copy()
        retry.damping = 0.5 * st.damping
        new = self._iterate(retry, clip=True)
        if not (np.all(np.isfinite(new.x1hat)) and np.isfinite(new.gamma1) and np.isfinite(new.gamma2)):
            raise NumericalDivergence("VAMP precisions stayed invalid after a damped retry; lower the damping")
        return new

    def run(self, sigma2_init: float) -> AlphaPosteriorSummary:
        cfg = self.config
        st = self.initial_state(sigma2_init)
        converged = False
        for _ in range(cfg.max_iters):
            prev = st.x1hat
            st = self.step(st)
            if not np.all(np.isfinite(st.x1hat)):
                raise NumericalDivergence("VAMP estimate became non-finite; lower the damping")
            change = np.linalg.norm(st.x1hat - prev) / max(np.linalg.norm(st.x1hat), 1e-12)
            if change < cfg.tol:
                converged = True
                break
        if not converged:
            warnings.warn(f"VAMP stopped after {cfg.max_iters} iterations without converging", NonConvergence)
        inv_den = 1.0 / (self.d / st.sigma2 + st.gamma2)
        return AlphaPosteriorSummary(
            mean=st.x1hat / self.scale,
            variances=np.maximum(st.var1, 0.0) / self.scale**2,
            inclusion_probs=np.clip(st.pi1, 0.0, 1.0),
            sigma2_hat=st.sigma2,
            converged=converged,
            iters_used=st.iteration,
            state=st,
            lmmse_factors=(self.V, inv_den, st.gamma2, self.scale),
        )


def vamp_fit(
    Sy: np.ndarray,
    SZ: np.ndarray,
    prior: SpikeSlabPrior,
    sigma2_init: float,
    config: Optional[VampConfig] = None,
) -> AlphaPosteriorSummary:
    """Approximate the spike-and-slab posterior of ``alpha`` in ``Sy ~ N(SZ alpha, sigma2 I)``."""
    if not sigma2_init > 0:
        raise InvalidVariance(f"sigma2_init must be positive, got {sigma2_init}")
    config = config or VampConfig()
    return VampSolver(Sy, SZ, prior, config).run(sigma2_init)
