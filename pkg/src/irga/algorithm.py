"""End-to-end fit: rotate, summarise the projected nuisance, update ``beta``.

``irga_fit`` runs the three steps for one split of the design. ``select_all``
repeats it over consecutive column blocks of a larger design so that every
coefficient gets a marginal inclusion probability.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, DimensionMismatch, IncompatibleEstimator, InvalidVariance, TooManyVariables
from .exact import (
    MAX_ENUMERATION,
    MAX_ORACLE,
    BetaPosterior,
    GaussianPosterior,
    NuisanceSummary,
    beta_posterior,
    gaussian_beta_posterior,
    spike_slab_enumeration,
)
from .gp import GpConfig, gp_laplace_fit, gp_nuisance_summary
from .priors import GaussianPrior, GPrior, SpikeSlabPrior
from .rotation import Dataset, compute_rotation, rotate
from .vamp import AlphaPosteriorSummary, VampConfig, vamp_fit

BetaPrior = Union[SpikeSlabPrior, GPrior, GaussianPrior]
ESTIMATOR_KINDS = ("vamp", "exact_enumeration", "gp_laplace", "gaussian", "zero")
VAMP_COVARIANCES = ("lmmse", "diagonal", "scalar")


@dataclass(frozen=True)
class NuisanceEstimator:
    """Strategy for the Gaussian summary of ``R^T eta | S^T y``.

    ``kind`` picks the algorithm and ``config`` carries its settings:

    - ``vamp``: :class:`VampConfig`; the nuisance is ``Z alpha`` with a spike-and-slab ``alpha``
    - ``exact_enumeration``: ``None``; exact mixture moments, ``q <= 15``
    - ``gp_laplace``: :class:`GpConfig`; Gaussian-process nuisance
    - ``gaussian``: ``(mean, cov)`` of a Gaussian ``eta``; exact conditional moments
    - ``zero``: ``None``; the nuisance is ignored

    ``alpha_prior`` is the spike-and-slab prior on ``alpha`` for the first two
    kinds; when left unset the ``beta`` prior is reused if it is spike-and-slab.

    ``vamp_cov`` sets the covariance ``Psi`` of ``alpha`` behind
    ``Sigma_hat = R^T Z Psi Z^T R``: ``lmmse`` uses the full covariance of the
    linear step, ``diagonal`` the denoiser's marginal variances, and ``scalar``
    replaces ``Sigma_hat`` by ``tr(Lambda Psi) I_p`` with ``Lambda = Z^T Z / n``
    and diagonal ``Psi``.
    """

    kind: str
    config: object = None
    alpha_prior: Optional[SpikeSlabPrior] = None
    vamp_cov: str = "lmmse"

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator {self.kind!r}; choose from {ESTIMATOR_KINDS}")
        if self.vamp_cov not in VAMP_COVARIANCES:
            raise ConfigError(f"vamp_cov must be one of {VAMP_COVARIANCES}")
        if self.kind == "vamp":
            if self.config is None:
                object.__setattr__(self, "config", VampConfig())
            elif not isinstance(self.config, VampConfig):
                raise ConfigError("vamp estimator needs a VampConfig")
        elif self.kind == "gp_laplace" and not isinstance(self.config, GpConfig):
            raise ConfigError("gp_laplace estimator needs a GpConfig")
        elif self.kind == "gaussian":
            mean, cov = self.config
            cov = np.atleast_2d(np.asarray(cov, dtype=float))
            mean = np.zeros(cov.shape[0]) if mean is None else np.asarray(mean, dtype=float)
            if cov.shape != (mean.size, mean.size):
                raise ConfigError("gaussian estimator covariance does not match its mean")
            object.__setattr__(self, "config", (mean, cov))

    @classmethod
    def vamp(cls, config: Optional[VampConfig] = None, alpha_prior=None, cov: str = "lmmse"):
        return cls("vamp", config, alpha_prior, cov)

    @classmethod
    def exact(cls, alpha_prior=None):
        return cls("exact_enumeration", None, alpha_prior)

    @classmethod
    def gp(cls, config: GpConfig):
        return cls("gp_laplace", config)

    @classmethod
    def gaussian(cls, cov, mean=None):
        return cls("gaussian", (mean, cov))

    @classmethod
    def zero(cls):
        return cls("zero")

    def reseeded(self, seed: int) -> "NuisanceEstimator":
        if isinstance(self.config, (VampConfig, GpConfig)):
            return replace(self, config=replace(self.config, seed=seed))
        return self


@dataclass
class IrgaResult:
    posterior: Union[BetaPosterior, GaussianPosterior]
    summary: NuisanceSummary
    sigma2_used: float
    timings: dict = field(default_factory=dict)
    alpha: Optional[AlphaPosteriorSummary] = None

    def inclusion_probs(self) -> np.ndarray:
        if not isinstance(self.posterior, BetaPosterior):
            raise ConfigError("inclusion probabilities need a spike-and-slab or g-prior on beta")
        return self.posterior.inclusion_probs()


def _alpha_prior(estimator: NuisanceEstimator, beta_prior) -> SpikeSlabPrior:
    if estimator.alpha_prior is not None:
        return estimator.alpha_prior
    if isinstance(beta_prior, SpikeSlabPrior):
        return beta_prior
    raise IncompatibleEstimator(f"{estimator.kind} estimator needs alpha_prior when beta has a non spike-and-slab prior")


def _exact_sigma2(Sy, SZ, prior, shape=1.0, rate=1.0) -> float:
    """Posterior mode of the noise precision (gamma prior) after integrating ``alpha`` out."""

    def neg(log_s2):
        s2 = np.exp(log_s2)
        ev = spike_slab_enumeration(Sy, SZ, prior, s2).log_evidence
        return -(ev - (shape - 1.0) * log_s2 - rate / s2)

    scale = np.log(max(float(Sy @ Sy) / Sy.size, 1e-12))
    res = minimize_scalar(neg, bounds=(scale - 12.0, scale + 4.0), method="bounded", options={"xatol": 1e-8})
    return float(np.exp(res.x))


def _require_sigma2(data: Dataset, kind: str) -> float:
    if data.sigma2 is None:
        raise IncompatibleEstimator(f"{kind} estimator needs a known sigma2")
    return float(data.sigma2)


def _summarise(data, split, rot, estimator, beta_prior):
    """Step 2. Returns the summary, the sigma2 to use in step 3 and the alpha fit if any."""
    kind = estimator.kind
    p = data.p
    m = data.n - p
    if kind in ("vamp", "exact_enumeration") and data.Z is None:
        raise IncompatibleEstimator(f"{kind} estimator needs nuisance columns Z")
    if kind == "zero":
        sigma2 = data.sigma2
        if sigma2 is None:
            if m < 1:
                raise InvalidVariance("cannot estimate sigma2 from a saturated design (n == p)")
            sigma2 = float(rot.Sy @ rot.Sy) / m
            if not sigma2 > 0:
                raise InvalidVariance("residual variance is zero; pass sigma2 explicitly")
        return NuisanceSummary.zero(p), float(sigma2), None
    if kind == "gaussian":
        sigma2 = _require_sigma2(data, kind)
        mean, V = estimator.config
        if V.shape != (data.n, data.n):
            raise DimensionMismatch(f"nuisance covariance must be {data.n} x {data.n}")
        R, S = split.R, split.S
        VS = V @ S
        M = S.T @ VS + sigma2 * np.eye(m)
        RVS = R.T @ VS
        gain = np.linalg.solve(M, RVS.T).T
        mu = R.T @ mean + gain @ (rot.Sy - S.T @ mean)
        Sigma = R.T @ V @ R - gain @ RVS.T
        return NuisanceSummary(mu, Sigma), sigma2, None
    if kind == "gp_laplace":
        sigma2 = _require_sigma2(data, kind)
        cfg = estimator.config
        fit = gp_laplace_fit(rot.Sy, split.S, cfg, sigma2)
        return gp_nuisance_summary(fit, split.R, cfg), sigma2, None
    prior = _alpha_prior(estimator, beta_prior)
    if kind == "exact_enumeration":
        if data.q > MAX_ORACLE:
            raise TooManyVariables(f"exact nuisance enumeration needs q <= {MAX_ORACLE}, got {data.q}")
        sigma2 = data.sigma2 if data.sigma2 is not None else _exact_sigma2(rot.Sy, rot.SZ, prior)
        post = spike_slab_enumeration(rot.Sy, rot.SZ, prior, sigma2)
        mu = rot.RZ @ post.mean()
        Sigma = rot.RZ @ post.cov() @ rot.RZ.T
        return NuisanceSummary(mu, Sigma), float(sigma2), None
    # vamp
    cfg = estimator.config
    known = data.sigma2 is not None
    cfg = replace(cfg, estimate_sigma2=cfg.estimate_sigma2 and not known)
    sigma2_init = data.sigma2 if known else max(float(rot.Sy @ rot.Sy) / max(m, 1), 1e-8)
    alpha = vamp_fit(rot.Sy, rot.SZ, prior, sigma2_init, cfg)
    mu = rot.RZ @ alpha.mean
    if estimator.vamp_cov == "scalar":
        Lam = data.Z.T @ data.Z / data.n
        Sigma = float(np.sum(np.diag(Lam) * alpha.variances)) * np.eye(p)
    elif estimator.vamp_cov == "diagonal":
        Sigma = (rot.RZ * alpha.variances) @ rot.RZ.T
    else:
        Sigma = alpha.projected_covariance(rot.RZ)
    sigma2 = float(data.sigma2) if known else alpha.sigma2_hat
    return NuisanceSummary(mu, Sigma), sigma2, alpha


def irga_fit(data: Dataset, beta_prior: BetaPrior, estimator: NuisanceEstimator) -> IrgaResult:
    """Approximate posterior of ``beta`` in ``y = X beta + eta + eps``."""
    timings = {}
    t0 = time.perf_counter()
    split = compute_rotation(data.X)
    rot = rotate(data, split)
    t1 = time.perf_counter()
    timings["rotation"] = t1 - t0
    summary, sigma2, alpha = _summarise(data, split, rot, estimator, beta_prior)
    t2 = time.perf_counter()
    timings["nuisance"] = t2 - t1
    if isinstance(beta_prior, GaussianPrior):
        post = gaussian_beta_posterior(rot.Ry, rot.RX, summary, sigma2, beta_prior)
    elif isinstance(beta_prior, (SpikeSlabPrior, GPrior)):
        post = beta_posterior(rot.Ry, rot.RX, summary, sigma2, beta_prior)
    else:
        raise ConfigError(f"unsupported beta prior {type(beta_prior).__name__}")
    timings["posterior"] = time.perf_counter() - t2
    return IrgaResult(post, summary, sigma2, timings, alpha)


@dataclass(frozen=True)
class SelectionProblem:
    """All-coefficient selection in ``y ~ N(A theta, sigma2 I)``.

    ``block_size`` may equal ``r``, in which case the single block has no
    nuisance and the fit is exact.
    """

    y: np.ndarray
    A: np.ndarray
    prior: SpikeSlabPrior
    block_size: int = 4
    workers: int = 1
    sigma2: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        # C order keeps BLAS reductions identical in the parent and in workers
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).reshape(-1))
        A = np.ascontiguousarray(np.atleast_2d(np.asarray(self.A, dtype=float)))
        if A.shape[0] != y.size:
            raise DimensionMismatch(f"A has {A.shape[0]} rows, y has {y.size}")
        r = A.shape[1]
        if r < 2:
            raise ConfigError("selection needs at least two columns")
        if not 1 <= self.block_size <= min(r, MAX_ENUMERATION):
            raise ConfigError(f"block_size must lie in [1, {min(r, MAX_ENUMERATION)}], got {self.block_size}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "A", A)

    @property
    def r(self) -> int:
        return self.A.shape[1]

    def blocks(self) -> list[np.ndarray]:
        return [np.arange(s, min(s + self.block_size, self.r)) for s in range(0, self.r, self.block_size)]


@dataclass
class SelectionResult:
    inclusion_probs: np.ndarray
    log_odds: np.ndarray
    block_sigma2: np.ndarray
    blocks: list


def _fit_block(y, A, block, prior, sigma2, estimator):
    y, A = np.ascontiguousarray(y), np.ascontiguousarray(A)
    rest = np.setdiff1d(np.arange(A.shape[1]), block)
    Z = A[:, rest] if rest.size else None
    if Z is None:
        estimator = NuisanceEstimator.zero()
    res = irga_fit(Dataset(y, A[:, block], Z, sigma2), prior, estimator)
    return res.inclusion_probs(), res.posterior.inclusion_log_odds(), res.sigma2_used


def select_blocks(problem: SelectionProblem, estimator: NuisanceEstimator) -> SelectionResult:
    """Fit every block of ``problem`` and collect probabilities, log-odds and noise variances."""
    if estimator.kind == "gp_laplace":
        raise IncompatibleEstimator("block selection treats the other columns as Z; gp_laplace does not apply")
    blocks = problem.blocks()
    seeds = np.random.SeedSequence(problem.seed).generate_state(len(blocks))
    tasks = [
        (problem.y, problem.A, b, problem.prior, problem.sigma2, estimator.reseeded(int(s)))
        for b, s in zip(blocks, seeds)
    ]
    if problem.workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=min(problem.workers, len(blocks))) as pool:
            results = list(pool.map(_fit_block, *zip(*tasks)))
    else:
        results = [_fit_block(*t) for t in tasks]
    probs = np.empty(problem.r)
    log_odds = np.empty(problem.r)
    for b, (pr, lo, _) in zip(blocks, results):
        probs[b] = pr
        log_odds[b] = lo
    return SelectionResult(probs, log_odds, np.array([res[2] for res in results]), blocks)


def select_all(problem: SelectionProblem, estimator: NuisanceEstimator) -> np.ndarray:
    """Marginal inclusion probability of every column of ``A``, one block at a time."""
    return select_blocks(problem, estimator).inclusion_probs
