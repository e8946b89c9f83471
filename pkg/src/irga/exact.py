"""Exact posteriors for small Gaussian linear models by enumerating supports.

Two independent routes compute the same spike-and-slab marginal likelihoods:

* :func:`beta_posterior` works in the ``p``-dimensional whitened problem via
  the posterior precision of each active block (Woodbury form);
* :func:`exact_selection_oracle` evaluates ``N(y | 0, sigma2 I + psi A_g A_g^T)``
  directly in ``n`` dimensions.

Both cost ``O(2^p)`` factorisations and are meant for ``p`` up to ~15.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, islice
from typing import Iterator, Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DimensionMismatch, RankDeficient, SingularCovariance, TooManyVariables
from .mixtures import SubsetMixture
from .priors import GaussianPrior, GPrior, SpikeSlabPrior
from .rotation import check_full_rank

MAX_ENUMERATION = 25
MAX_ORACLE = 15
_LOG_2PI = np.log(2.0 * np.pi)
_CHUNK = 8192


@dataclass(frozen=True)
class NuisanceSummary:
    """Gaussian summary ``N(mu_hat, Sigma_hat)`` of the projected nuisance.

    ``Sigma_hat`` is symmetrised and its negative eigenvalues floored at zero on
    construction, since upstream estimators return approximate covariances.
    """

    mu_hat: np.ndarray
    Sigma_hat: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu_hat, dtype=float))
        Sig = np.atleast_2d(np.asarray(self.Sigma_hat, dtype=float))
        if Sig.shape != (mu.size, mu.size):
            raise DimensionMismatch(f"Sigma_hat {Sig.shape} does not match mu_hat {mu.shape}")
        Sig = 0.5 * (Sig + Sig.T)
        evals, evecs = np.linalg.eigh(Sig)
        if evals.size and evals.min() < 0.0:
            Sig = (evecs * np.maximum(evals, 0.0)) @ evecs.T
            Sig = 0.5 * (Sig + Sig.T)
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "Sigma_hat", Sig)

    @classmethod
    def zero(cls, p: int) -> "NuisanceSummary":
        return cls(np.zeros(p), np.zeros((p, p)))


@dataclass(frozen=True)
class ModelTerm:
    gamma: tuple
    log_weight: float
    cond_mean: np.ndarray
    cond_cov: np.ndarray


@dataclass
class SubsetBlock:
    """All supports of one size ``k``, stored as stacked arrays."""

    subsets: np.ndarray  # (N, k) int
    log_weights: np.ndarray  # (N,)
    means: np.ndarray  # (N, k)
    covs: np.ndarray  # (N, k, k)


@dataclass
class BetaPosterior:
    """Mixture posterior over all ``2^p`` supports with Gaussian conditionals.

    ``log_evidence`` is the log marginal likelihood of the data the posterior
    was conditioned on (including the normalising constants).
    """

    p: int
    blocks: list = field(default_factory=list)
    log_evidence: float = 0.0

    @property
    def models(self) -> Iterator[ModelTerm]:
        for block in self.blocks:
            for i in range(block.subsets.shape[0]):
                yield ModelTerm(
                    tuple(int(j) for j in block.subsets[i]),
                    float(block.log_weights[i]),
                    block.means[i],
                    block.covs[i],
                )

    def __len__(self) -> int:
        return sum(b.subsets.shape[0] for b in self.blocks)

    def log_weights(self) -> np.ndarray:
        return np.concatenate([b.log_weights for b in self.blocks])

    def inclusion_probs(self) -> np.ndarray:
        return inclusion_probs(self)

    def inclusion_log_odds(self) -> np.ndarray:
        return inclusion_log_odds(self)

    def as_mixture(self) -> SubsetMixture:
        K = len(self)
        masks = np.zeros((K, self.p), dtype=bool)
        means = np.zeros((K, self.p))
        covs = np.zeros((K, self.p, self.p))
        lw = np.empty(K)
        row = 0
        for block in self.blocks:
            N, k = block.subsets.shape
            rows = np.arange(row, row + N)
            lw[rows] = block.log_weights
            if k:
                masks[rows[:, None], block.subsets] = True
                means[rows[:, None], block.subsets] = block.means
                covs[rows[:, None, None], block.subsets[:, :, None], block.subsets[:, None, :]] = block.covs
            row += N
        return SubsetMixture(lw, masks, means, covs)

    def mean(self) -> np.ndarray:
        out = np.zeros(self.p)
        for block in self.blocks:
            if block.subsets.shape[1]:
                w = np.exp(block.log_weights)[:, None]
                np.add.at(out, block.subsets, w * block.means)
        return out

    def cov(self) -> np.ndarray:
        second = np.zeros((self.p, self.p))
        for block in self.blocks:
            if block.subsets.shape[1]:
                w = np.exp(block.log_weights)[:, None, None]
                outer = block.covs + block.means[:, :, None] * block.means[:, None, :]
                idx = block.subsets
                np.add.at(second, (idx[:, :, None], idx[:, None, :]), w * outer)
        mu = self.mean()
        return second - np.outer(mu, mu)


@dataclass
class GaussianPosterior:
    """Single Gaussian posterior, the result of a conjugate Gaussian prior."""

    mean_: np.ndarray
    cov_: np.ndarray
    log_evidence: float = 0.0

    @property
    def p(self) -> int:
        return self.mean_.size

    def mean(self) -> np.ndarray:
        return self.mean_

    def cov(self) -> np.ndarray:
        return self.cov_


def inclusion_probs(post: BetaPosterior) -> np.ndarray:
    probs = np.zeros(post.p)
    for block in post.blocks:
        if block.subsets.shape[1]:
            w = np.exp(block.log_weights)
            np.add.at(probs, block.subsets, w[:, None])
    return np.clip(probs, 0.0, 1.0)


def inclusion_log_odds(post: BetaPosterior) -> np.ndarray:
    """``log pr(beta_j != 0 | y) - log pr(beta_j = 0 | y)`` from the model log weights."""
    lw = post.log_weights()
    masks = np.zeros((lw.size, post.p), dtype=bool)
    row = 0
    for block in post.blocks:
        N = block.subsets.shape[0]
        if block.subsets.shape[1]:
            masks[np.arange(row, row + N)[:, None], block.subsets] = True
        row += N
    out = np.empty(post.p)
    for j in range(post.p):
        out[j] = logsumexp(lw[masks[:, j]]) - logsumexp(lw[~masks[:, j]])
    return out


def _combination_chunks(p: int, k: int, chunk: int):
    it = combinations(range(p), k)
    while True:
        block = list(islice(it, chunk))
        if not block:
            return
        yield np.asarray(block, dtype=np.intp).reshape(len(block), k)


def _batched_cholesky(P: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("posterior precision not positive definite") from exc


def _enumerate(G, b, p, prior, log_prior_odds, gprior_gram=None, gprior_scale=None):
    """Enumerate supports of ``y_w ~ N(W beta, I)`` given ``G = W^T W`` and ``b = W^T y_w``.

    Returns blocks with unnormalised log weights (log prior + log marginal
    likelihood up to a support-independent constant).
    """
    blocks = []
    log_incl = log_prior_odds
    for k in range(p + 1):
        log_prior = k * log_incl
        for idx in _combination_chunks(p, k, _CHUNK):
            N = idx.shape[0]
            if k == 0:
                blocks.append(SubsetBlock(idx, np.full(N, log_prior), np.zeros((N, 0)), np.zeros((N, 0, 0))))
                continue
            Gs = G[idx[:, :, None], idx[:, None, :]]
            bs = b[idx]
            if gprior_gram is None:
                prec_prior = np.eye(k) / prior.psi
                log_det_prior_cov = np.full(N, k * np.log(prior.psi))
            else:
                G0 = gprior_gram[idx[:, :, None], idx[:, None, :]]
                try:
                    L0 = np.linalg.cholesky(G0)
                except np.linalg.LinAlgError as exc:
                    raise RankDeficient("g-prior needs every active block of X to have full rank") from exc
                prec_prior = G0 / gprior_scale
                log_det_G0 = 2.0 * np.log(np.diagonal(L0, axis1=1, axis2=2)).sum(axis=1)
                log_det_prior_cov = k * np.log(gprior_scale) - log_det_G0
            P = Gs + prec_prior
            L = _batched_cholesky(P)
            log_det_P = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
            Linv = np.linalg.inv(L)
            cov = np.einsum("nji,njk->nik", Linv, Linv)
            mean = np.einsum("nij,nj->ni", cov, bs)
            log_ml = -0.5 * (log_det_prior_cov + log_det_P) + 0.5 * np.einsum("ni,ni->n", bs, mean)
            blocks.append(SubsetBlock(idx, log_prior + log_ml, mean, cov))
    return blocks


def _normalise(blocks, const):
    total = logsumexp(np.concatenate([b.log_weights for b in blocks]))
    for b in blocks:
        b.log_weights = b.log_weights - total
    return float(total + const)


def beta_posterior(
    Ry: np.ndarray,
    RX: np.ndarray,
    summary: NuisanceSummary,
    sigma2: float,
    prior: Union[SpikeSlabPrior, GPrior],
) -> BetaPosterior:
    """Exact posterior of ``beta`` under ``Ry - mu_hat ~ N(RX beta, sigma2 I + Sigma_hat)``."""
    Ry = np.atleast_1d(np.asarray(Ry, dtype=float))
    RX = np.atleast_2d(np.asarray(RX, dtype=float))
    p = RX.shape[1]
    if p > MAX_ENUMERATION:
        raise TooManyVariables(f"exact enumeration over 2^{p} supports refused (limit 2^{MAX_ENUMERATION})")
    if RX.shape[0] != Ry.size or summary.mu_hat.size != Ry.size:
        raise DimensionMismatch("Ry, RX and the nuisance summary disagree in dimension")
    if not sigma2 > 0:
        raise SingularCovariance(f"sigma2 must be positive, got {sigma2}")
    m = Ry.size
    C = sigma2 * np.eye(m) + summary.Sigma_hat
    try:
        Lc = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("sigma2 I + Sigma_hat is not positive definite") from exc
    yw = solve_triangular(Lc, Ry - summary.mu_hat, lower=True)
    Ww = solve_triangular(Lc, RX, lower=True)
    G = Ww.T @ Ww
    b = Ww.T @ yw
    const = -0.5 * (m * _LOG_2PI + 2.0 * np.log(np.diag(Lc)).sum() + yw @ yw)
    if isinstance(prior, GPrior):
        lo = float(np.log(prior.inclusion) - np.log1p(-prior.inclusion))
        blocks = _enumerate(G, b, p, prior, lo, gprior_gram=RX.T @ RX, gprior_scale=sigma2 * prior.g_n)
        const += p * np.log1p(-prior.inclusion)
    else:
        blocks = _enumerate(G, b, p, prior, prior.prior_log_odds)
        const += p * np.log1p(-prior.lam)
    log_ev = _normalise(blocks, const)
    return BetaPosterior(p=p, blocks=blocks, log_evidence=log_ev)


def spike_slab_enumeration(y: np.ndarray, A: np.ndarray, prior: SpikeSlabPrior, sigma2: float) -> BetaPosterior:
    """Exact spike-and-slab posterior of ``theta`` in ``y ~ N(A theta, sigma2 I)``."""
    y = np.asarray(y, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    r = A.shape[1]
    if r > MAX_ENUMERATION:
        raise TooManyVariables(f"exact enumeration over 2^{r} supports refused")
    m = y.size
    G = A.T @ A / sigma2
    b = A.T @ y / sigma2
    const = -0.5 * (m * _LOG_2PI + m * np.log(sigma2) + y @ y / sigma2) + r * np.log1p(-prior.lam)
    blocks = _enumerate(G, b, r, prior, prior.prior_log_odds)
    log_ev = _normalise(blocks, const)
    return BetaPosterior(p=r, blocks=blocks, log_evidence=log_ev)


def exact_selection_oracle(y: np.ndarray, A: np.ndarray, prior: SpikeSlabPrior, sigma2: float) -> np.ndarray:
    """Marginal inclusion probabilities by full enumeration of ``N(y | 0, sigma2 I + psi A_g A_g^T)``."""
    y = np.asarray(y, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n, r = A.shape
    if r > MAX_ORACLE:
        raise TooManyVariables(f"oracle enumeration limited to r <= {MAX_ORACLE}, got {r}")
    chunk = max(1, int(4e6 // (n * n)))
    log_w = []
    masks = []
    for k in range(r + 1):
        for idx in _combination_chunks(r, k, chunk):
            N = idx.shape[0]
            Ag = A[:, idx].transpose(1, 0, 2)  # (N, n, k)
            cov = sigma2 * np.eye(n) + prior.psi * np.einsum("nik,njk->nij", Ag, Ag)
            sign, logdet = np.linalg.slogdet(cov)
            if np.any(sign <= 0):
                raise SingularCovariance("marginal covariance not positive definite")
            sol = np.linalg.solve(cov, np.broadcast_to(y, (N, n))[..., None])[..., 0]
            ll = -0.5 * (n * _LOG_2PI + logdet + sol @ y)
            log_w.append(ll + k * np.log(prior.lam) + (r - k) * np.log1p(-prior.lam))
            mask = np.zeros((N, r))
            if k:
                mask[np.arange(N)[:, None], idx] = 1.0
            masks.append(mask)
    log_w = np.concatenate(log_w)
    w = np.exp(log_w - logsumexp(log_w))
    return np.clip(w @ np.vstack(masks), 0.0, 1.0)


def gprior_log_marginal(y: np.ndarray, X_gamma: Optional[np.ndarray], g_n: float, sigma2: float) -> float:
    """Log marginal likelihood of ``y`` under the g-prior model on the columns ``X_gamma``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    null = -0.5 * (n * _LOG_2PI + n * np.log(sigma2) + y @ y / sigma2)
    if X_gamma is None or np.size(X_gamma) == 0:
        return float(null)
    Xg = np.asarray(X_gamma, dtype=float)
    if Xg.ndim == 1:
        Xg = Xg[:, None]
    check_full_rank(Xg)
    k = Xg.shape[1]
    Qg, _ = np.linalg.qr(Xg)
    proj = Qg.T @ y
    shrink = g_n / (1.0 + g_n)
    return float(null - 0.5 * k * np.log1p(g_n) + 0.5 * shrink * (proj @ proj) / sigma2)


def gaussian_beta_posterior(
    Ry: np.ndarray, RX: np.ndarray, summary: NuisanceSummary, sigma2: float, prior: GaussianPrior
) -> GaussianPosterior:
    """Conjugate update of a Gaussian prior under ``Ry - mu_hat ~ N(RX beta, sigma2 I + Sigma_hat)``."""
    Ry = np.atleast_1d(np.asarray(Ry, dtype=float))
    RX = np.atleast_2d(np.asarray(RX, dtype=float))
    m = Ry.size
    m0, V0 = prior.mean, prior.covariance
    if m0.size != RX.shape[1]:
        raise DimensionMismatch("Gaussian prior dimension does not match X")
    C = sigma2 * np.eye(m) + summary.Sigma_hat
    resid = Ry - summary.mu_hat - RX @ m0
    marg = RX @ V0 @ RX.T + C
    marg = 0.5 * (marg + marg.T)
    try:
        Lm = np.linalg.cholesky(marg)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("marginal covariance of R^T y is not positive definite") from exc
    B = solve_triangular(Lm, RX @ V0, lower=True)  # L^{-1} RX V0
    z = solve_triangular(Lm, resid, lower=True)
    mean = m0 + B.T @ z
    cov = V0 - B.T @ B
    cov = 0.5 * (cov + cov.T)
    log_ev = -0.5 * (m * _LOG_2PI + 2.0 * np.log(np.diag(Lm)).sum() + z @ z)
    return GaussianPosterior(mean, cov, float(log_ev))
