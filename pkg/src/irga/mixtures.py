"""Gaussian mixtures, including mixtures over coordinate subsets.

A :class:`SubsetMixture` is the natural law of a spike-and-slab posterior:
each component lives on a subset of coordinates (the rest are exactly zero),
and its density is taken with respect to the sum over subsets of Lebesgue
measure on the active coordinates (counting measure for the empty subset).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import SingularCovariance

_LOG_2PI = np.log(2.0 * np.pi)


def _chol(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("mixture component covariance is not positive definite") from exc


@dataclass
class GaussianMixture:
    """Mixture of full-rank Gaussians in ``d`` dimensions."""

    log_weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    covs: np.ndarray  # (K, d, d)

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.log_weights = self.log_weights - logsumexp(self.log_weights)
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        self._chols = _chol(self.covs)
        self._inv_chols = np.linalg.inv(self._chols)
        self._log_dets = 2.0 * np.log(np.diagonal(self._chols, axis1=1, axis2=2)).sum(axis=1)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def logpdf(self, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = self.dim
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], chunk):
            xs = x[start:start + chunk]
            diff = xs[:, None, :] - self.means[None, :, :]
            z = np.einsum("kij,mkj->mki", self._inv_chols, diff)
            comp = -0.5 * (np.sum(z * z, axis=2) + self._log_dets + d * _LOG_2PI)
            out[start:start + chunk] = logsumexp(comp + self.log_weights, axis=1)
        return out

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.means.shape[0], size=size, p=np.exp(self.log_weights))
        eps = rng.standard_normal((size, self.dim))
        return self.means[comp] + np.einsum("mij,mj->mi", self._chols[comp], eps)

    def mean(self) -> np.ndarray:
        return np.exp(self.log_weights) @ self.means

    def cov(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        mu = w @ self.means
        second = np.einsum("k,kij->ij", w, self.covs) + np.einsum("k,ki,kj->ij", w, self.means, self.means)
        return second - np.outer(mu, mu)


@dataclass
class SubsetMixture:
    """Mixture whose components are Gaussians supported on coordinate subsets.

    ``masks[k]`` marks the active coordinates of component ``k``; ``means`` and
    ``covs`` are embedded in the full dimension with zeros off the support.
    """

    log_weights: np.ndarray  # (K,)
    masks: np.ndarray  # (K, d) bool
    means: np.ndarray  # (K, d)
    covs: np.ndarray  # (K, d, d)

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.log_weights = self.log_weights - logsumexp(self.log_weights)
        self.masks = np.asarray(self.masks, dtype=bool)
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        keys = [m.tobytes() for m in self.masks]
        self._groups: dict[bytes, np.ndarray] = {}
        for i, key in enumerate(keys):
            self._groups.setdefault(key, []).append(i)
        self._groups = {k: np.asarray(v) for k, v in self._groups.items()}
        self._parts: dict[bytes, GaussianMixture | None] = {}
        self._chols = np.zeros_like(self.covs)
        for key, idx in self._groups.items():
            mask = self.masks[idx[0]]
            if not mask.any():
                self._parts[key] = None
                continue
            sub = np.ix_(idx, mask, mask)
            self._parts[key] = GaussianMixture(
                self.log_weights[idx], self.means[idx][:, mask], self.covs[sub]
            )
            L = self._parts[key]._chols
            for j, i in enumerate(idx):
                self._chols[i][np.ix_(mask, mask)] = L[j]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        point_masks = x != 0.0
        out = np.full(x.shape[0], -np.inf)
        by_key: dict[bytes, list] = {}
        for i, m in enumerate(point_masks):
            by_key.setdefault(m.tobytes(), []).append(i)
        for key, rows in by_key.items():
            rows = np.asarray(rows)
            if key not in self._groups:
                continue
            idx = self._groups[key]
            group_lw = logsumexp(self.log_weights[idx])
            part = self._parts[key]
            if part is None:
                out[rows] = group_lw
            else:
                mask = self.masks[idx[0]]
                out[rows] = group_lw + part.logpdf(x[np.ix_(rows, mask)])
        return out

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.masks.shape[0], size=size, p=np.exp(self.log_weights))
        eps = rng.standard_normal((size, self.dim))
        draws = self.means[comp] + np.einsum("mij,mj->mi", self._chols[comp], eps)
        return np.where(self.masks[comp], draws, 0.0)

    def mean(self) -> np.ndarray:
        return np.exp(self.log_weights) @ self.means

    def cov(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        mu = w @ self.means
        second = np.einsum("k,kij->ij", w, self.covs) + np.einsum("k,ki,kj->ij", w, self.means, self.means)
        return second - np.outer(mu, mu)

    def inclusion_probs(self) -> np.ndarray:
        return np.exp(self.log_weights) @ self.masks.astype(float)
