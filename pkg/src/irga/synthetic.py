"""Seeded data generators for the experiment families.

``generate`` returns the model-facing :class:`Dataset` and a separate
:class:`GroundTruth` used only for scoring.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .errors import ConfigError
from .gp import kernel_matrix
from .rotation import Dataset

FAMILIES = ("covariate_adjust", "selection", "gp", "consistency")


@dataclass(frozen=True)
class ScenarioSpec:
    """Data-generating setup.

    ``p`` counts the columns of ``X`` (for ``selection``, all ``r`` columns of
    ``A``) and ``q`` the columns of ``Z``. Rows of ``[X, Z]`` are
    ``N(0, Phi)`` with ``Phi_ij = rho^|i-j|``. ``beta`` and ``alpha`` default to
    zero vectors; ``alpha`` is ignored by the ``gp`` family, whose nuisance is
    ``f(z)^2`` with ``z`` the first column of ``X`` and ``f`` a GP draw.
    """

    family: str
    n: int
    p: int
    q: int = 0
    rho: float = 0.0
    beta: Optional[tuple] = None
    alpha: Optional[tuple] = None
    sigma2: float = 1.0
    lengthscale_sq: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n < 1 or self.p < 1 or self.q < 0:
            raise ConfigError("need n >= 1, p >= 1 and q >= 0")
        if self.p + (self.q if self.family != "gp" else 0) > self.n:
            raise ConfigError("more columns than observations")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (-1, 1)")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if self.beta is not None and len(self.beta) != self.p:
            raise ConfigError(f"beta has {len(self.beta)} entries, p = {self.p}")
        if self.alpha is not None and len(self.alpha) != self.q:
            raise ConfigError(f"alpha has {len(self.alpha)} entries, q = {self.q}")
        if self.family == "gp" and self.q not in (0, 1):
            raise ConfigError("the gp family uses a single feature")

    @classmethod
    def gp_replication(cls, seed: int = 0) -> "ScenarioSpec":
        return cls("gp", n=100, p=3, q=1, rho=0.9, beta=(4.0, -4.0, 4.0), sigma2=1.0, seed=seed)


@dataclass
class GroundTruth:
    beta: np.ndarray
    eta: np.ndarray
    gamma: tuple
    sigma2: float
    alpha: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    spec: Optional[ScenarioSpec] = field(default=None, repr=False)


def _design(rng, n, d, rho):
    if rho == 0.0:
        return rng.standard_normal((n, d))
    L = np.linalg.cholesky(toeplitz(rho ** np.arange(d)))
    return rng.standard_normal((n, d)) @ L.T


def generate(spec: ScenarioSpec) -> tuple[Dataset, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    n, p, q = spec.n, spec.p, spec.q
    beta = np.zeros(p) if spec.beta is None else np.asarray(spec.beta, dtype=float)
    gamma = tuple(int(j) for j in np.flatnonzero(beta))
    if spec.family == "gp":
        X = _design(rng, n, p, spec.rho)
        z = X[:, 0].copy()
        K = kernel_matrix(z, spec.lengthscale_sq)
        K[np.diag_indices(n)] += 1e-8
        F = np.linalg.cholesky(K) @ rng.standard_normal(n)
        eta = F * F
        y = X @ beta + eta + np.sqrt(spec.sigma2) * rng.standard_normal(n)
        data = Dataset(y, X, z[:, None], spec.sigma2)
        return data, GroundTruth(beta, eta, gamma, spec.sigma2, F=F, spec=spec)
    W = _design(rng, n, p + q, spec.rho)
    X, Z = W[:, :p], (W[:, p:] if q else None)
    alpha = np.zeros(q) if spec.alpha is None else np.asarray(spec.alpha, dtype=float)
    eta = Z @ alpha if q else np.zeros(n)
    y = X @ beta + eta + np.sqrt(spec.sigma2) * rng.standard_normal(n)
    data = Dataset(y, X, Z, spec.sigma2)
    return data, GroundTruth(beta, eta, gamma, spec.sigma2, alpha=alpha if q else None, spec=spec)


def consistency_sequence(spec: ScenarioSpec, n_values: Sequence[int]) -> list[tuple[Dataset, GroundTruth]]:
    """Nested datasets: the first ``n`` rows of one draw at ``max(n_values)``."""
    if spec.family != "consistency":
        raise ConfigError("consistency_sequence needs the consistency family")
    big, truth = generate(ScenarioSpec(**{**spec.__dict__, "n": max(n_values)}))
    out = []
    for n in n_values:
        data = Dataset(big.y[:n], big.X[:n], None if big.Z is None else big.Z[:n], big.sigma2)
        t = GroundTruth(truth.beta, truth.eta[:n], truth.gamma, truth.sigma2, truth.alpha, spec=spec)
        out.append((data, t))
    return out


def to_csv(data: Dataset, path) -> Path:
    """Write ``data`` in the CLI input layout: ``y``, ``x_1..x_p``, ``z_1..z_q``."""
    path = Path(path)
    header = ["y"] + [f"x_{j + 1}" for j in range(data.p)] + [f"z_{j + 1}" for j in range(data.q)]
    cols = [data.y[:, None], data.X] + ([data.Z] if data.Z is not None else [])
    table = np.hstack(cols)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in table:
            writer.writerow([repr(float(v)) for v in row])
    return path
