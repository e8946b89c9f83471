"""Orthogonal split of the regression model.

The complete QR factorisation ``X = Q T`` gives an orthogonal ``Q = (R, S)``
whose first ``p`` columns span the column space of ``X`` and whose remaining
``n - p`` columns span its orthogonal complement. Multiplying the model by
``Q^T`` separates it into a ``p``-dimensional part that involves ``beta`` and
an ``(n - p)``-dimensional part that only sees the nuisance.

``S`` is materialised explicitly. Forming ``S^T Z`` then costs ``O(n^2 q)``,
which is the dominant rotation cost at desk scale.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidVariance, RankDeficient

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Observed data: response ``y``, design ``X`` and optional nuisance features ``Z``.

    ``sigma2`` is the error variance when known; ``None`` means it is estimated.
    """

    y: np.ndarray
    X: np.ndarray
    Z: Optional[np.ndarray] = None
    sigma2: Optional[float] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DimensionMismatch("X must be a matrix")
        n = y.shape[0]
        if n < 1:
            raise DimensionMismatch("need at least one observation")
        if X.shape[0] != n:
            raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {n}")
        if not 1 <= X.shape[1] <= n:
            raise DimensionMismatch(f"need 1 <= p <= n, got p={X.shape[1]}, n={n}")
        Z = self.Z
        if Z is not None:
            Z = np.asarray(Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
            if Z.shape[0] != n or Z.shape[1] < 1:
                raise DimensionMismatch(f"Z must be {n} x q with q >= 1, got {Z.shape}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise InvalidVariance(f"sigma2 must be positive, got {self.sigma2}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]


@dataclass(frozen=True)
class RotationSplit:
    R: np.ndarray  # n x p, orthonormal basis of col(X)
    S: np.ndarray  # n x (n - p), orthonormal basis of col(X)^perp

    @property
    def Q(self) -> np.ndarray:
        return np.hstack([self.R, self.S])


@dataclass(frozen=True)
class RotatedData:
    Ry: np.ndarray
    RX: np.ndarray
    Sy: np.ndarray
    RZ: Optional[np.ndarray] = None
    SZ: Optional[np.ndarray] = None


def check_full_rank(X: np.ndarray) -> None:
    s = np.linalg.svd(X, compute_uv=False)
    tol = RANK_RTOL * s[0] * max(X.shape)
    if s[0] == 0 or s[-1] < tol:
        raise RankDeficient(
            f"design has smallest singular value {s[-1]:.3e} below {tol:.3e}; "
            "drop or combine collinear columns"
        )


def compute_rotation(X: np.ndarray) -> RotationSplit:
    """Householder QR of ``X`` with the diagonal of the triangular factor made nonnegative."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if not 1 <= p <= n:
        raise DimensionMismatch(f"need n >= p >= 1, got n={n}, p={p}")
    check_full_rank(X)
    Q, T = np.linalg.qr(X, mode="complete")
    signs = np.where(np.diag(T) < 0, -1.0, 1.0)
    R = Q[:, :p] * signs
    S = Q[:, p:]
    return RotationSplit(R=np.ascontiguousarray(R), S=np.ascontiguousarray(S))


def rotate(data: Dataset, split: RotationSplit) -> RotatedData:
    n, p = data.n, data.p
    if split.R.shape != (n, p) or split.S.shape != (n, n - p):
        raise DimensionMismatch(
            f"split has R {split.R.shape}, S {split.S.shape}; data is n={n}, p={p}"
        )
    RZ = SZ = None
    if data.Z is not None:
        RZ = split.R.T @ data.Z
        SZ = split.S.T @ data.Z
    return RotatedData(
        Ry=split.R.T @ data.y,
        RX=split.R.T @ data.X,
        Sy=split.S.T @ data.y,
        RZ=RZ,
        SZ=SZ,
    )
