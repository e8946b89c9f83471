"""The diabetes selection benchmark (n = 442, r = 64).

The design is the 10 baseline measurements, their 45 pairwise interactions and
the squares of the 9 non-binary measurements, every column centred and scaled
to unit norm; ``y`` is treated the same way. Raw data comes from a user CSV
(``IRGA_DIABETES_CSV`` or an explicit path, in the CLI layout) or, failing
that, from scikit-learn's bundled copy.
"""
from __future__ import annotations

import itertools
import os
from typing import Optional

import numpy as np

from .errors import ParseError

ENV_VAR = "IRGA_DIABETES_CSV"
BINARY_COLUMN = 1  # sex, coded with two levels


def expand_diabetes(X: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Main effects, pairwise interactions and non-binary squares of the 10 raw columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 10:
        raise ParseError(f"expected 10 raw diabetes columns, got shape {X.shape}")
    cols = [X[:, j] for j in range(10)]
    names = [f"x{j}" for j in range(10)]
    for i, j in itertools.combinations(range(10), 2):
        cols.append(X[:, i] * X[:, j])
        names.append(f"x{i}:x{j}")
    for j in range(10):
        if j != BINARY_COLUMN:
            cols.append(X[:, j] ** 2)
            names.append(f"x{j}^2")
    return np.column_stack(cols), names


def _unit(a: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=0)
    return a / np.linalg.norm(a, axis=0)


def load_diabetes(path: Optional[str] = None) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Standardised ``(y, A, names)``; ``A`` has 64 columns.

    A CSV with 10 ``x_*`` columns is expanded; one with 64 is used as given.
    Raises ``FileNotFoundError`` when no CSV is given and scikit-learn is missing.
    """
    path = path or os.environ.get(ENV_VAR)
    if path:
        from .cli import read_table

        table = read_table(path)
        y, X = table.y, table.X
        if X.shape[1] == 10:
            A, names = expand_diabetes(X)
        elif X.shape[1] == 64:
            A, names = X, list(table.names_x)
        else:
            raise ParseError(f"diabetes CSV needs 10 or 64 predictor columns, found {X.shape[1]}")
    else:
        try:
            from sklearn.datasets import load_diabetes as _sk_load
        except ImportError as exc:
            raise FileNotFoundError(f"no diabetes data: set {ENV_VAR} or install scikit-learn") from exc
        raw = _sk_load(scaled=False)
        y = raw.target
        A, names = expand_diabetes(raw.data)
    return _unit(np.asarray(y, dtype=float)), _unit(A), names
