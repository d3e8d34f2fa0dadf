"""Paired observations: Euclidean covariates with objects in one space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import MetricSpace


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` pairs ``(X_i, Y_i)``; ``X`` has shape ``(n, d)``."""

    space: MetricSpace
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError(f"covariates must be 1-d or 2-d, got shape {X.shape}")
        Y = self.space.as_points(self.Y)
        if len(X) != len(Y):
            raise ValueError(f"{len(X)} covariate rows but {len(Y)} objects")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def x(self) -> np.ndarray:
        """Scalar covariates; only for ``d == 1``."""
        if self.d != 1:
            raise ValueError(f"dataset has {self.d} covariates; project it first")
        return self.X[:, 0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.space, self.X[idx], self.Y[idx])

    def with_covariates(self, X) -> "Dataset":
        return Dataset(self.space, X, self.Y)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.space == other.space
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.Y, other.Y)
        )
