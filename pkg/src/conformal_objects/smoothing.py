"""Kernels and local-linear smoothing weights.

The local-linear intercept at ``x`` of any response vector ``R`` is the dot
product ``w @ R`` with the weights returned here, so one weight vector per
target serves every fit (profiles, costs and scores alike).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoLocalDataError

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-10
WIDEN_FACTOR = 1.5
MAX_WIDENINGS = 40


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def triangular(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 1.0 - np.abs(u), 0.0)


def quartic(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 15.0 / 16.0 * (1.0 - u * u) ** 2, 0.0)


KERNELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "epanechnikov": epanechnikov,
    "triangular": triangular,
    "quartic": quartic,
}


@dataclass(frozen=True)
class KernelSpec:
    """A compactly supported kernel on [-1, 1] with bandwidth ``h``."""

    family: str = "epanechnikov"
    h: float = 0.1

    def __post_init__(self) -> None:
        fam = self.family.lower()
        if fam not in KERNELS:
            raise ValueError(f"unknown kernel {self.family!r}; choose from {sorted(KERNELS)}")
        object.__setattr__(self, "family", fam)
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive, got {self.h}")

    def __call__(self, u):
        return KERNELS[self.family](u)

    def with_bandwidth(self, h: float) -> "KernelSpec":
        return KernelSpec(self.family, float(h))

    def to_dict(self) -> dict:
        return {"family": self.family, "h": self.h}


def rule_of_thumb_bandwidth(X, c: float = 1.0) -> float:
    """``c * sd(X) * n**(-1/5)``."""
    X = np.asarray(X, dtype=float).ravel()
    if len(X) < 2:
        raise ValueError("need at least two covariates for a bandwidth")
    sd = float(np.std(X, ddof=1))
    if sd == 0.0:
        sd = 1.0
    return c * sd * len(X) ** (-0.2)


@dataclass(frozen=True)
class LocalLinearWeights:
    x: float
    weights: np.ndarray
    support: int
    h: float
    nadaraya_watson: bool = False


def _weights_from_kernel(K: np.ndarray, dx: np.ndarray, h) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise local-linear weights from kernel values and offsets ``X - x``.

    Rows with a degenerate design fall back to Nadaraya-Watson weights.
    Returns the weight matrix and the fallback mask.
    """
    mu0 = K.sum(axis=1)
    mu1 = (K * dx).sum(axis=1)
    mu2 = (K * dx * dx).sum(axis=1)
    sigma2 = mu2 * mu0 - mu1 * mu1
    h = np.broadcast_to(np.asarray(h, dtype=float), mu0.shape)
    nw = sigma2 < DEGENERATE_TOL * (mu0 * h) ** 2
    safe = np.where(nw, 1.0, sigma2)
    W = K * (mu2[:, None] - mu1[:, None] * dx) / safe[:, None]
    if np.any(nw):
        W[nw] = K[nw] / mu0[nw, None]
    return W, nw


def local_linear_weights(x: float, X, kernel: KernelSpec) -> LocalLinearWeights:
    """Weights whose dot product with responses gives the local-linear intercept at ``x``.

    Raises :class:`NoLocalDataError` when no covariate falls inside the window.
    """
    X = np.asarray(X, dtype=float).ravel()
    dx = X - float(x)
    K = kernel(dx / kernel.h)
    support = int(np.count_nonzero(K))
    if support == 0:
        raise NoLocalDataError(f"no covariates within h={kernel.h:.4g} of x={x:.4g}", x=float(x))
    W, nw = _weights_from_kernel(K[None, :], dx[None, :], kernel.h)
    return LocalLinearWeights(float(x), W[0], support, kernel.h, bool(nw[0]))


def weight_matrix(xs, X, kernel: KernelSpec, widen: bool = True, min_support: int = 2):
    """Local-linear weights for many targets at once.

    Targets whose window holds fewer than ``min_support`` covariates get
    their bandwidth widened by a factor 1.5 until it does (only when
    ``widen``). Returns ``(W, h_used)`` with ``W`` of shape ``(len(xs), len(X))``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float)).ravel()
    X = np.asarray(X, dtype=float).ravel()
    min_support = min(min_support, len(X))
    h = np.full(len(xs), kernel.h)
    dx = X[None, :] - xs[:, None]
    K = kernel(dx / h[:, None])
    support = np.count_nonzero(K, axis=1)
    short = support < (min_support if widen else 1)
    if np.any(short):
        if not widen:
            i = int(np.flatnonzero(short)[0])
            raise NoLocalDataError(
                f"no covariates within h={kernel.h:.4g} of x={xs[i]:.4g}", x=float(xs[i]), index=i
            )
        for i in np.flatnonzero(short):
            hi = h[i]
            for _ in range(MAX_WIDENINGS):
                hi *= WIDEN_FACTOR
                Ki = kernel(dx[i] / hi)
                if np.count_nonzero(Ki) >= min_support:
                    break
            else:
                raise NoLocalDataError(f"no covariates near x={xs[i]:.4g}", x=float(xs[i]), index=int(i))
            h[i] = hi
            K[i] = Ki
        log.debug("widened bandwidth for %d of %d targets", int(short.sum()), len(xs))
    W, _ = _weights_from_kernel(K, dx, h)
    return W, h
