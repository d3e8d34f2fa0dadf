"""Seeded data generators for the simulation settings and illustration laws.

Settings 1-5 have a scalar covariate ``x ~ Unif(-1, 1)``; settings 6-9 use a
multivariate covariate whose law depends on ``X @ theta0`` only. The
``fig-*`` laws draw the object independently of the covariate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .spaces import (
    Euclidean,
    Sphere2,
    Spider3,
    Wasserstein1D,
    normal_quantiles,
    quantile_levels,
    transport_add,
    transport_scale,
)

SETTINGS = ("1", "2", "3", "4", "5", "6", "7", "8", "9",
            "fig-spider", "fig-sphere-bimodal", "fig-wass", "fig-2d-mixture")

WASSERSTEIN_M = 100

# fig-2d-mixture components
MIX_MEANS = np.array([[2.0, 2.0], [-2.0, -2.0]])
MIX_COVS = np.array([[[0.5, -0.3], [-0.3, 0.3]], [[0.5, 0.0], [0.0, 0.3]]])


def f_reg(x):
    """Regression function ``(x - 1)^2 (x + 1)``."""
    x = np.asarray(x, dtype=float)
    return (x - 1.0) ** 2 * (x + 1.0)


def g_branch(x):
    """Branch offset ``2 sqrt(x) 1{x >= 0}``."""
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, 2.0 * np.sqrt(np.maximum(x, 0.0)), 0.0)


def hetero_sd(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 0.5, 0.1)


def sphere_mean(x):
    """``(sin(pi x / 2), cos(pi x / 2), 0)`` row-wise."""
    x = np.asarray(x, dtype=float)
    return np.stack([np.sin(np.pi * x / 2), np.cos(np.pi * x / 2), np.zeros_like(x)], axis=-1)


def beta22_transport(m: int = WASSERSTEIN_M) -> np.ndarray:
    """Beta(2, 2) distribution function on the midpoint grid, as a transport map."""
    u = quantile_levels(m)
    return 3 * u**2 - 2 * u**3


@dataclass(frozen=True)
class GeneratorSpec:
    setting: str
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "setting", str(self.setting))
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; choose from {', '.join(SETTINGS)}")
        if self.n < 1:
            raise ValueError("n must be positive")


def true_theta(setting: str) -> np.ndarray | None:
    """Index direction of the multivariate settings, None otherwise."""
    setting = str(setting)
    if setting in ("6", "7", "8"):
        return np.array([1.0, 0.0])
    if setting == "9":
        return np.array([1.0, 0.0, 0.0, 0.0])
    return None


def space_for(setting: str):
    setting = str(setting)
    if setting in ("4", "9", "fig-sphere-bimodal"):
        return Sphere2()
    if setting == "5":
        return Wasserstein1D(WASSERSTEIN_M, (0.0, 1.0))
    if setting == "fig-wass":
        return Wasserstein1D(WASSERSTEIN_M, None)
    if setting == "fig-spider":
        return Spider3()
    if setting == "fig-2d-mixture":
        return Euclidean(2)
    return Euclidean(1)


def _scalar_responses(setting: str, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(t)
    if setting in ("1", "6"):
        return f_reg(t) + rng.normal(0.0, 0.1, n)
    if setting in ("2", "7"):
        return f_reg(t) + hetero_sd(t) * rng.normal(size=n)
    if setting in ("3", "8"):
        upper = rng.random(n) < 0.5
        centre = f_reg(t) + np.where(upper, g_branch(t), -0.2 * g_branch(t))
        return centre + rng.normal(0.0, 0.1, n)
    raise AssertionError(setting)


def _sphere_responses(t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mu = sphere_mean(t)
    eps = rng.normal(0.0, 0.5, len(t))
    # V = (0, 0, eps) is tangent at mu since mu has zero third coordinate
    y = np.cos(np.abs(eps))[:, None] * mu
    y[:, 2] = np.sin(eps)
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def _wasserstein_responses(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m = WASSERSTEIN_M
    base = normal_quantiles(0.8 * f_reg(x), np.full(len(x), 0.5), m, (0.0, 1.0))
    beta = beta22_transport(m)
    scale = rng.uniform(-0.5, 0.5, len(x))
    out = np.empty_like(base)
    for i in range(len(x)):
        noise = transport_scale(float(scale[i]), beta)
        out[i] = transport_add(np.clip(base[i], 0.0, 1.0), noise)
    return out


def _spider_responses(n: int, rng: np.random.Generator) -> np.ndarray:
    ray = rng.choice([1.0, 2.0, 3.0], size=n, p=[0.5, 0.3, 0.2])
    length = np.abs(rng.normal(0.5, 0.2, n))
    return np.stack([ray, length], axis=1)


def _bimodal_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    first = rng.random(n) < 0.5
    e = rng.normal(0.0, 0.2, (n, 2))
    mu = np.where(first[:, None], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    v = np.where(first[:, None], np.stack([np.zeros(n), e[:, 0], e[:, 1]], 1),
                 np.stack([e[:, 0], np.zeros(n), e[:, 1]], 1))
    nv = np.linalg.norm(v, axis=1, keepdims=True)
    y = np.cos(nv) * mu + np.sinc(nv / np.pi) * v
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def _mixture_2d(n: int, rng: np.random.Generator) -> np.ndarray:
    comp = (rng.random(n) >= 0.5).astype(int)
    chol = np.linalg.cholesky(MIX_COVS)
    z = rng.normal(size=(n, 2))
    return MIX_MEANS[comp] + np.einsum("nij,nj->ni", chol[comp], z)


def generate(spec: GeneratorSpec) -> Dataset:
    """Draw ``spec.n`` pairs from the setting's law; identical specs give identical data."""
    rng = np.random.default_rng(spec.seed)
    s, n = spec.setting, spec.n
    space = space_for(s)
    theta = true_theta(s)
    if theta is not None:
        X = rng.uniform(-1.0, 1.0, (n, len(theta)))
        t = X @ theta
    else:
        X = rng.uniform(-1.0, 1.0, (n, 1))
        t = X[:, 0]
    if s in ("1", "2", "3", "6", "7", "8"):
        Y = _scalar_responses(s, t, rng)[:, None]
    elif s in ("4", "9"):
        Y = _sphere_responses(t, rng)
    elif s == "5":
        Y = _wasserstein_responses(t, rng)
    elif s == "fig-spider":
        Y = _spider_responses(n, rng)
    elif s == "fig-sphere-bimodal":
        Y = _bimodal_sphere(n, rng)
    elif s == "fig-wass":
        Y = normal_quantiles(rng.uniform(-0.8, 0.8, n), rng.uniform(0.25, 0.75, n), WASSERSTEIN_M)
    else:
        Y = _mixture_2d(n, rng)
    return Dataset(space, X, Y)


def default_candidates(setting: str, resolution: int | None = None) -> np.ndarray | None:
    """A fixed candidate grid covering the setting's response range, if one is natural."""
    s = str(setting)
    space = space_for(s)
    if s in ("1", "2", "6", "7"):
        return space.candidate_grid(resolution or 200, (-1.0, 2.4) if s in ("2", "7") else (-0.5, 1.7))
    if s in ("3", "8"):
        return space.candidate_grid(resolution or 400, (-1.5, 3.5))
    if s in ("4", "9", "fig-sphere-bimodal"):
        return space.candidate_grid(resolution or 40)
    if s == "5":
        return space.candidate_grid(resolution or 15, ((0.0, 1.0), (0.1, 0.8)))
    if s == "fig-wass":
        return space.candidate_grid(resolution or 15, ((-0.9, 0.9), (0.2, 0.8)))
    if s == "fig-2d-mixture":
        return space.candidate_grid(resolution or 40, ((-4.5, 4.5), (-4.5, 4.5)))
    return None
