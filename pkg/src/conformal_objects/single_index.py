"""Single-index Fréchet regression for multivariate covariates.

The index direction is estimated by binning the projected covariates,
fitting local Fréchet means at one representative per bin, and minimizing
the mean squared distance between the representatives and their fits over
unit vectors with a positive first coordinate. Covariates are then
projected on the estimate and the scalar pipeline takes over.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .conformal import ConformalModel, make_split, split_fit
from .data import Dataset
from .errors import ConformalObjectsError, NoLocalDataError
from .smoothing import KernelSpec, rule_of_thumb_bandwidth, weight_matrix

log = logging.getLogger(__name__)


def normalize_theta(v) -> np.ndarray:
    """Scale to unit norm and flip the sign so the first coordinate is positive."""
    v = np.asarray(v, dtype=float).ravel()
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0:
        raise ValueError("index direction must be a nonzero finite vector")
    v = v / norm
    if v[0] < 0:
        v = -v
    return v


def angles_to_theta(phi) -> np.ndarray:
    """Hyperspherical coordinates: theta_1 = cos(phi_1), ..., theta_d = prod sin(phi_i)."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta = np.ones(len(phi) + 1)
    s = 1.0
    for i, p in enumerate(phi):
        theta[i] = s * math.cos(p)
        s *= math.sin(p)
    theta[-1] = s
    return theta


@dataclass(frozen=True)
class BinPlan:
    M: int
    edges: np.ndarray
    reps: np.ndarray

    @classmethod
    def build(cls, proj: np.ndarray, M: int) -> "BinPlan":
        """Equal-width bins over the projected range; each nonempty bin is
        represented by the point whose projection is closest to its midpoint."""
        lo, hi = float(proj.min()), float(proj.max())
        edges = np.linspace(lo, hi, M + 1)
        which = np.clip(np.digitize(proj, edges[1:-1]), 0, M - 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        reps = []
        for b in range(M):
            idx = np.flatnonzero(which == b)
            if idx.size:
                reps.append(idx[np.argmin(np.abs(proj[idx] - mids[b]))])
        return cls(M, edges, np.asarray(reps, dtype=int))


def default_bins(n: int) -> int:
    return max(2, int(math.floor(n ** 0.25)))


def local_frechet_fit(data: Dataset, theta, t: float, h: float, kernel_family: str = "epanechnikov"):
    """Weighted Fréchet mean of the objects with local-linear weights in ``X @ theta`` at ``t``."""
    if not data.space.has_mean:
        raise ConformalObjectsError(f"{data.space.kind} has no Fréchet mean")
    proj = data.X @ normalize_theta(theta)
    kernel = KernelSpec(kernel_family, h)
    W, _ = weight_matrix([t], proj, kernel, widen=False)
    if np.count_nonzero(W[0]) < 2:
        raise NoLocalDataError(f"fewer than two projections within h={h:.4g} of t={t:.4g}", x=float(t))
    return data.space.frechet_mean(data.Y, W[0])


def index_objective(data: Dataset, theta, M: int, h: float | None = None,
                    kernel_family: str = "epanechnikov") -> float:
    """Mean squared distance between bin representatives and their local Fréchet fits."""
    theta = np.asarray(theta, dtype=float)
    proj = data.X @ theta
    plan = BinPlan.build(proj, M)
    t_rep, Y_rep = proj[plan.reps], data.Y[plan.reps]
    bw = h if h is not None else rule_of_thumb_bandwidth(proj)
    W, _ = weight_matrix(t_rep, proj, KernelSpec(kernel_family, bw))
    space = data.space
    if space.kind in ("euclidean", "network"):
        fits = np.tensordot(W, data.Y, axes=1)
        if space.kind == "network":
            fits = np.clip(fits, 0.0, 1.0)
    else:
        fits = space.frechet_means(data.Y, W)
    d = np.diag(space.pairwise(Y_rep, fits))
    return float(np.mean(d * d))


@dataclass(frozen=True, eq=False)
class ThetaFit:
    theta: np.ndarray
    objective: float
    start_objectives: list[float]
    best_start: int
    bins: BinPlan
    h: float | None
    trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "objective": self.objective,
            "start_objectives": [float(v) for v in self.start_objectives],
            "best_start": self.best_start,
            "bins": {"M": self.bins.M, "edges": [float(e) for e in self.bins.edges],
                     "representatives": [int(i) for i in self.bins.reps]},
            "h": self.h,
        }


def _recorder(trace: list[float]):
    def record(intermediate_result):
        # objective at the best simplex vertex, which never increases
        trace.append(float(intermediate_result.fun))
    return record


def estimate_theta(
    data: Dataset,
    M: int | None = None,
    h: float | None = None,
    *,
    restarts: int = 8,
    maxiter: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
    kernel_family: str = "epanechnikov",
) -> ThetaFit:
    """Index direction by Nelder-Mead over hyperspherical angles with seeded restarts.

    ``h=None`` recomputes the rule-of-thumb bandwidth on each candidate
    projection. The winner is the lowest objective, ties broken by start index.
    """
    d = data.d
    if d < 2:
        raise ValueError("single-index estimation needs at least two covariates")
    if not data.space.has_mean:
        raise ConformalObjectsError(f"{data.space.kind} has no Fréchet mean")
    M = M if M is not None else default_bins(data.n)
    if M < 2:
        raise ValueError("need at least two bins")

    def objective(phi):
        try:
            val = index_objective(data, angles_to_theta(phi), M, h, kernel_family)
        except (ConformalObjectsError, ValueError, FloatingPointError) as exc:
            log.debug("objective failed at %s: %s", phi, exc)
            return math.inf
        return val if math.isfinite(val) else math.inf

    rng = np.random.default_rng(seed)
    results = []
    for start in range(restarts):
        phi0 = np.empty(d - 1)
        phi0[0] = rng.uniform(-np.pi / 2, np.pi / 2)
        if d > 2:
            phi0[1:-1] = rng.uniform(0.0, np.pi, d - 3)
            phi0[-1] = rng.uniform(-np.pi, np.pi)
        simplex = np.vstack([phi0, phi0 + 0.2 * np.eye(d - 1)])
        trace: list[float] = []
        res = minimize(
            objective, phi0, method="Nelder-Mead", callback=_recorder(trace),
            options={"maxiter": maxiter, "fatol": tol, "xatol": tol, "initial_simplex": simplex},
        )
        results.append((float(res.fun), start, res.x, trace))
    finite = [r for r in results if math.isfinite(r[0])]
    if not finite:
        raise ConformalObjectsError("every optimizer start produced a non-finite objective")
    best = min(finite, key=lambda r: (r[0], r[1]))
    theta = normalize_theta(angles_to_theta(best[2]))
    return ThetaFit(theta, best[0], [r[0] for r in results], best[1],
                    BinPlan.build(data.X @ theta, M), h, best[3])


def project_and_fit(
    data: Dataset,
    theta_hat=None,
    kernel: KernelSpec | None = None,
    alpha: float = 0.1,
    seed: int = 0,
    *,
    split_ratio: float = 0.5,
    M: int | None = None,
    restarts: int = 8,
    **fit_kwargs,
) -> ConformalModel:
    """Project covariates on the index and run the scalar split-conformal fit.

    Without ``theta_hat`` the direction is estimated on the training half of
    the same split that calibration uses.
    """
    info = {}
    if theta_hat is None:
        plan = make_split(data.n, seed, split_ratio)
        fit = estimate_theta(data.subset(plan.train), M=M, restarts=restarts, seed=seed,
                             kernel_family=fit_kwargs.get("kernel_family", "epanechnikov"))
        theta_hat = fit.theta
        info["theta_fit"] = fit.to_dict()
    theta = normalize_theta(theta_hat)
    if len(theta) != data.d:
        raise ValueError(f"theta has {len(theta)} coordinates but data has {data.d} covariates")
    projected = data.with_covariates((data.X @ theta)[:, None])
    model = split_fit(projected, kernel, alpha, seed, split_ratio=split_ratio, **fit_kwargs)
    return replace(model, theta=theta, info={**model.info, **info})
