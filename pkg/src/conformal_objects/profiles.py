"""Conditional distance profiles, profile average transport costs and profile scores.

All three estimators are local-linear fits in the covariate, evaluated with
the weights from :mod:`conformal_objects.smoothing`:

* profile ``F(omega, x)(t)``: fit of ``1{d(omega, Y_j) <= t}``, clipped to [0, 1];
* cost ``C(omega | x)``: fit of ``J_j = int |F(omega, x) - F(Y_j, X_j)| dt``, floored at 0;
* score ``S(z | x)``: fit of ``1{C(Y_j | X_j) <= z}``, clipped to [0, 1].

Profiles are stored on a uniform t-grid; integrals use the trapezoid rule,
plus an exact tail term for query points farther from the data than the
grid reaches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .smoothing import KernelSpec, weight_matrix
from .spaces import MetricSpace

CHUNK_ELEMENTS = 4_000_000
RANK_LEVELS = 101


@dataclass(frozen=True)
class TGrid:
    """Uniform grid ``0 = t_0 < ... < t_{n_t - 1} = t_max``."""

    t_max: float
    n_t: int = 101

    def __post_init__(self) -> None:
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.n_t < 2:
            raise ValueError("t-grid needs at least two nodes")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_t)

    @property
    def dt(self) -> float:
        return self.t_max / (self.n_t - 1)

    @classmethod
    def for_diameter(cls, diameter: float, n_t: int = 101, factor: float = 1.05) -> "TGrid":
        return cls(factor * diameter if diameter > 0 else 1.0, n_t)

    def to_dict(self) -> dict:
        return {"t_max": self.t_max, "n_t": self.n_t}


def w1_profile_distance(F, G, grid: TGrid) -> float:
    """Trapezoid approximation of ``int_0^t_max |F(t) - G(t)| dt``."""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if F.shape != (grid.n_t,) or G.shape != (grid.n_t,):
        raise ValueError(f"profiles must have {grid.n_t} values, got {F.shape} and {G.shape}")
    return float(_trapezoid_abs(F[None, :] - G[None, :], grid.dt)[0])


def _trapezoid_abs(diff: np.ndarray, dt: float) -> np.ndarray:
    a = np.abs(diff)
    return dt * (a.sum(axis=-1) - 0.5 * (a[..., 0] + a[..., -1]))


def _step_curves(W: np.ndarray, D: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Rows ``sum_k W[q, k] 1{D[q, k] <= t}`` evaluated at every node."""
    m, n_t = len(W), len(nodes)
    rows, cols = np.nonzero(W)
    idx = np.searchsorted(nodes, D[rows, cols], side="left")
    acc = np.bincount(rows * (n_t + 1) + idx, weights=W[rows, cols], minlength=m * (n_t + 1))
    return np.cumsum(acc.reshape(m, n_t + 1)[:, :n_t], axis=1)


def _finish_curves(raw: np.ndarray, monotone: bool) -> np.ndarray:
    if monotone:
        raw = np.maximum.accumulate(raw, axis=1)
    return np.clip(raw, 0.0, 1.0)


def _tail_steps(w, d, t_max: float, raw_end: float, floor: float | None):
    """Continuation of a profile beyond ``t_max`` as a step function.

    Returns ``(knots, values)`` with ``values[i]`` holding on
    ``[knots[i], knots[i + 1])``. ``floor`` is the running maximum at
    ``t_max`` for monotonized profiles, None otherwise.
    """
    far = (d > t_max) & (w != 0)
    order = np.argsort(d[far])
    knots = np.concatenate(([t_max], d[far][order]))
    vals = np.clip(raw_end + np.concatenate(([0.0], np.cumsum(w[far][order]))), 0.0, 1.0)
    if floor is not None:
        vals = np.maximum(np.maximum.accumulate(vals), floor)
    return knots, vals


def _profile_tail(w, d, t_max, raw_end, floor) -> float:
    """Exact ``int_{t_max}^inf (1 - F(t)) dt`` for the step continuation of a profile."""
    knots, vals = _tail_steps(w, d, t_max, raw_end, floor)
    return float(np.sum((1.0 - vals[:-1]) * np.diff(knots)))


@dataclass(frozen=True)
class _Queries:
    """Profiles of query objects plus what is needed to continue them past t_max."""

    curves: np.ndarray
    W: np.ndarray
    D: np.ndarray
    raw_end: np.ndarray
    tails: np.ndarray


@dataclass(frozen=True, eq=False)
class ProfileTable:
    """Fitted profiles and costs of the training sample.

    Building the table costs ``O(n^2 * n_t)`` time: one profile per training
    point, then one cost per training point against every profile inside its
    kernel window.
    """

    space: MetricSpace
    X: np.ndarray
    Y: np.ndarray
    kernel: KernelSpec
    grid: TGrid
    curves: np.ndarray
    costs: np.ndarray
    monotone: bool = False
    diagnostics: dict[str, Any] = field(default_factory=dict)
    quantile_means: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.X)

    # -- building blocks ----------------------------------------------------

    def _weights(self, xs) -> np.ndarray:
        W, h = weight_matrix(xs, self.X, self.kernel)
        return W

    def _query(self, omegas, xs) -> _Queries:
        omegas = self.space.as_points(omegas)
        xs = _broadcast_x(xs, len(omegas))
        W = self._weights(xs)
        D = self.space.pairwise(omegas, self.Y)
        return _build_queries(W, D, self.grid, self.monotone)

    def _costs(self, q: _Queries) -> np.ndarray:
        return _smoothed_costs(q.curves, q.W, q.tails, self.curves, self.grid.dt)

    # -- public estimators --------------------------------------------------

    def profiles(self, omegas, xs) -> np.ndarray:
        """Profiles ``F(omega_q, x_q)`` on the t-grid, shape ``(m, n_t)``."""
        return self._query(omegas, xs).curves

    def cpc(self, omegas, xs) -> np.ndarray:
        """Profile average transport costs ``C(omega_q | x_q)``."""
        return self._costs(self._query(omegas, xs))

    def cps(self, z, xs) -> np.ndarray:
        """Profile scores ``S(z_q | x_q)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
        xs = np.atleast_1d(np.asarray(xs, dtype=float)).ravel()
        z, xs = np.broadcast_arrays(z, xs)
        return _smoothed_cdf(self._weights(xs), self.costs, z)

    def scores(self, omegas, xs) -> np.ndarray:
        """Conformity scores ``S(C(omega_q | x_q) | x_q)``."""
        q = self._query(omegas, xs)
        return _smoothed_cdf(q.W, self.costs, self._costs(q))

    def transport_rank(self, omegas, xs) -> np.ndarray:
        """Conditional transport ranks in (0, 1); larger means more central."""
        q = self._query(omegas, xs)
        qbar = _quantile_means(q, self.grid, self.monotone)
        H = q.W @ self.quantile_means - qbar
        return _expit(H)


def _expit(h):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(h, dtype=float)))


def _broadcast_x(xs, m: int) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(xs, dtype=float)).ravel()
    if len(xs) == 1 and m != 1:
        xs = np.full(m, xs[0])
    if len(xs) != m:
        raise ValueError(f"got {m} objects but {len(xs)} covariates")
    return xs


def _build_queries(W, D, grid: TGrid, monotone: bool) -> _Queries:
    raw = _step_curves(W, D, grid.nodes)
    curves = _finish_curves(raw, monotone)
    tails = np.zeros(len(W))
    reach = np.where(W != 0, D, 0.0).max(axis=1)
    for q in np.flatnonzero(reach > grid.t_max):
        floor = curves[q, -1] if monotone else None
        tails[q] = _profile_tail(W[q], D[q], grid.t_max, raw[q, -1], floor)
    return _Queries(curves, W, D, raw[:, -1], tails)


def _smoothed_costs(Fq, Wq, tails, Ftab, dt) -> np.ndarray:
    """``max(0, sum_k W[q, k] J[q, k])`` with J the profile W1 distances.

    Only table profiles with nonzero weight are touched; queries are
    processed in covariate-sorted chunks so that windows overlap.
    """
    m, n_t = Fq.shape
    out = np.empty(m)
    nz = Wq != 0
    # sort by the first supported column, a proxy for the target covariate
    order = np.argsort(np.argmax(nz, axis=1), kind="stable")
    start = 0
    while start < m:
        stop = start + 1
        cols = nz[order[start]]
        # grow the chunk while the element budget allows
        while stop < m:
            nxt = cols | nz[order[stop]]
            if (stop + 1 - start) * int(nxt.sum()) * n_t > CHUNK_ELEMENTS:
                break
            cols = nxt
            stop += 1
        idx = order[start:stop]
        cidx = np.flatnonzero(cols)
        J = _trapezoid_abs(Fq[idx][:, None, :] - Ftab[cidx][None, :, :], dt)
        # table profiles equal 1 beyond t_max, so the query tail adds (1 - F)
        J += tails[idx][:, None]
        out[idx] = np.einsum("ij,ij->i", Wq[idx][:, cidx], J)
        start = stop
    return np.maximum(out, 0.0)


def _smoothed_cdf(W, costs, z) -> np.ndarray:
    """``clip(sum_k W[q, k] 1{costs[k] <= z[q]}, 0, 1)``, via sorted cumulative weights."""
    order = np.argsort(costs, kind="stable")
    sorted_costs = costs[order]
    cum = np.cumsum(W[:, order], axis=1)
    pos = np.searchsorted(sorted_costs, z, side="right")
    vals = np.where(pos > 0, cum[np.arange(len(z)), np.maximum(pos - 1, 0)], 0.0)
    return np.clip(vals, 0.0, 1.0)


def _invert_curves(curves: np.ndarray, nodes: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Piecewise-linear inverse on ``levels``; flat stretches resolve to their left end.

    Levels never reached on the grid are returned as NaN.
    """
    running = np.maximum.accumulate(curves, axis=1)
    idx = (running[:, :, None] < levels[None, None, :]).sum(axis=1)
    n_t = len(nodes)
    dt = nodes[1] - nodes[0]
    out = np.full(idx.shape, np.nan)
    out[idx == 0] = 0.0
    inner = (idx > 0) & (idx < n_t)
    r, lvl = np.nonzero(inner)
    i = idx[r, lvl]
    lo, hi = curves[r, i - 1], curves[r, i]
    frac = (levels[lvl] - lo) / np.where(hi > lo, hi - lo, 1.0)
    out[r, lvl] = nodes[i - 1] + np.clip(frac, 0.0, 1.0) * dt
    return out


def rank_levels(n: int = RANK_LEVELS) -> np.ndarray:
    return (np.arange(1, n + 1) - 0.5) / n


def _quantile_means(q: _Queries, grid: TGrid, monotone: bool) -> np.ndarray:
    levels = rank_levels()
    Q = _invert_curves(q.curves, grid.nodes, levels)
    for r in np.flatnonzero(np.isnan(Q).any(axis=1)):
        floor = q.curves[r, -1] if monotone else None
        knots, vals = _tail_steps(q.W[r], q.D[r], grid.t_max, q.raw_end[r], floor)
        miss = np.isnan(Q[r])
        pos = np.searchsorted(np.maximum.accumulate(vals), levels[miss], side="left")
        Q[r, miss] = knots[np.minimum(pos, len(knots) - 1)]
    return Q.mean(axis=1)


# -- fitting -------------------------------------------------------------------


def fit_profile_table(
    space: MetricSpace,
    X,
    Y,
    kernel: KernelSpec,
    grid: TGrid | None = None,
    n_t: int = 101,
    monotone: bool = False,
) -> ProfileTable:
    """Profiles and costs of every training pair.

    When ``grid`` is omitted it spans 1.05 times the training diameter.
    """
    X = np.asarray(X, dtype=float).ravel()
    Y = space.as_points(Y)
    if len(X) != len(Y):
        raise ValueError(f"{len(X)} covariates but {len(Y)} objects")
    if len(X) < 2:
        raise ValueError("need at least two training pairs")
    D = space.pairwise(Y, Y)
    if grid is None:
        grid = TGrid.for_diameter(float(D.max()), n_t)
    W, h_used = weight_matrix(X, X, kernel)
    q = _build_queries(W, D, grid, monotone)
    costs = _smoothed_costs(q.curves, W, q.tails, q.curves, grid.dt)
    qbar = _quantile_means(q, grid, monotone)
    diagnostics = {
        "widened": int(np.sum(h_used > kernel.h)),
        "max_bandwidth": float(h_used.max()),
        "diameter": float(D.max()),
    }
    return ProfileTable(space, X, Y, kernel, grid, q.curves, costs, monotone, diagnostics, qbar)


# -- single-query conveniences -----------------------------------------------------


def estimate_profile(table: ProfileTable, omega, x: float) -> np.ndarray:
    return table.profiles(table.space.as_point(omega)[None], [x])[0]


def estimate_cpc(table: ProfileTable, omega, x: float) -> float:
    return float(table.cpc(table.space.as_point(omega)[None], [x])[0])


def estimate_cps(table: ProfileTable, z: float, x: float) -> float:
    return float(table.cps([z], [x])[0])


def conditional_transport_rank(table: ProfileTable, omega, x: float) -> float:
    return float(table.transport_rank(table.space.as_point(omega)[None], [x])[0])
