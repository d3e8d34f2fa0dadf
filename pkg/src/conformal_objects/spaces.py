"""Object spaces: distances, weighted Fréchet means and candidate grids.

Points are plain numpy arrays. A collection of ``n`` points is an array of
shape ``(n, *space.point_shape)``:

=============  ==================  ==========================================
space          point shape         encoding
=============  ==================  ==========================================
Euclidean(k)   ``(k,)``            coordinates
Sphere2        ``(3,)``            unit vector
Wasserstein1D  ``(m,)``            quantiles at levels ``(j - 1/2) / m``
Network(k)     ``(k, k)``          adjacency matrix with entries in [0, 1]
Spider3        ``(2,)``            ``(ray, length)`` with ray in {1, 2, 3}
=============  ==================  ==========================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, ClassVar, Sequence

import numpy as np
from scipy import stats

from .errors import ConvergenceError, InvalidPointError, SpaceError

POINT_TOL = 1e-12
UNIT_TOL = 1e-9


class MetricSpace:
    """Base class for object spaces."""

    kind: ClassVar[str] = ""
    has_mean: ClassVar[bool] = False
    has_grid: ClassVar[bool] = False

    @property
    def point_shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    # -- validation -----------------------------------------------------

    def as_points(self, points: Any) -> np.ndarray:
        """Coerce to an array of shape ``(n, *point_shape)`` and validate."""
        arr = np.asarray(points, dtype=float)
        shape = self.point_shape
        if arr.shape == shape:
            arr = arr[None, ...]
        if arr.ndim != len(shape) + 1 or arr.shape[1:] != shape:
            raise SpaceError(
                f"{self.kind}: expected points of shape {shape}, got array of shape {arr.shape}"
            )
        bad = self.invalid_rows(arr)
        if bad.size:
            i = int(bad[0])
            raise InvalidPointError(f"{self.kind}: point {i} {self.describe_violation(arr[i])}", index=i)
        return arr

    def as_point(self, point: Any) -> np.ndarray:
        return self.as_points(point)[0]

    def invalid_rows(self, arr: np.ndarray) -> np.ndarray:
        flat = arr.reshape(len(arr), -1)
        return np.flatnonzero(~np.all(np.isfinite(flat), axis=1))

    def describe_violation(self, point: np.ndarray) -> str:
        return "has non-finite coordinates"

    # -- metric ---------------------------------------------------------

    def pairwise(self, a: Any, b: Any) -> np.ndarray:
        """Distance matrix of shape ``(len(a), len(b))``."""
        raise NotImplementedError

    def distance(self, a: Any, b: Any) -> float:
        return float(self.pairwise(self.as_point(a)[None], self.as_point(b)[None])[0, 0])

    def diameter(self, points: Any) -> float:
        """Largest pairwise distance within ``points``."""
        pts = self.as_points(points)
        return float(self.pairwise(pts, pts).max())

    # -- optional capabilities -----------------------------------------

    def frechet_mean(self, points: Any, weights: Any) -> np.ndarray:
        raise SpaceError(f"{self.kind} has no Fréchet mean")

    def frechet_means(self, points: Any, W: Any) -> np.ndarray:
        """One weighted mean per row of the weight matrix ``W``."""
        pts = self.as_points(points)
        return np.stack([self.frechet_mean(pts, w) for w in np.atleast_2d(W)])

    def candidate_grid(self, resolution: int, bounds: Any = None) -> np.ndarray:
        raise SpaceError(f"{self.kind} has no candidate grid")

    def cell_measure(self, grid: np.ndarray) -> np.ndarray | None:
        """Per-candidate volume for grids built by :meth:`candidate_grid`, if meaningful."""
        return None

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind}

    def encode_point(self, point: np.ndarray) -> list[float]:
        """Flat row encoding used in dataset files."""
        return [float(v) for v in np.asarray(point, dtype=float).ravel()]

    def decode_rows(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows, dtype=float).reshape((len(rows),) + self.point_shape)

    @property
    def encoded_width(self) -> int:
        return int(np.prod(self.point_shape))

    def column_names(self) -> list[str]:
        return [f"y{i}" for i in range(self.encoded_width)]


def _check_weights(weights: Any, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be strictly positive")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError(f"weights must sum to 1 (got {w.sum():.12g})")
    return w


@dataclass(frozen=True)
class Euclidean(MetricSpace):
    k: int = 1

    kind: ClassVar[str] = "euclidean"
    has_mean: ClassVar[bool] = True
    has_grid: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise SpaceError("Euclidean dimension must be positive")

    @property
    def point_shape(self) -> tuple[int, ...]:
        return (self.k,)

    def pairwise(self, a, b):
        a = np.asarray(a, dtype=float).reshape(-1, self.k)
        b = np.asarray(b, dtype=float).reshape(-1, self.k)
        if self.k == 1:
            return np.abs(a[:, 0][:, None] - b[:, 0][None, :])
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def frechet_mean(self, points, weights):
        pts = self.as_points(points)
        w = _check_weights(weights, len(pts))
        return w @ pts

    def candidate_grid(self, resolution, bounds=None):
        """Product grid with ``resolution`` nodes per axis.

        ``bounds`` is ``(lo, hi)`` for k = 1 or a sequence of k such pairs.
        """
        if resolution < 1:
            raise ValueError("resolution must be positive")
        if bounds is None:
            raise ValueError("Euclidean grid needs bounds")
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if len(b) == 1 and self.k > 1:
            b = np.repeat(b, self.k, axis=0)
        if len(b) != self.k:
            raise ValueError(f"need {self.k} (lo, hi) pairs, got {len(b)}")
        axes = [np.linspace(lo, hi, resolution) for lo, hi in b]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_measure(self, grid):
        grid = np.asarray(grid, dtype=float).reshape(-1, self.k)
        vol = 1.0
        for j in range(self.k):
            u = np.unique(grid[:, j])
            if len(u) < 2:
                return None
            vol *= float(u[1] - u[0])
        return np.full(len(grid), vol)

    def to_dict(self):
        return {"kind": self.kind, "k": self.k}


@dataclass(frozen=True)
class Sphere2(MetricSpace):
    """Unit sphere in R^3 with the geodesic (great-circle) distance."""

    max_iter: int = 100
    tol: float = 1e-9

    kind: ClassVar[str] = "sphere2"
    has_mean: ClassVar[bool] = True
    has_grid: ClassVar[bool] = True

    @property
    def point_shape(self):
        return (3,)

    def invalid_rows(self, arr):
        bad = super().invalid_rows(arr)
        norms = np.linalg.norm(arr, axis=1)
        return np.union1d(bad, np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL))

    def describe_violation(self, point):
        if not np.all(np.isfinite(point)):
            return "has non-finite coordinates"
        return f"is not a unit vector (norm {np.linalg.norm(point):.6g})"

    def pairwise(self, a, b):
        a = np.asarray(a, dtype=float).reshape(-1, 3)
        b = np.asarray(b, dtype=float).reshape(-1, 3)
        return np.arccos(np.clip(a @ b.T, -1.0, 1.0))

    def frechet_mean(self, points, weights):
        """Intrinsic weighted mean by the tangent-space fixed-point iteration.

        Starts from the normalized chordal mean; negative weights enter the
        tangent average unchanged.
        """
        pts = self.as_points(points)
        w = _check_weights(weights, len(pts))
        active = w != 0
        pts, w = pts[active], w[active]
        if len(pts) == 1:
            return pts[0].copy()
        chord = w @ pts
        norm = np.linalg.norm(chord)
        p = chord / norm if norm > 1e-12 else pts[int(np.argmax(w))].copy()
        for _ in range(self.max_iter):
            v = w @ log_map_rows(p, pts)
            step = np.linalg.norm(v)
            p = exp_map_sphere(p, v)
            if step < self.tol:
                return p
        raise ConvergenceError(
            f"sphere Fréchet mean did not converge in {self.max_iter} iterations (last step {step:.3g})"
        )

    def frechet_means(self, points, W):
        """Row-wise weighted means, iterating all rows together; agrees with :meth:`frechet_mean`."""
        pts = self.as_points(points)
        W = np.atleast_2d(np.asarray(W, dtype=float))
        for w in W:
            _check_weights(w, len(pts))
        chord = W @ pts
        norm = np.linalg.norm(chord, axis=1, keepdims=True)
        P = np.where(norm > 1e-12, chord / np.maximum(norm, 1e-300), pts[np.argmax(W, axis=1)])
        single = np.count_nonzero(W, axis=1) == 1
        P[single] = pts[np.argmax(W[single] != 0, axis=1)]
        todo = ~single
        for _ in range(self.max_iter):
            if not todo.any():
                return P
            Pa, Wa = P[todo], W[todo]
            c = np.clip(pts @ Pa.T, -1.0, 1.0)  # (n, rows)
            theta = np.arccos(c)
            if np.any((theta > np.pi - 1e-6) & (Wa.T != 0)):
                raise SpaceError("log map undefined for (near-)antipodal points")
            U = pts[:, None, :] - c[..., None] * Pa[None, :, :]
            nu = np.linalg.norm(U, axis=2)
            scale = np.divide(theta, nu, out=np.zeros_like(theta), where=nu > 1e-300)
            V = np.einsum("rn,nrk->rk", Wa, U * scale[..., None])
            step = np.linalg.norm(V, axis=1, keepdims=True)
            Q = np.cos(step) * Pa + np.sinc(step / np.pi) * V
            P[todo] = Q / np.linalg.norm(Q, axis=1, keepdims=True)
            idx = np.flatnonzero(todo)
            todo[idx[step[:, 0] < self.tol]] = False
        if todo.any():
            raise ConvergenceError(f"sphere Fréchet mean did not converge in {self.max_iter} iterations")
        return P

    def candidate_grid(self, resolution, bounds=None):
        """Product grid over polar angles k*pi/L and azimuths 2*k*pi/L, k = 1..L."""
        L = int(resolution)
        if L < 1:
            raise ValueError("resolution must be positive")
        k = np.arange(1, L + 1)
        theta = k * np.pi / L
        phi = 2 * k * np.pi / L
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        th, ph = th.ravel(), ph.ravel()
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)

    def cell_measure(self, grid):
        grid = np.asarray(grid, dtype=float).reshape(-1, 3)
        L = int(round(math.sqrt(len(grid))))
        if L * L != len(grid):
            return None
        theta = np.arccos(np.clip(grid[:, 2], -1.0, 1.0))
        return np.sin(theta) * (np.pi / L) * (2 * np.pi / L)


@dataclass(frozen=True)
class Wasserstein1D(MetricSpace):
    """One-dimensional distributions stored as quantile grids.

    The distance is the 2-Wasserstein distance, i.e. the root mean square
    difference of the quantile values.
    """

    m: int = 100
    support: tuple[float, float] | None = (0.0, 1.0)

    kind: ClassVar[str] = "wasserstein1d"
    has_mean: ClassVar[bool] = True
    has_grid: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if self.m < 2:
            raise SpaceError("quantile grid needs at least two levels")
        if self.support is not None:
            lo, hi = self.support
            object.__setattr__(self, "support", (float(lo), float(hi)))
            if not lo < hi:
                raise SpaceError("support must satisfy lo < hi")

    @property
    def point_shape(self):
        return (self.m,)

    @property
    def levels(self) -> np.ndarray:
        return quantile_levels(self.m)

    def invalid_rows(self, arr):
        bad = super().invalid_rows(arr)
        dec = np.any(np.diff(arr, axis=1) < -POINT_TOL, axis=1)
        bad = np.union1d(bad, np.flatnonzero(dec))
        if self.support is not None:
            lo, hi = self.support
            out = np.any((arr < lo - POINT_TOL) | (arr > hi + POINT_TOL), axis=1)
            bad = np.union1d(bad, np.flatnonzero(out))
        return bad

    def describe_violation(self, point):
        if not np.all(np.isfinite(point)):
            return "has non-finite coordinates"
        d = np.flatnonzero(np.diff(point) < -POINT_TOL)
        if d.size:
            j = int(d[0])
            return f"is decreasing between quantile indices {j} and {j + 1}"
        return f"has values outside the support {self.support}"

    def pairwise(self, a, b):
        a = np.asarray(a, dtype=float).reshape(-1, self.m)
        b = np.asarray(b, dtype=float).reshape(-1, self.m)
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
        d = np.sqrt(np.maximum(sq, 0.0) / self.m)
        # the expansion above loses precision for near-identical rows
        close = d < 1e-6
        if np.any(close):
            ii, jj = np.nonzero(close)
            diff = a[ii] - b[jj]
            d[ii, jj] = np.sqrt(np.mean(diff * diff, axis=1))
        return d

    def project(self, values: np.ndarray) -> np.ndarray:
        """Running-maximum monotone projection, clipped to the support."""
        out = np.maximum.accumulate(np.asarray(values, dtype=float), axis=-1)
        if self.support is not None:
            out = np.clip(out, *self.support)
        return out

    def frechet_mean(self, points, weights):
        pts = self.as_points(points)
        w = _check_weights(weights, len(pts))
        return self.project(w @ pts)

    def candidate_grid(self, resolution, bounds=None):
        """Normal (truncated to the support, if any) quantile curves on a (mean, sd) grid.

        ``bounds`` is ``((mean_lo, mean_hi), (sd_lo, sd_hi))``; the grid has
        ``resolution**2`` curves.
        """
        if bounds is None:
            lo, hi = self.support if self.support is not None else (-1.0, 1.0)
            bounds = ((lo, hi), (0.1 * (hi - lo), 0.5 * (hi - lo)))
        (mlo, mhi), (slo, shi) = bounds
        if slo <= 0:
            raise ValueError("sd bounds must be positive")
        means = np.linspace(mlo, mhi, resolution)
        sds = np.linspace(slo, shi, resolution)
        mu, sd = np.meshgrid(means, sds, indexing="ij")
        return normal_quantiles(mu.ravel(), sd.ravel(), self.m, self.support)

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "support": None if self.support is None else list(self.support)}


@dataclass(frozen=True)
class Network(MetricSpace):
    """k x k weighted adjacency matrices in [0, 1] under the Frobenius metric."""

    k: int = 2

    kind: ClassVar[str] = "network"
    has_mean: ClassVar[bool] = True
    has_grid: ClassVar[bool] = True

    @property
    def point_shape(self):
        return (self.k, self.k)

    def invalid_rows(self, arr):
        bad = super().invalid_rows(arr)
        flat = arr.reshape(len(arr), -1)
        out = np.any((flat < -POINT_TOL) | (flat > 1 + POINT_TOL), axis=1)
        return np.union1d(bad, np.flatnonzero(out))

    def describe_violation(self, point):
        if not np.all(np.isfinite(point)):
            return "has non-finite coordinates"
        return "has entries outside [0, 1]"

    def pairwise(self, a, b):
        a = np.asarray(a, dtype=float).reshape(-1, self.k * self.k)
        b = np.asarray(b, dtype=float).reshape(-1, self.k * self.k)
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
        d = np.sqrt(np.maximum(sq, 0.0))
        close = d < 1e-6
        if np.any(close):
            ii, jj = np.nonzero(close)
            diff = a[ii] - b[jj]
            d[ii, jj] = np.sqrt(np.sum(diff * diff, axis=1))
        return d

    def frechet_mean(self, points, weights):
        pts = self.as_points(points)
        w = _check_weights(weights, len(pts))
        # negative local-linear weights can leave the unit box
        return np.clip(np.tensordot(w, pts, axes=1), 0.0, 1.0)

    def candidate_grid(self, resolution, bounds=None):
        """Networks have no natural grid: ``bounds`` is the user-supplied candidate list."""
        if bounds is None:
            raise ValueError("Network candidates must be supplied explicitly")
        return self.as_points(bounds)

    def to_dict(self):
        return {"kind": self.kind, "k": self.k}


@dataclass(frozen=True)
class Spider3(MetricSpace):
    """Tree space with three leaves: three half-lines glued at the origin."""

    kind: ClassVar[str] = "spider3"

    @property
    def point_shape(self):
        return (2,)

    def invalid_rows(self, arr):
        bad = super().invalid_rows(arr)
        ray_ok = np.isin(arr[:, 0], (1.0, 2.0, 3.0))
        return np.union1d(bad, np.flatnonzero(~ray_ok | (arr[:, 1] < 0)))

    def describe_violation(self, point):
        return f"is not a valid (ray, length) pair: {tuple(point)}"

    def pairwise(self, a, b):
        a = np.asarray(a, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        same = a[:, 0][:, None] == b[:, 0][None, :]
        la, lb = a[:, 1][:, None], b[:, 1][None, :]
        return np.where(same, np.abs(la - lb), la + lb)

    def column_names(self):
        return ["ray", "length"]


SPACE_KINDS: dict[str, type[MetricSpace]] = {
    cls.kind: cls for cls in (Euclidean, Sphere2, Wasserstein1D, Network, Spider3)
}


def space_from_dict(desc: dict[str, Any]) -> MetricSpace:
    """Inverse of ``MetricSpace.to_dict``."""
    try:
        kind = str(desc["kind"]).lower()
    except (KeyError, TypeError):
        raise SpaceError(f"space descriptor needs a 'kind': {desc!r}") from None
    if kind == "euclidean":
        return Euclidean(int(desc.get("k", 1)))
    if kind == "sphere2":
        return Sphere2()
    if kind == "wasserstein1d":
        support = desc.get("support", (0.0, 1.0))
        return Wasserstein1D(int(desc.get("m", 100)), None if support is None else tuple(support))
    if kind == "network":
        return Network(int(desc["k"]))
    if kind == "spider3":
        return Spider3()
    raise SpaceError(f"unknown space kind {kind!r}")


# -- module-level conveniences ------------------------------------------------


def distance(space: MetricSpace, a, b) -> float:
    return space.distance(a, b)


def frechet_mean(space: MetricSpace, points, weights) -> np.ndarray:
    if not space.has_mean:
        raise SpaceError(f"{space.kind} has no Fréchet mean")
    return space.frechet_mean(points, weights)


def candidate_grid(space: MetricSpace, resolution: int, bounds=None) -> np.ndarray:
    if not space.has_grid:
        raise SpaceError(f"{space.kind} has no candidate grid")
    return space.candidate_grid(resolution, bounds)


# -- sphere geometry ----------------------------------------------------------


def exp_map_sphere(p, v) -> np.ndarray:
    """Riemannian exponential map on the unit sphere."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(p) - 1.0) > UNIT_TOL:
        raise InvalidPointError("base point is not a unit vector")
    if abs(float(v @ p)) > UNIT_TOL:
        raise InvalidPointError("v is not tangent at p")
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return p.copy()
    q = np.cos(nv) * p + np.sin(nv) / nv * v
    return q / np.linalg.norm(q)


def log_map_sphere(p, q) -> np.ndarray:
    """Inverse of :func:`exp_map_sphere`; undefined for antipodal points."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    for name, u in (("p", p), ("q", q)):
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise InvalidPointError(f"{name} is not a unit vector")
    return log_map_rows(p, q[None])[0]


def log_map_rows(p: np.ndarray, qs: np.ndarray) -> np.ndarray:
    c = qs @ p
    u = qs - c[:, None] * p[None, :]
    u -= (u @ p)[:, None] * p[None, :]  # second pass removes rounding drift off the tangent plane
    nu = np.linalg.norm(u, axis=1)
    # atan2 keeps full precision for nearly coincident points, where arccos does not
    theta = np.arctan2(nu, c)
    if np.any(theta > np.pi - 1e-6):
        raise SpaceError("log map undefined for (near-)antipodal points")
    scale = np.divide(theta, nu, out=np.zeros_like(theta), where=nu > 1e-300)
    return u * scale[:, None]


# -- quantile grids and transport maps ------------------------------------------


def quantile_levels(m: int) -> np.ndarray:
    """Midpoint levels (j - 1/2) / m, j = 1..m."""
    return (np.arange(1, m + 1) - 0.5) / m


def normal_quantiles(mean, sd, m: int, support: tuple[float, float] | None = None) -> np.ndarray:
    """Quantile grids of N(mean, sd), truncated to ``support`` when given."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))[:, None]
    sd = np.atleast_1d(np.asarray(sd, dtype=float))[:, None]
    u = quantile_levels(m)[None, :]
    if support is None:
        return mean + sd * stats.norm.ppf(u)
    lo, hi = support
    a, b = (lo - mean) / sd, (hi - mean) / sd
    return stats.truncnorm.ppf(u, a, b, loc=mean, scale=sd)


def _transport_knots(T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grid values of a transport map anchored at T(0) = 0 and T(1) = 1."""
    u = quantile_levels(len(T))
    return np.concatenate(([0.0], u, [1.0])), np.concatenate(([0.0], T, [1.0]))


def _check_transport(T, name: str) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.ndim != 1 or len(T) < 2:
        raise ValueError(f"{name} must be a 1-d quantile grid")
    if np.any(np.diff(T) < -POINT_TOL):
        raise InvalidPointError(f"{name} is not monotone")
    if np.any((T < -POINT_TOL) | (T > 1 + POINT_TOL)):
        raise InvalidPointError(f"{name} has values outside [0, 1]")
    return T


def transport_add(T1, T2) -> np.ndarray:
    """``T1 (+) T2 = T2 o T1`` on a shared midpoint grid.

    T2 is evaluated at the values of T1 by linear interpolation between its
    grid values and the fixed endpoints.
    """
    T1 = _check_transport(T1, "T1")
    T2 = _check_transport(T2, "T2")
    if T1.shape != T2.shape:
        raise ValueError("transport maps must share a grid")
    xs, ys = _transport_knots(T2)
    return np.maximum.accumulate(np.interp(T1, xs, ys))


def transport_inverse(T) -> np.ndarray:
    """Grid values of the inverse map, by interpolation."""
    T = _check_transport(T, "T")
    xs, ys = _transport_knots(T)
    # flat pieces of T make xs/ys non-strict; interp tolerates ties in ys
    return np.interp(quantile_levels(len(T)), ys, xs)


def transport_scale(alpha: float, T) -> np.ndarray:
    """Scalar multiple ``alpha (.) T`` for |alpha| <= 1."""
    if not -1.0 <= alpha <= 1.0:
        raise ValueError(f"|alpha| must be at most 1, got {alpha}")
    T = _check_transport(T, "T")
    x = quantile_levels(len(T))
    if alpha > 0:
        return x + alpha * (T - x)
    if alpha == 0:
        return x.copy()
    return x + alpha * (x - transport_inverse(T))


def identity_transport(m: int) -> np.ndarray:
    return quantile_levels(m)
