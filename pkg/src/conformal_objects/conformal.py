"""Split-conformal calibration and prediction sets over profile scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import NoLocalDataError
from .profiles import ProfileTable, TGrid, fit_profile_table
from .smoothing import KernelSpec, rule_of_thumb_bandwidth

SCORE_KINDS = ("cps", "rank")


@dataclass(frozen=True, eq=False)
class SplitPlan:
    train: np.ndarray
    calib: np.ndarray
    seed: int
    ratio: float = 0.5

    def equals(self, other: "SplitPlan") -> bool:
        return (np.array_equal(self.train, other.train) and np.array_equal(self.calib, other.calib)
                and self.seed == other.seed and self.ratio == other.ratio)


def make_split(n: int, seed: int, ratio: float = 0.5) -> SplitPlan:
    """Random split with ``round(ratio * n)`` training indices (sorted within each half)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must be in (0, 1)")
    n_train = min(max(int(round(ratio * n)), 2), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return SplitPlan(np.sort(perm[:n_train]), np.sort(perm[n_train:]), int(seed), float(ratio))


def order_statistic_rank(n_cal: int, alpha: float) -> int:
    """``k = ceil((1 - alpha)(n_cal + 1))``, with alpha read as a short decimal."""
    a = Fraction(alpha).limit_denominator(10**6)
    return math.ceil((1 - a) * (n_cal + 1))


def conformal_quantile(scores, alpha: float) -> float:
    """k-th smallest calibration score, or +inf when ``k > n_cal``."""
    s = np.sort(np.asarray(scores, dtype=float))
    k = order_statistic_rank(len(s), alpha)
    return float(s[k - 1]) if k <= len(s) else math.inf


@dataclass(frozen=True, eq=False)
class ConformalModel:
    """Training-half estimators plus the calibrated threshold.

    ``theta`` is set for single-index models; multivariate covariates are
    then projected onto it before scoring.
    """

    table: ProfileTable
    cal_x: np.ndarray
    cal_Y: np.ndarray
    cal_scores: np.ndarray
    threshold: float
    alpha: float
    plan: SplitPlan | None = None
    score_kind: str = "cps"
    theta: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def space(self):
        return self.table.space

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.theta is None:
            if X.ndim == 2:
                if X.shape[1] != 1:
                    raise ValueError(f"model takes scalar covariates, got {X.shape[1]} columns")
                X = X[:, 0]
            return np.atleast_1d(X)
        X = np.atleast_2d(X)
        if X.shape[1] != len(self.theta):
            if X.size == len(self.theta):
                X = X.reshape(1, -1)
            else:
                raise ValueError(f"model takes {len(self.theta)} covariates, got {X.shape[1]}")
        return X @ self.theta

    def score(self, omegas, x) -> np.ndarray:
        """Conformity scores of objects at (scalar, already projected) covariates."""
        if self.score_kind == "cps":
            return self.table.scores(omegas, x)
        return 1.0 - self.table.transport_rank(omegas, x)

    def with_alpha(self, alpha: float) -> "ConformalModel":
        return replace(self, alpha=alpha, threshold=conformal_quantile(self.cal_scores, alpha))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")


def _calibration_scores(table, cal_x, cal_Y, score_kind) -> np.ndarray:
    probe = ConformalModel(table, cal_x, cal_Y, np.empty(0), math.inf, 0.5, score_kind=score_kind)
    try:
        return probe.score(cal_Y, cal_x)
    except NoLocalDataError as exc:
        raise NoLocalDataError(f"calibration point {exc.index}: {exc}", x=exc.x, index=exc.index) from exc


def split_fit(
    data: Dataset,
    kernel: KernelSpec | None = None,
    alpha: float = 0.1,
    seed: int = 0,
    *,
    n_t: int = 101,
    t_max: float | None = None,
    split_ratio: float = 0.5,
    kernel_family: str = "epanechnikov",
    bandwidth_c: float = 1.0,
    monotone: bool = False,
    score_kind: str = "cps",
) -> ConformalModel:
    """Split, fit profiles on the training half, calibrate on the other half.

    ``kernel=None`` picks the rule-of-thumb bandwidth on the training covariates.
    """
    _check_alpha(alpha)
    if score_kind not in SCORE_KINDS:
        raise ValueError(f"score kind must be one of {SCORE_KINDS}")
    if data.n < 4:
        raise ValueError("split conformal needs at least four pairs")
    x = data.x
    plan = make_split(data.n, seed, split_ratio)
    x_tr, Y_tr = x[plan.train], data.Y[plan.train]
    if kernel is None:
        kernel = KernelSpec(kernel_family, rule_of_thumb_bandwidth(x_tr, bandwidth_c))
    grid = TGrid(t_max, n_t) if t_max is not None else None
    table = fit_profile_table(data.space, x_tr, Y_tr, kernel, grid, n_t=n_t, monotone=monotone)
    cal_x, cal_Y = x[plan.calib], data.Y[plan.calib]
    scores = _calibration_scores(table, cal_x, cal_Y, score_kind)
    return ConformalModel(table, cal_x, cal_Y, scores, conformal_quantile(scores, alpha), alpha, plan, score_kind)


def calibrate_rank(model: ConformalModel) -> ConformalModel:
    """Same split and training fit, recalibrated with ``1 - transport rank`` as the score."""
    scores = _calibration_scores(model.table, model.cal_x, model.cal_Y, "rank")
    return replace(model, cal_scores=scores, threshold=conformal_quantile(scores, model.alpha),
                   score_kind="rank")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    x: float
    candidates: np.ndarray
    scores: np.ndarray
    members: np.ndarray
    threshold: float
    cell_measure: np.ndarray | None = None

    @property
    def count(self) -> int:
        return int(self.members.sum())

    @property
    def measure(self) -> float | None:
        """Lebesgue length (Euclidean(1)), area/volume, or solid angle (Sphere2) of the set."""
        if self.cell_measure is None:
            return None
        return float(self.cell_measure[self.members].sum())

    @property
    def size(self) -> float:
        m = self.measure
        return float(self.count) if m is None else m

    def runs(self) -> int:
        """Number of maximal runs of consecutive members (for 1-d grids)."""
        m = self.members.astype(int)
        return int(m[0] + np.count_nonzero(np.diff(m) == 1)) if len(m) else 0

    def hull_measure(self) -> float | None:
        """Length of the interval spanned by the members (1-d grids)."""
        if self.cell_measure is None or not self.members.any():
            return None
        idx = np.flatnonzero(self.members)
        return float(self.cell_measure[idx[0]:idx[-1] + 1].sum())


def _as_scalar_x(model: ConformalModel, x) -> float:
    arr = np.asarray(x, dtype=float).ravel()
    if model.theta is None:
        if arr.size != 1:
            raise ValueError(f"model takes a scalar covariate, got {arr.size} values")
        return float(arr[0])
    return float(model.project(arr.reshape(1, -1))[0])


def predict_set(model: ConformalModel, x, candidates, alpha: float | None = None) -> PredictionSet:
    """Score every candidate at ``x``; members score at most the threshold."""
    if alpha is not None and alpha != model.alpha:
        model = model.with_alpha(alpha)
    cand = model.space.as_points(candidates)
    if len(cand) == 0:
        raise ValueError("need at least one candidate")
    xs = _as_scalar_x(model, x)
    scores = model.score(cand, xs)
    return PredictionSet(xs, cand, scores, scores <= model.threshold, model.threshold,
                         model.space.cell_measure(cand))


def rank_based_set(model: ConformalModel, x, candidates) -> PredictionSet:
    """Prediction set with transport ranks as the conformity score."""
    if model.score_kind != "rank":
        model = calibrate_rank(model)
    return predict_set(model, x, candidates)


def prediction_sets(model: ConformalModel, xs, candidates) -> list[PredictionSet]:
    """Sets at several (scalar, projected) covariates over one candidate list, scored in one batch."""
    cand = model.space.as_points(candidates)
    xs = np.atleast_1d(np.asarray(xs, dtype=float)).ravel()
    omegas = np.tile(cand, (len(xs),) + (1,) * (cand.ndim - 1))
    scores = model.score(omegas, np.repeat(xs, len(cand))).reshape(len(xs), len(cand))
    cell = model.space.cell_measure(cand)
    return [PredictionSet(float(x), cand, s, s <= model.threshold, model.threshold, cell)
            for x, s in zip(xs, scores)]


# -- coverage evaluation --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoverageReport:
    marginal: float
    bin_edges: np.ndarray
    coverage: np.ndarray
    n_in_bin: np.ndarray
    mean_size: np.ndarray
    overall_size: float
    covered: np.ndarray
    size_x: np.ndarray
    sizes: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def rows(self) -> list[dict]:
        return [
            {"bin_center": float(c), "coverage": _nan_to_none(cov), "mean_size": _nan_to_none(s),
             "n_in_bin": int(k)}
            for c, cov, s, k in zip(self.bin_centers, self.coverage, self.mean_size, self.n_in_bin)
        ]

    def summary(self) -> dict:
        return {
            "marginal_coverage": self.marginal,
            "mean_size": _nan_to_none(self.overall_size),
            "n_test": int(len(self.covered)),
            "n_bins": int(len(self.coverage)),
            "n_size_points": int(len(self.sizes)),
        }


def _nan_to_none(v):
    v = float(v)
    return None if math.isnan(v) else v


CandidateSource = np.ndarray | Callable[[float], np.ndarray] | None


def evaluate_coverage(
    model: ConformalModel,
    test: Dataset,
    candidates: CandidateSource = None,
    n_bins: int = 20,
    *,
    size_points: int = 50,
    bin_range: tuple[float, float] | None = None,
    snap: bool = False,
) -> CoverageReport:
    """Marginal and binned conditional coverage on a test set, plus set sizes.

    Test objects are scored directly; with ``snap=True`` each is replaced by
    its nearest candidate first. Sizes are computed at the first
    ``size_points`` test covariates when candidates are given. Empty bins
    report NaN.
    """
    if n_bins < 1:
        raise ValueError("need at least one bin")
    x = model.project(test.X)
    Y = test.Y
    if snap:
        if candidates is None or callable(candidates):
            raise ValueError("snapping needs a fixed candidate list")
        cand = model.space.as_points(candidates)
        Y = cand[np.argmin(model.space.pairwise(Y, cand), axis=1)]
    scores = model.score(Y, x)
    covered = scores <= model.threshold

    lo, hi = bin_range if bin_range is not None else (float(x.min()), float(x.max()))
    edges = np.linspace(lo, hi, n_bins + 1)
    which = np.clip(np.digitize(x, edges[1:-1]), 0, n_bins - 1)
    inside = (x >= lo) & (x <= hi)
    counts = np.bincount(which[inside], minlength=n_bins)
    hits = np.bincount(which[inside], weights=covered[inside].astype(float), minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        coverage = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)

    sizes = np.empty(0)
    size_x = np.empty(0)
    mean_size = np.full(n_bins, np.nan)
    if candidates is not None and size_points > 0:
        size_x = x[:size_points]
        if callable(candidates):
            sizes = np.array([prediction_sets(model, [xv], candidates(xv))[0].size for xv in size_x])
        else:
            sizes = np.array([s.size for s in prediction_sets(model, size_x, candidates)])
        sw = np.clip(np.digitize(size_x, edges[1:-1]), 0, n_bins - 1)
        for b in range(n_bins):
            sel = sw == b
            if sel.any():
                mean_size[b] = sizes[sel].mean()
    overall = float(sizes.mean()) if len(sizes) else math.nan
    return CoverageReport(float(covered.mean()), edges, coverage, counts, mean_size, overall,
                          covered, size_x, sizes)

