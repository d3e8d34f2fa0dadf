"""Seeded Monte Carlo harness and the bandwidth study.

Every run draws its own seeds from ``SeedSequence(root_seed).spawn(n_runs)``,
so a run's result depends only on the root seed and its index. Serial and
parallel execution therefore give identical reports.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .conformal import evaluate_coverage, split_fit
from .errors import ConformalObjectsError
from .simulate import GeneratorSpec, default_candidates, generate, true_theta
from .single_index import project_and_fit
from .smoothing import KernelSpec

log = logging.getLogger(__name__)

THREADS_ENV = "CONFORMAL_OBJECTS_THREADS"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides the setting, sample size and seeds.

    ``bandwidth=None`` means the rule-of-thumb bandwidth ``c * sd(x) * n^(-1/5)``.
    """

    alpha: float = 0.1
    kernel: str = "epanechnikov"
    bandwidth: float | None = None
    bandwidth_c: float = 1.0
    n_t: int = 101
    split_ratio: float = 0.5
    n_test: int = 2000
    n_bins: int = 20
    size_points: int = 50
    resolution: int | None = None
    index_bins: int | None = None
    restarts: int = 8

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.n_t < 2 or self.n_bins < 1 or self.n_test < 1 or self.restarts < 1:
            raise ValueError("grid size, bins, test size and restarts must be positive")


def run_seeds(root_seed: int, n_runs: int) -> list[tuple[int, int, int]]:
    """(data, split, test) seeds per run, from spawned child sequences."""
    children = np.random.SeedSequence(root_seed).spawn(n_runs)
    return [tuple(int(v) for v in c.generate_state(3)) for c in children]


@dataclass
class RunResult:
    run: int
    data_seed: int
    split_seed: int
    test_seed: int
    marginal: float = math.nan
    mean_size: float = math.nan
    theta_mse: float = math.nan
    bin_coverage: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _bin_range(setting: str) -> tuple[float, float] | None:
    return (-1.0, 1.0) if true_theta(setting) is None else None


def single_run(setting: str, n: int, config: PipelineConfig, run: int, seeds) -> RunResult:
    """One replication: generate, fit, evaluate. Failures are captured in ``error``."""
    data_seed, split_seed, test_seed = seeds
    res = RunResult(run, data_seed, split_seed, test_seed)
    try:
        data = generate(GeneratorSpec(setting, n, data_seed))
        test = generate(GeneratorSpec(setting, config.n_test, test_seed))
        kernel = KernelSpec(config.kernel, config.bandwidth) if config.bandwidth is not None else None
        common = dict(n_t=config.n_t, split_ratio=config.split_ratio,
                      kernel_family=config.kernel, bandwidth_c=config.bandwidth_c)
        theta0 = true_theta(setting)
        if theta0 is None:
            model = split_fit(data, kernel, config.alpha, split_seed, **common)
        else:
            model = project_and_fit(data, None, kernel, config.alpha, split_seed,
                                    M=config.index_bins, restarts=config.restarts, **common)
            res.theta_mse = float(np.sum((model.theta - theta0) ** 2))
        report = evaluate_coverage(model, test, default_candidates(setting, config.resolution),
                                   config.n_bins, size_points=config.size_points,
                                   bin_range=_bin_range(setting))
        res.marginal = report.marginal
        res.mean_size = report.overall_size
        res.bin_coverage = [float(v) for v in report.coverage]
    except (ConformalObjectsError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("run %d failed: %s", run, exc)
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def worker_count(n_tasks: int) -> int:
    env = os.environ.get(THREADS_ENV)
    try:
        cap = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    return max(1, min(cap, n_tasks))


def _star(args):
    return single_run(*args)


def _map_runs(tasks: list[tuple]) -> list[RunResult]:
    workers = worker_count(len(tasks))
    if workers == 1:
        return [_star(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_star, tasks))


def _mean_sd(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass
class MonteCarloReport:
    setting: str
    n: int
    n_runs: int
    root_seed: int
    config: PipelineConfig
    runs: list[RunResult]

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.runs)

    def _ok(self, attr: str) -> list[float]:
        return [getattr(r, attr) for r in self.runs if r.ok]

    @property
    def coverage(self) -> tuple[float, float]:
        return _mean_sd(self._ok("marginal"))

    @property
    def size(self) -> tuple[float, float]:
        return _mean_sd(self._ok("mean_size"))

    @property
    def theta_mse(self) -> tuple[float, float]:
        return _mean_sd(self._ok("theta_mse"))

    @property
    def bin_coverage(self) -> np.ndarray:
        rows = [r.bin_coverage for r in self.runs if r.ok and r.bin_coverage]
        if not rows:
            return np.full(self.config.n_bins, np.nan)
        arr = np.asarray(rows, dtype=float)
        with np.errstate(invalid="ignore"):
            counts = np.sum(~np.isnan(arr), axis=0)
            return np.where(counts > 0, np.nansum(arr, axis=0) / np.maximum(counts, 1), np.nan)

    def summary(self) -> dict:
        cov, cov_sd = self.coverage
        size, size_sd = self.size
        mse, mse_sd = self.theta_mse
        return _jsonable({
            "setting": self.setting, "n": self.n, "n_runs": self.n_runs,
            "root_seed": self.root_seed, "failures": self.failures,
            "marginal_coverage": cov, "marginal_coverage_sd": cov_sd,
            "mean_size": size, "mean_size_sd": size_sd,
            "theta_mse": mse, "theta_mse_sd": mse_sd,
            "bin_coverage": list(self.bin_coverage),
            "config": asdict(self.config),
        })

    def to_json(self, path) -> None:
        payload = {"summary": self.summary(), "runs": [_jsonable(asdict(r)) for r in self.runs]}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        nb = self.config.n_bins
        header = ["run", "data_seed", "split_seed", "test_seed", "marginal", "mean_size",
                  "theta_mse", "error"] + [f"bin_{b}" for b in range(nb)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.runs:
                bins = r.bin_coverage or [math.nan] * nb
                w.writerow([r.run, r.data_seed, r.split_seed, r.test_seed, _fmt(r.marginal),
                            _fmt(r.mean_size), _fmt(r.theta_mse), r.error or ""]
                           + [_fmt(v) for v in bins])


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def run_monte_carlo(setting: str, n: int, n_runs: int, config: PipelineConfig | None = None,
                    root_seed: int = 0) -> MonteCarloReport:
    """Independent seeded replications of fit and evaluation, aggregated."""
    if n_runs < 1:
        raise ValueError("need at least one run")
    config = config or PipelineConfig()
    GeneratorSpec(setting, n)  # validates the setting id early
    tasks = [(str(setting), n, config, i, s) for i, s in enumerate(run_seeds(root_seed, n_runs))]
    return MonteCarloReport(str(setting), n, n_runs, root_seed, config, _map_runs(tasks))


SWEEP_FACTORS = tuple(float(c) for c in np.geomspace(0.4, 4.0, 6))


def sweep_bandwidths(n: int, factors=SWEEP_FACTORS, split_ratio: float = 0.5) -> list[float]:
    """Multiples of the rule-of-thumb bandwidth for ``x ~ Unif(-1, 1)`` and the training-half size.

    The optimal bandwidth shrinks with ``n``, so a grid relative to the
    rule of thumb keeps the size minimum inside the sweep for every ``n``.
    """
    n_train = max(2, int(round(split_ratio * n)))
    ref = n_train ** -0.2 / math.sqrt(3.0)
    return [float(c * ref) for c in factors]


@dataclass(frozen=True)
class SweepRow:
    h: float
    coverage: float
    coverage_sd: float
    mean_size: float
    mean_size_sd: float
    failures: int


def bandwidth_sweep(setting: str, n: int, hs=None, alpha: float = 0.1, n_runs: int = 20,
                    config: PipelineConfig | None = None, root_seed: int = 0) -> list[SweepRow]:
    """Coverage and mean set size per fixed bandwidth; runs share seeds across ``h``.

    ``hs=None`` uses :func:`sweep_bandwidths` for ``n``.
    """
    base = replace(config or PipelineConfig(), alpha=alpha)
    if hs is None:
        hs = sweep_bandwidths(n, split_ratio=base.split_ratio)
    hs = [float(h) for h in np.atleast_1d(hs)]
    if not hs or any(h <= 0 for h in hs):
        raise ValueError("bandwidths must be positive")
    rows = []
    for h in hs:
        rep = run_monte_carlo(setting, n, n_runs, replace(base, bandwidth=h), root_seed)
        rows.append(SweepRow(h, *rep.coverage, *rep.size, rep.failures))
    return rows


def sweep_table_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "coverage", "coverage_sd", "mean_size", "mean_size_sd", "failures"])
        for r in rows:
            w.writerow([repr(r.h), _fmt(r.coverage), _fmt(r.coverage_sd), _fmt(r.mean_size),
                        _fmt(r.mean_size_sd), r.failures])
