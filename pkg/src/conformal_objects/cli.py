"""Command-line interface: ``conformal-objects <subcommand> [options]``.

Exit status is 0 on success, 2 for usage errors and 1 for runtime failures.
Errors are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import evaluate_coverage, predict_set, split_fit
from .errors import ConformalObjectsError
from .io import (
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    write_coverage,
    write_prediction_set,
)
from .montecarlo import PipelineConfig, bandwidth_sweep, run_monte_carlo, sweep_table_csv
from .simulate import SETTINGS, GeneratorSpec, generate
from .single_index import estimate_theta, project_and_fit
from .smoothing import KERNELS, KernelSpec
from .conformal import make_split

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bandwidth(text: str):
    if text == "auto":
        return None
    try:
        h = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be a positive number or 'auto', got {text!r}")
    if not h > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return h


def _alpha(text: str) -> float:
    a = float(text)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must be in (0, 1)")
    return a


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _ratio(text: str) -> float:
    r = float(text)
    if not 0 < r < 1:
        raise argparse.ArgumentTypeError("split ratio must be in (0, 1)")
    return r


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=_alpha, default=0.1, help="miscoverage level (default 0.1)")
    p.add_argument("--bandwidth", type=_bandwidth, default=None,
                   help="kernel bandwidth or 'auto' for the rule of thumb (default auto)")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--tgrid", type=_positive_int, default=101, help="t-grid size (default 101)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-ratio", type=_ratio, default=0.5, help="training fraction (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conformal-objects",
                     description="Split-conformal prediction sets for metric-space responses.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit and calibrate a model on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--space", help="expected space kind; checked against the file header")
    _add_fit_options(p)
    p.add_argument("--out", required=True, help="model artifact JSON")

    p = sub.add_parser("predict", help="prediction set at one covariate value")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True, type=_float_list, help="covariate (comma-separated if d > 1)")
    p.add_argument("--candidates", required=True,
                   help="candidate CSV file, or an integer grid resolution")
    p.add_argument("--alpha", type=_alpha, default=None)
    p.add_argument("--out", required=True, help="prediction set CSV")

    p = sub.add_parser("evaluate", help="coverage of a model on a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--candidates", help="candidate CSV file or grid resolution, for set sizes")
    p.add_argument("--bins", type=_positive_int, default=20)
    p.add_argument("--out", required=True, help="coverage CSV; a JSON summary is written next to it")

    p = sub.add_parser("simulate", help="Monte Carlo runs of a simulation setting")
    p.add_argument("--setting", required=True, choices=SETTINGS)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--runs", type=_positive_int, default=1)
    _add_fit_options(p)
    p.add_argument("--bins", type=_positive_int, default=20)
    p.add_argument("--candidates", type=_positive_int, default=None, help="candidate grid resolution")
    p.add_argument("--index-bins", type=_positive_int, default=None)
    p.add_argument("--restarts", type=_positive_int, default=8)
    p.add_argument("--dump", help="also write the seed's generated dataset to this file")
    p.add_argument("--out", required=True, help="report path stem; writes .csv and .json")

    p = sub.add_parser("sweep-bandwidth", help="coverage and set size over a bandwidth grid")
    p.add_argument("--setting", required=True, choices=SETTINGS)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--runs", type=_positive_int, default=20)
    p.add_argument("--alpha", type=_alpha, default=0.1)
    p.add_argument("--bandwidths", type=_float_list, default=None,
                   help="comma-separated bandwidths (default: 6 log-spaced multiples 0.4 to 4 "
                        "of the rule-of-thumb bandwidth for --n)")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--candidates", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="table CSV")

    p = sub.add_parser("single-index", help="estimate the index direction, then fit on the projection")
    p.add_argument("--data", required=True)
    _add_fit_options(p)
    p.add_argument("--index-bins", type=_positive_int, default=None, help="bins M (default floor(n^(1/4)))")
    p.add_argument("--restarts", type=_positive_int, default=8)
    p.add_argument("--out", required=True, help="model artifact JSON; the index fit goes to <stem>.theta.json")
    return parser


def _kernel(args) -> KernelSpec | None:
    return None if args.bandwidth is None else KernelSpec(args.kernel, args.bandwidth)


def _fit_kwargs(args) -> dict:
    return dict(n_t=args.tgrid, split_ratio=args.split_ratio, kernel_family=args.kernel)


def _candidates(spec: str | None, model):
    if spec is None:
        return None
    space = model.space
    try:
        res = int(spec)
    except ValueError:
        return _read_candidates(spec, space)
    bounds = None
    if space.kind == "euclidean":
        Y = model.table.Y
        lo, hi = Y.min(axis=0), Y.max(axis=0)
        pad = 0.1 * np.maximum(hi - lo, 1e-12)
        bounds = list(zip(lo - pad, hi + pad))
    return space.candidate_grid(res, bounds)


def _read_candidates(path: str, space):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConformalObjectsError(f"{path}: empty candidate file")
    names = space.column_names()
    body = rows[1:] if [c.strip() for c in rows[0]] == names else rows
    try:
        arr = np.asarray([[float(v) for v in r] for r in body if r], dtype=float)
    except ValueError as exc:
        raise ConformalObjectsError(f"{path}: {exc}") from None
    return space.as_points(space.decode_rows(arr))


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args) -> dict:
    data = load_dataset(args.data)
    if args.space and args.space.lower() != data.space.kind:
        raise ConformalObjectsError(f"--space {args.space} does not match file space {data.space.kind}")
    model = split_fit(data, _kernel(args), args.alpha, args.seed, **_fit_kwargs(args))
    save_model(model, args.out)
    return {"model": args.out, "threshold": model.threshold, "h": model.table.kernel.h}


def cmd_predict(args) -> dict:
    model = load_model(args.model)
    ps = predict_set(model, args.x, _candidates(args.candidates, model), args.alpha)
    write_prediction_set(ps, model.space, args.out)
    return {"out": args.out, "members": ps.count, "size": ps.size}


def cmd_evaluate(args) -> dict:
    model = load_model(args.model)
    test = load_dataset(args.test)
    report = evaluate_coverage(model, test, _candidates(args.candidates, model), args.bins)
    json_path = str(Path(args.out).with_suffix(".json"))
    write_coverage(report, args.out, json_path)
    return report.summary()


def _config(args, **extra) -> PipelineConfig:
    return PipelineConfig(alpha=args.alpha, kernel=args.kernel, bandwidth=args.bandwidth,
                          n_t=args.tgrid, split_ratio=args.split_ratio, n_bins=args.bins,
                          resolution=args.candidates, index_bins=args.index_bins,
                          restarts=args.restarts, **extra)


def cmd_simulate(args) -> dict:
    report = run_monte_carlo(args.setting, args.n, args.runs, _config(args), args.seed)
    stem = Path(args.out)
    report.to_csv(stem.with_suffix(".csv"))
    report.to_json(stem.with_suffix(".json"))
    if args.dump:
        save_dataset(generate(GeneratorSpec(args.setting, args.n, args.seed)), args.dump)
    return report.summary()


def cmd_sweep(args) -> dict:
    config = PipelineConfig(alpha=args.alpha, kernel=args.kernel, resolution=args.candidates)
    rows = bandwidth_sweep(args.setting, args.n, args.bandwidths, args.alpha, args.runs, config, args.seed)
    sweep_table_csv(rows, args.out)
    return {"out": args.out, "rows": len(rows)}


def cmd_single_index(args) -> dict:
    data = load_dataset(args.data)
    plan = make_split(data.n, args.seed, args.split_ratio)
    fit = estimate_theta(data.subset(plan.train), M=args.index_bins, restarts=args.restarts,
                         seed=args.seed, kernel_family=args.kernel)
    model = project_and_fit(data, fit.theta, _kernel(args), args.alpha, args.seed,
                            **_fit_kwargs(args))
    save_model(model, args.out)
    out = Path(args.out)
    theta_path = out.with_name(out.stem + ".theta.json")
    _write_json(theta_path, fit.to_dict())
    return {"model": args.out, "theta_file": str(theta_path), "theta": fit.to_dict()["theta"]}


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "sweep-bandwidth": cmd_sweep,
    "single-index": cmd_single_index,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except (ConformalObjectsError, ValueError, OSError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
