"""Dataset files, model artifacts and report writers.

A dataset file is text. Line 1 is ``#`` followed by a JSON header with the
space descriptor, the covariate dimension ``d`` and the column names. Line 2
is the CSV header. Every further line holds ``d`` covariates followed by the
object's flat encoding. Model artifacts are JSON documents holding the
training and calibration halves together with the fitted profile curves and
costs. Loading refits the table, which is deterministic, and checks it
against the stored arrays.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .conformal import ConformalModel, CoverageReport, PredictionSet, SplitPlan
from .data import Dataset
from .errors import DatasetError, InvalidPointError, SpaceError
from .profiles import TGrid, fit_profile_table
from .smoothing import KernelSpec
from .spaces import MetricSpace, space_from_dict

MODEL_FORMAT = "conformal-objects-model"
MODEL_VERSION = 1


def _num(v: float) -> str:
    return repr(float(v))


def dataset_columns(space: MetricSpace, d: int) -> list[str]:
    return [f"x{i}" for i in range(d)] + space.column_names()


def save_dataset(data: Dataset, path) -> None:
    header = {"space": data.space.to_dict(), "d": data.d, "columns": dataset_columns(data.space, data.d)}
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header["columns"])
        for x, y in zip(data.X, data.Y):
            w.writerow([_num(v) for v in x] + [_num(v) for v in data.space.encode_point(y)])


def _read_header(line: str) -> tuple[MetricSpace, int, list[str]]:
    if not line.startswith("#"):
        raise DatasetError("first line must be '#' followed by a JSON header", row=0)
    try:
        header = json.loads(line[1:])
        space = space_from_dict(header["space"])
        d = int(header["d"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, SpaceError) as exc:
        raise DatasetError(f"bad header: {exc}", row=0) from None
    if d < 1:
        raise DatasetError("covariate dimension d must be positive", row=0)
    columns = header.get("columns") or dataset_columns(space, d)
    return space, d, list(columns)


def load_dataset(path) -> Dataset:
    """Parse and validate a dataset file. Data rows are numbered from 1."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        space, d, columns = _read_header(first)
        width = d + space.encoded_width
        if len(columns) != width:
            raise DatasetError(f"header lists {len(columns)} columns, schema needs {width}", row=0)
        reader = csv.reader(fh)
        names = next(reader, None)
        if names is None:
            raise DatasetError("missing column header line", row=0)
        if [c.strip() for c in names] != columns:
            raise DatasetError(f"column header {names} does not match schema {columns}", row=0)
        rows = []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != width:
                raise DatasetError(f"expected {width} fields, found {len(rec)}", row=r)
            vals = []
            for c, cell in enumerate(rec):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DatasetError(f"cannot parse {cell!r} as a number", row=r, column=columns[c]) from None
            rows.append(vals)
    if not rows:
        raise DatasetError("file has no data rows")
    arr = np.asarray(rows, dtype=float)
    X = arr[:, :d]
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        r = int(bad[0])
        c = int(np.flatnonzero(~np.isfinite(X[r]))[0])
        raise DatasetError("covariate is not finite", row=r + 1, column=columns[c])
    try:
        Y = space.as_points(space.decode_rows(arr[:, d:]))
    except InvalidPointError as exc:
        row = None if exc.index is None else exc.index + 1
        raise DatasetError(str(exc), row=row) from None
    return Dataset(space, X, Y)


# -- model artifacts ----------------------------------------------------------


def _enc_float(v: float):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v


def _dec_float(v) -> float:
    return float(v)


def _rows(space: MetricSpace, Y) -> list[list[float]]:
    return [space.encode_point(y) for y in Y]


def model_to_dict(model: ConformalModel) -> dict:
    t = model.table
    plan = None
    if model.plan is not None:
        plan = {"train": model.plan.train.tolist(), "calib": model.plan.calib.tolist(),
                "seed": model.plan.seed, "ratio": model.plan.ratio}
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "space": t.space.to_dict(),
        "kernel": t.kernel.to_dict(),
        "grid": {"t_max": t.grid.t_max, "n_t": t.grid.n_t},
        "monotone": t.monotone,
        "score_kind": model.score_kind,
        "alpha": model.alpha,
        "threshold": _enc_float(model.threshold),
        "train": {"x": t.X.tolist(), "Y": _rows(t.space, t.Y)},
        "table": {"curves": t.curves.tolist(), "costs": t.costs.tolist()},
        "calib": {"x": np.asarray(model.cal_x).tolist(), "Y": _rows(t.space, model.cal_Y),
                  "scores": [_enc_float(s) for s in model.cal_scores]},
        "plan": plan,
        "theta": None if model.theta is None else [float(v) for v in model.theta],
        "info": model.info,
    }


def model_from_dict(doc: dict) -> ConformalModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a conformal-objects model artifact")
    if int(doc.get("version", 0)) != MODEL_VERSION:
        raise ValueError(f"unsupported model artifact version {doc.get('version')}")
    space = space_from_dict(doc["space"])
    kernel = KernelSpec(doc["kernel"]["family"], float(doc["kernel"]["h"]))
    grid = TGrid(float(doc["grid"]["t_max"]), int(doc["grid"]["n_t"]))
    train_Y = space.decode_rows(np.asarray(doc["train"]["Y"], dtype=float))
    table = fit_profile_table(space, doc["train"]["x"], train_Y, kernel, grid,
                              monotone=bool(doc.get("monotone", False)))
    stored = doc.get("table")
    if stored is not None and not (
        np.array_equal(np.asarray(stored["curves"], dtype=float), table.curves)
        and np.array_equal(np.asarray(stored["costs"], dtype=float), table.costs)
    ):
        raise ValueError("stored profile curves do not match the refitted table")
    plan = None
    if doc.get("plan") is not None:
        p = doc["plan"]
        plan = SplitPlan(np.asarray(p["train"], dtype=int), np.asarray(p["calib"], dtype=int),
                         int(p["seed"]), float(p["ratio"]))
    cal_Y = space.decode_rows(np.asarray(doc["calib"]["Y"], dtype=float))
    theta = doc.get("theta")
    return ConformalModel(
        table=table,
        cal_x=np.asarray(doc["calib"]["x"], dtype=float),
        cal_Y=space.as_points(cal_Y),
        cal_scores=np.asarray([_dec_float(s) for s in doc["calib"]["scores"]], dtype=float),
        threshold=_dec_float(doc["threshold"]),
        alpha=float(doc["alpha"]),
        plan=plan,
        score_kind=doc.get("score_kind", "cps"),
        theta=None if theta is None else np.asarray(theta, dtype=float),
        info=doc.get("info") or {},
    )


def save_model(model: ConformalModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> ConformalModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def models_equal(a: ConformalModel, b: ConformalModel) -> bool:
    """Same estimators, calibration and threshold (profile curves compared exactly)."""
    ta, tb = a.table, b.table
    return (
        ta.space == tb.space and ta.kernel == tb.kernel and ta.grid == tb.grid
        and np.array_equal(ta.X, tb.X) and np.array_equal(ta.Y, tb.Y)
        and np.array_equal(ta.curves, tb.curves) and np.array_equal(ta.costs, tb.costs)
        and np.array_equal(a.cal_x, b.cal_x) and np.array_equal(a.cal_Y, b.cal_Y)
        and np.array_equal(a.cal_scores, b.cal_scores)
        and a.threshold == b.threshold and a.alpha == b.alpha and a.score_kind == b.score_kind
        and ((a.theta is None and b.theta is None)
             or (a.theta is not None and b.theta is not None and np.array_equal(a.theta, b.theta)))
    )


# -- reports -------------------------------------------------------------------


def write_prediction_set(ps: PredictionSet, space: MetricSpace, path) -> None:
    """One row per candidate: coordinates, score, member flag."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(space.column_names() + ["score", "member"])
        for c, s, m in zip(ps.candidates, ps.scores, ps.members):
            w.writerow([_num(v) for v in space.encode_point(c)] + [_num(s), int(bool(m))])


def write_coverage(report: CoverageReport, csv_path, json_path=None) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center", "coverage", "mean_size", "n_in_bin"])
        for row in report.rows():
            w.writerow([_num(row["bin_center"]),
                        "" if row["coverage"] is None else _num(row["coverage"]),
                        "" if row["mean_size"] is None else _num(row["mean_size"]),
                        row["n_in_bin"]])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump({"summary": report.summary(), "bins": report.rows()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
