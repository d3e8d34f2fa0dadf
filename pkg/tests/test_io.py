import json
import math

import numpy as np
import pytest

from conformal_objects.conformal import evaluate_coverage, predict_set, split_fit
from conformal_objects.data import Dataset
from conformal_objects.errors import DatasetError
from conformal_objects.io import (
    load_dataset,
    load_model,
    model_to_dict,
    models_equal,
    save_dataset,
    save_model,
    write_coverage,
    write_prediction_set,
)
from conformal_objects.simulate import GeneratorSpec, default_candidates, generate
from conformal_objects.smoothing import KernelSpec
from conformal_objects.spaces import Network, Sphere2


@pytest.mark.parametrize("setting", ["1", "4", "5", "6", "fig-spider", "fig-2d-mixture"])
def test_dataset_round_trip(tmp_path, setting):
    data = generate(GeneratorSpec(setting, 25, 1))
    path = tmp_path / "d.csv"
    save_dataset(data, path)
    assert load_dataset(path).equals(data)


def test_network_round_trip(tmp_path, rng):
    data = Dataset(Network(3), rng.uniform(size=(10, 1)), rng.uniform(size=(10, 3, 3)))
    save_dataset(data, tmp_path / "n.csv")
    assert load_dataset(tmp_path / "n.csv").equals(data)


def _write(path, header, lines):
    path.write_text("# " + json.dumps(header) + "\n" + "\n".join(lines) + "\n")


def test_sphere_norm_error_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    _write(path, {"space": Sphere2().to_dict(), "d": 1},
           ["x0,y0,y1,y2", "0.1,1,0,0", "0.2,0,1,0", "0.3,0.9,0,0"])
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert exc.value.row == 3
    assert "row 3" in str(exc.value)


def test_wasserstein_decreasing_pair(tmp_path):
    data = generate(GeneratorSpec("5", 3, 0))
    path = tmp_path / "w.csv"
    save_dataset(data, path)
    lines = path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[1 + 41] = "0.0"  # quantile index 41 of the second data row drops to 0
    lines[3] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert exc.value.row == 2
    assert "decreasing" in str(exc.value)


def test_width_and_parse_errors(tmp_path):
    header = {"space": {"kind": "euclidean", "k": 1}, "d": 1}
    path = tmp_path / "e.csv"
    _write(path, header, ["x0,y0", "0.1,0.2", "0.3"])
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset(path)
    _write(path, header, ["x0,y0", "0.1,abc"])
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert exc.value.row == 1 and exc.value.column == "y0"
    _write(path, header, ["x0,y0", "nan,1.0"])
    with pytest.raises(DatasetError, match="column x0"):
        load_dataset(path)
    _write(path, header, ["a,b", "0.1,0.2"])
    with pytest.raises(DatasetError, match="column header"):
        load_dataset(path)
    path.write_text("x0,y0\n0.1,0.2\n")
    with pytest.raises(DatasetError, match="JSON header"):
        load_dataset(path)
    _write(path, header, ["x0,y0"])
    with pytest.raises(DatasetError, match="no data rows"):
        load_dataset(path)


@pytest.fixture(scope="module")
def fitted():
    data = generate(GeneratorSpec("1", 200, 2))
    return split_fit(data, alpha=0.1, seed=2)


def test_model_round_trip(tmp_path, fitted):
    path = tmp_path / "m.json"
    save_model(fitted, path)
    again = load_model(path)
    assert models_equal(fitted, again)
    save_model(again, tmp_path / "m2.json")
    assert path.read_bytes() == (tmp_path / "m2.json").read_bytes()
    cand = default_candidates("1")
    assert np.array_equal(predict_set(fitted, 0.2, cand).members, predict_set(again, 0.2, cand).members)


def test_infinite_threshold_round_trip(tmp_path):
    data = generate(GeneratorSpec("4", 8, 0))
    model = split_fit(data, KernelSpec("epanechnikov", 2.0), alpha=0.1)
    assert model.threshold == math.inf
    save_model(model, tmp_path / "inf.json")
    doc = json.loads((tmp_path / "inf.json").read_text())
    assert doc["threshold"] == "inf"
    assert load_model(tmp_path / "inf.json").threshold == math.inf


def test_tampered_model_is_rejected(tmp_path, fitted):
    doc = model_to_dict(fitted)
    doc["table"]["costs"][0] += 1e-6
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="do not match"):
        load_model(path)
    doc = model_to_dict(fitted)
    doc["format"] = "other"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)


def test_prediction_set_csv(tmp_path, fitted):
    cand = default_candidates("1", 50)
    ps = predict_set(fitted, 0.0, cand)
    write_prediction_set(ps, fitted.space, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "y0,score,member"
    assert len(lines) == 51
    assert sum(int(r.split(",")[-1]) for r in lines[1:]) == ps.count


def test_coverage_files(tmp_path, fitted):
    report = evaluate_coverage(fitted, generate(GeneratorSpec("1", 300, 4)), default_candidates("1", 50), 4,
                               size_points=8, bin_range=(-1, 3))
    write_coverage(report, tmp_path / "c.csv", tmp_path / "c.json")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "bin_center,coverage,mean_size,n_in_bin"
    assert lines[-1].split(",")[1] == ""  # empty bin stays missing
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["summary"]["marginal_coverage"] == report.marginal
    assert doc["bins"][-1]["coverage"] is None
