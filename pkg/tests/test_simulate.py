"""Generators, Monte Carlo driver and bandwidth sweeps."""
import json

import numpy as np
import pytest

from conformal_objects.montecarlo import (
    PipelineConfig,
    bandwidth_sweep,
    run_monte_carlo,
    run_seeds,
    sweep_bandwidths,
    sweep_table_csv,
    worker_count,
)
from conformal_objects.simulate import (
    SETTINGS,
    GeneratorSpec,
    default_candidates,
    f_reg,
    g_branch,
    generate,
    sphere_mean,
    space_for,
)
from conformal_objects.spaces import Wasserstein1D

FAST = PipelineConfig(n_test=200, size_points=5, n_bins=4, restarts=2)


@pytest.mark.parametrize("setting", SETTINGS)
def test_generators_are_deterministic_and_valid(setting):
    a = generate(GeneratorSpec(setting, 50, 7))
    b = generate(GeneratorSpec(setting, 50, 7))
    c = generate(GeneratorSpec(setting, 50, 8))
    assert a.equals(b) and not a.equals(c)
    assert a.space == space_for(setting)
    a.space.as_points(a.Y)


def test_unknown_setting():
    with pytest.raises(ValueError):
        GeneratorSpec("10", 5)
    with pytest.raises(ValueError):
        GeneratorSpec("1", 0)


def test_setting1_residuals_centered():
    n = 20000
    d = generate(GeneratorSpec("1", n, 1))
    resid = d.Y[:, 0] - f_reg(d.x)
    assert abs(resid.mean()) <= 3 * 0.1 / np.sqrt(n)
    assert resid.std() == pytest.approx(0.1, rel=0.03)


def test_setting2_heteroscedastic():
    d = generate(GeneratorSpec("2", 20000, 2))
    resid = d.Y[:, 0] - f_reg(d.x)
    assert resid[d.x <= 0].std() == pytest.approx(0.5, rel=0.05)
    assert resid[d.x > 0].std() == pytest.approx(0.1, rel=0.05)


def test_setting3_modes_at_half():
    rng = np.random.default_rng(0)
    t = np.full(100_000, 0.5)
    from conformal_objects.simulate import _scalar_responses

    y = _scalar_responses("3", t, rng)
    h = 0.02
    # kernel density estimate on a grid via histogram convolution
    hist, edges = np.histogram(y, bins=3000, range=(-0.5, 2.5))
    centres = 0.5 * (edges[:-1] + edges[1:])
    kern = np.exp(-0.5 * ((centres - centres[1500]) / h) ** 2)
    dens = np.convolve(hist, kern / kern.sum(), mode="same")
    peaks = [i for i in range(1, 2999) if dens[i] >= dens[i - 1] and dens[i] > dens[i + 1]
             and dens[i] > 0.2 * dens.max()]
    modes = sorted(centres[peaks])
    expected = sorted([f_reg(0.5) + g_branch(0.5), f_reg(0.5) - 0.2 * g_branch(0.5)])
    assert len(modes) == 2
    assert np.allclose(modes, expected, atol=0.05)


def test_setting4_on_sphere_with_tangent_noise():
    d = generate(GeneratorSpec("4", 2000, 3))
    assert np.all(np.abs(np.linalg.norm(d.Y, axis=1) - 1) <= 1e-9)
    mu = sphere_mean(d.x)
    assert np.all(np.abs(mu[:, 2]) == 0)
    # the response stays on the great circle through mu and the pole
    normal = np.cross(mu, [0.0, 0.0, 1.0])
    assert np.all(np.abs(np.einsum("ij,ij->i", d.Y, normal)) <= 1e-9)


def test_setting5_valid_quantile_grids():
    d = generate(GeneratorSpec("5", 200, 4))
    assert isinstance(d.space, Wasserstein1D)
    assert np.all(np.diff(d.Y, axis=1) >= 0)
    assert d.Y.min() >= 0 and d.Y.max() <= 1


def test_multivariate_settings_have_index():
    for s, dim in (("6", 2), ("9", 4)):
        d = generate(GeneratorSpec(s, 30, 0))
        assert d.d == dim


def test_default_candidates():
    assert default_candidates("3").shape == (400, 1)
    assert default_candidates("fig-spider") is None
    assert default_candidates("1", 33).shape == (33, 1)


# -- Monte Carlo ---------------------------------------------------------------------


def test_run_seeds_distinct_and_reproducible():
    s = run_seeds(5, 4)
    assert s == run_seeds(5, 4)
    assert len({v for t in s for v in t}) == 12
    assert run_seeds(5, 6)[:4] == s


def test_single_run_report():
    rep = run_monte_carlo("1", 80, 1, FAST, root_seed=3)
    assert rep.failures == 0
    cov, sd = rep.coverage
    assert cov == rep.runs[0].marginal and sd == 0.0
    summary = rep.summary()
    assert summary["n_runs"] == 1 and summary["theta_mse"] is None
    assert len(summary["bin_coverage"]) == 4


def test_report_files_reproducible(tmp_path):
    paths = []
    for k in range(2):
        rep = run_monte_carlo("1", 60, 2, FAST, root_seed=1)
        csv_path, json_path = tmp_path / f"r{k}.csv", tmp_path / f"r{k}.json"
        rep.to_csv(csv_path)
        rep.to_json(json_path)
        paths.append((csv_path.read_bytes(), json_path.read_bytes()))
    assert paths[0] == paths[1]
    doc = json.loads(paths[0][1])
    assert len(doc["runs"]) == 2


def test_serial_equals_parallel(monkeypatch):
    monkeypatch.setenv("CONFORMAL_OBJECTS_THREADS", "1")
    serial = run_monte_carlo("1", 60, 3, FAST, root_seed=2)
    monkeypatch.setenv("CONFORMAL_OBJECTS_THREADS", "2")
    assert worker_count(3) == 2
    parallel = run_monte_carlo("1", 60, 3, FAST, root_seed=2)
    assert serial.summary() == parallel.summary()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("CONFORMAL_OBJECTS_THREADS", "abc")
    with pytest.raises(ValueError):
        worker_count(2)
    monkeypatch.setenv("CONFORMAL_OBJECTS_THREADS", "16")
    assert worker_count(3) == 3


def test_single_index_run_records_mse():
    rep = run_monte_carlo("6", 120, 1, FAST, root_seed=0)
    assert rep.failures == 0
    assert rep.theta_mse[0] >= 0


def test_failures_are_captured():
    rep = run_monte_carlo("1", 3, 2, FAST)
    assert rep.failures == 2
    assert rep.runs[0].error.startswith("ValueError")
    assert np.isnan(rep.coverage[0])


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(alpha=0)
    with pytest.raises(ValueError):
        PipelineConfig(bandwidth=-1.0)
    with pytest.raises(ValueError):
        run_monte_carlo("1", 50, 0)


def test_single_bandwidth_sweep(tmp_path):
    rows = bandwidth_sweep("1", 80, [0.3], n_runs=2, config=FAST)
    assert len(rows) == 1 and rows[0].h == 0.3
    sweep_table_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("h,coverage") and len(lines) == 2


def test_larger_sample_does_not_grow_sets():
    cfg = PipelineConfig(n_test=300, size_points=20, n_bins=5)
    small = run_monte_carlo("1", 500, 3, cfg, root_seed=4).size[0]
    large = run_monte_carlo("1", 2000, 3, cfg, root_seed=4).size[0]
    assert large <= 1.05 * small


def test_sweep_grid_is_relative_to_rule_of_thumb():
    hs = sweep_bandwidths(1000)
    ref = 500 ** -0.2 / np.sqrt(3)
    assert len(hs) == 6
    assert hs[0] == pytest.approx(0.4 * ref) and hs[-1] == pytest.approx(4 * ref)
    assert np.allclose(np.diff(np.log(hs)), np.log(10) / 5)
    assert sweep_bandwidths(2000)[0] < hs[0]
