import json

import numpy as np
import pytest

from fpflab import cod_benchmark, gain_sweep, sir_demo
from fpflab.experiments import ExperimentReport, default_eps_grid


@pytest.mark.parametrize("kw", [dict(dims=[0]), dict(Ns=[5]), dict(trials=99)])
def test_cod_preconditions(kw):
    args = dict(dims=[1], Ns=[10], trials=100)
    args.update(kw)
    with pytest.raises(ValueError):
        cod_benchmark(args["dims"], args["Ns"], args["trials"], 1)


def test_cod_report_shape_and_theory_columns():
    r = cod_benchmark([1, 2], [20, 40], 100, 3)
    assert r.columns == ["filter", "d", "N", "mse", "stderr", "mse_N", "theory_N"]
    assert len(r.rows) == 8
    rec = r.where(filter="PF", d=2, N=40)[0]
    assert rec["theory_N"] == 3 * 4 - 0.5 and rec["mse_N"] == pytest.approx(rec["mse"] * 40)
    assert r.where(filter="FPF", d=2, N=20)[0]["theory_N"] == 16
    assert all(row[4] > 0 for row in r.rows)


def test_cod_reproducible_and_thread_independent():
    a = cod_benchmark([1, 3], [10], 300, 4, threads=1)
    b = cod_benchmark([1, 3], [10], 300, 4, threads=4)
    assert a.rows == b.rows


def test_cod_cells_independent_of_other_cells():
    a = cod_benchmark([2], [10], 100, 5)
    b = cod_benchmark([1, 2], [10, 20], 100, 5)
    assert a.where(d=2, N=10) == b.where(d=2, N=10)


def test_cod_fpf_beats_pf_in_higher_dimension():
    r = cod_benchmark([4], [100], 200, 6)
    assert r.where(filter="PF")[0]["mse"] > r.where(filter="FPF")[0]["mse"]


def test_gain_sweep_large_eps_matches_constant():
    r = gain_sweep([1e6], 200, 5, 1)
    rec = r.where()[0]
    assert abs(rec["rmse"] - rec["rmse_constant"]) < 1e-3
    assert r.columns == ["epsilon", "rmse", "rmse_constant", "bias_proxy", "n", "seed_count"]


def test_gain_sweep_single_trial_deterministic():
    assert gain_sweep([0.1, 1.0], 50, 1, 9).rows == gain_sweep([0.1, 1.0], 50, 1, 9).rows


def test_gain_sweep_threads_do_not_change_result():
    assert gain_sweep([0.1, 1.0], 50, 6, 9, threads=1).rows == gain_sweep([0.1, 1.0], 50, 6, 9, threads=3).rows


@pytest.mark.parametrize("grid", [[1.0, 0.1], [-1.0, 1.0], []])
def test_gain_sweep_grid_checks(grid):
    with pytest.raises(ValueError):
        gain_sweep(grid, 50, 1, 0)


def test_default_grid():
    g = default_eps_grid()
    assert len(g) == 17 and g[0] == pytest.approx(1e-2) and g[-1] == pytest.approx(1e2)


def test_sir_point_mass_prior_stays_at_truth():
    r = sir_demo(2, sigma_b=0.0, beta_prior_std=0.0, beta_prior_mean=0.1, horizon=30)
    for backend in ("constant", "diffusion_map"):
        est = np.array([rec["est_beta"] for rec in r.where(backend=backend)])
        np.testing.assert_allclose(est, 0.1, atol=1e-12)


def test_sir_backends_share_truth():
    r = sir_demo(3, horizon=20)
    a, b = r.where(backend="constant"), r.where(backend="diffusion_map")
    assert len(a) == len(b) == 21
    for x, y in zip(a, b):
        assert (x["truth_S"], x["truth_I"], x["truth_beta"]) == (y["truth_S"], y["truth_I"], y["truth_beta"])


def test_report_write(tmp_path):
    r = ExperimentReport("gain-sweep", {"a": 1}, ["x", "y"], seeds=[42])
    r.add(0.1, np.float64(2.0))
    csv_path, json_path = r.write(tmp_path, stamp="S")
    assert csv_path.name == "gain_sweep_S_42.csv"
    assert csv_path.read_text() == "x,y\n0.10000000000000001,2\n"
    meta = json.loads(json_path.read_text())
    assert meta["seeds"] == [42] and meta["config"] == {"a": 1}
    with pytest.raises(ValueError):
        r.add(1.0)
