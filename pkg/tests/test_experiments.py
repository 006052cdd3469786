from dataclasses import replace

import numpy as np
import pytest

from fmrg import config as C
from fmrg import experiments as E
from fmrg.errors import ConfigError


def small(text, n=2000):
    cfg = C.loads(text)
    return replace(cfg, ensemble=replace(cfg.ensemble, n_particles=n))


def test_batch_means_of_iid_normals():
    x = np.random.default_rng(0).normal(size=100_000)
    m, se = E.batch_means(x)
    assert se == pytest.approx(1 / np.sqrt(1e5), rel=0.2)
    assert abs(m) < 4 * se


def test_batch_variance_se_scale():
    x = np.random.default_rng(1).normal(size=100_000)
    v, se = E.batch_variance(x)
    assert se == pytest.approx(np.sqrt(2 / 1e5), rel=0.25)
    assert v == pytest.approx(1.0, abs=4 * se)


def test_greedy_ensemble_matches_prediction():
    cfg = small('target.sigma1 = 1.0\nmethod.name = "greedy"\nmethod.lambda = 0.5\n'
                "guidance.n_steps = 100\nguidance.n_opt = 4\n", n=20_000)
    s = E.run_ensemble(cfg)
    assert s.nfe == 100 * 5 + 1
    assert abs(s.emp_mean - s.pred_mean) < 4 * s.emp_mean_se + 2e-3
    assert abs(s.emp_var - s.pred_var) < 4 * s.emp_var_se + 0.01 * s.pred_var


def test_tilt_ensemble():
    cfg = small('target.sigma1 = 2.0\nmethod.name = "tilt"\nmethod.lambda = 0.5\n', n=20_000)
    s = E.run_ensemble(cfg)
    assert s.nfe == 0
    assert abs(s.emp_var - s.pred_var) < 4 * s.emp_var_se


def test_prediction_absent_for_unsupported():
    assert E.prediction(C.loads('method.name = "FlowDPS"\n')) is None
    assert E.prediction(C.loads("guidance.reuse = true\n")) is None
    gmm = ('target.kind = "gmm"\ntarget.weights = [0.5, 0.5]\ntarget.means = [[-1.0], [1.0]]\n'
           "target.covs = [[[0.2]], [[0.2]]]\n")
    assert E.prediction(C.loads(gmm)) is None


def test_determinism_across_threads_and_chunks(monkeypatch):
    cfg = small('target.sigma1 = 1.0\nmethod.lambda = 0.3\nguidance.n_steps = 10\n'
                "guidance.renoise_c = 0.2\nguidance.renoise_knots = [0.5]\n", n=1000)
    ref, _, _ = E.simulate(cfg, threads=1)
    monkeypatch.setattr(E, "CHUNK", 97)
    for threads in (1, 3):
        out, _, _ = E.simulate(cfg, threads=threads)
        np.testing.assert_array_equal(out, ref)


def test_sweep_variance_decreases_with_lambda():
    cfg = small('target.sigma1 = 1.0\nguidance.n_steps = 50\nguidance.n_opt = 2\n'
                'sweep.lambdas = [0.0, 0.2, 0.6]\nsweep.methods = ["greedy", "exact", "tilt"]\n', n=3000)
    rows = E.lambda_sweep(cfg)
    assert len(rows) == 9
    for k in range(3):
        v = [r.emp_var for r in rows[3 * k:3 * k + 3]]
        assert v[0] > v[1] > v[2]


def test_sweep_rejects_negative():
    with pytest.raises(ConfigError):
        E.lambda_sweep(C.ExperimentConfig(), lambdas=[-0.1])


def test_early_stop_study_rows():
    cfg = small("target.sigma1 = 0.5\nmethod.lambda = 0.75\nguidance.n_steps = 40\n"
                "earlystop.t_stops = [0.3, 1.0]\n", n=2000)
    rows = E.early_stop_study(cfg)
    assert [r.method for r in rows] == ["FMRG-J", "FMRG-J", "FMRG-J:solve_t_stop"]
    assert rows[0].t_stop == 0.3 and rows[0].emp_var > rows[1].emp_var


def test_early_stop_rejects_bad_grid():
    with pytest.raises(ConfigError):
        E.early_stop_study(C.ExperimentConfig(), t_stops=[0.0])


def test_csv_row_format():
    s = E.EnsembleSummary("X", 0.5, 1.0, 10, 1, False, 21, 0.1, 0.01, 1.0, 0.02, -1.0, 0.03)
    row = s.row()
    assert len(row) == len(E.CSV_COLUMNS)
    assert row[5] == "false" and row[-1] == ""


def test_build_errors():
    with pytest.raises(ConfigError):
        E.build_target(C.TargetSpec(kind="cube"))
    with pytest.raises(ConfigError):
        E.build_reward(C.RewardSpec(a=[1.0, 2.0, 3.0]), 2)
    with pytest.raises(ConfigError):
        E.build_grid(C.GuidanceSpec(knots=[0.0, 0.7, 0.5, 1.0]))


def test_reduction_identities_exact():
    res = E.reduction_check(n_cases=12, seed=4)
    assert max(res.values()) <= 1e-10


def test_slope_grid_validation():
    cfg = C.loads("slope.lambda_min = 0.1\nslope.lambda_max = 0.01\n")
    with pytest.raises(ConfigError):
        E.slope_grid(cfg)


def test_small_inverse_problem():
    cfg = E.inverse_benchmark_config()
    cfg = replace(cfg, ensemble=replace(cfg.ensemble, n_particles=100), flowmap=C.FlowMapSpec(200))
    rows, truth, y = E.toy_inverse_problem(cfg)
    assert [r.method for r in rows] == ["unguided", "FMRG-E", "FMRG-J", "FlowDPS", "FlowChef"]
    assert all(r.nfe == 6 for r in rows[1:])
    assert y == pytest.approx(truth[:1])
