import json

import numpy as np
import pytest

from brakeid import baseline, oracle
from brakeid.errors import ShapeMismatch
from brakeid.neural import Dense, LayerStack


def _linear(a, b):
    layer = Dense(a.shape[0], a.shape[1])
    layer.params["W"] = a.copy()
    layer.params["b"] = b.copy()
    return LayerStack([layer], (a.shape[0],)).freeze()


@pytest.fixture(scope="module")
def realizable(apt_dnn):
    rng = np.random.default_rng(5)
    u0 = rng.uniform(0.15, 0.85, (3, 13))
    return u0, apt_dnn.stack.forward(u0)


def test_config_validation():
    with pytest.raises(ValueError):
        baseline.OptimConfig(learning_rate=0)
    with pytest.raises(ValueError):
        baseline.OptimConfig(armijo=1.5)
    with pytest.raises(ValueError):
        baseline.OptimConfig(n_starts=0)


def test_sqp_reaches_linear_least_squares_minimizer():
    rng = np.random.default_rng(0)
    a = np.eye(13) + 0.1 * rng.standard_normal((13, 13))
    b = 0.05 * rng.standard_normal(13)
    u_star = rng.uniform(0.2, 0.8, 13)
    target = u_star @ a + b
    rec = baseline.sqp_optimize(_linear(a, b), target)
    # (A^T A) is nonsingular, so the composite has the single minimizer u_star
    np.testing.assert_allclose(rec.u, u_star, atol=1e-6)
    assert rec.flagged is None
    assert rec.oracle != [] and rec.oracle == oracle.eval_apt(np.array(rec.u)).tolist()


def test_box_projection_on_identity_map():
    target = np.array([1.4, -0.3, 0.5, 0.2, 0.9, 2.0, -1.0, 0.3, 0.7, 0.1, 0.6, 0.4, 0.8])
    stack = _linear(np.eye(13), np.zeros(13))
    for run in (baseline.sqp_optimize, baseline.backprop_optimize):
        rec = run(stack, target)
        np.testing.assert_allclose(rec.u, np.clip(target, 0, 1), atol=1e-4)
        assert min(rec.u) >= 0.0 and max(rec.u) <= 1.0


def test_realizable_targets(apt_dnn, realizable):
    _, targets = realizable
    for t in targets:
        bp = baseline.backprop_optimize(apt_dnn, t)
        sq = baseline.sqp_optimize(apt_dnn, t)
        assert bp.loss < 1e-6
        assert sq.loss < 1e-4
        for rec in (bp, sq):
            u = np.array(rec.u)
            assert np.all((u >= 0) & (u <= 1))
            assert rec.wall_clock_seconds > 0 and rec.iterations >= 1


def test_records_in_physical_units(apt_dnn, realizable):
    _, targets = realizable
    rec = baseline.sqp_optimize(apt_dnn, targets[0])
    spec = apt_dnn.norm_spec["y"]
    phys = np.array(spec["min"]) + targets[0] * (np.array(spec["max"]) - np.array(spec["min"]))
    np.testing.assert_allclose(rec.target, phys, rtol=1e-12)
    np.testing.assert_allclose(rec.surrogate, phys, atol=0.02)


def test_finite_difference_gradient_matches_analytic(apt_dnn, realizable):
    _, targets = realizable
    prob = baseline._Problem(apt_dnn, targets[0])
    u = np.random.default_rng(2).random(13)
    _, g = prob.f_and_grad(u)
    np.testing.assert_allclose(prob.fd_grad(u, 1e-5), g, rtol=1e-5, atol=1e-9)


def test_target_shape_checked(apt_dnn):
    with pytest.raises(ShapeMismatch):
        baseline.backprop_optimize(apt_dnn, [0.5, 0.5])


def test_multistart_never_worse(apt_dnn):
    t = np.array([0.1, 0.9, 0.2])  # hard, off-manifold target
    cfg = baseline.OptimConfig(max_iter=200)
    one = baseline.backprop_optimize(apt_dnn, t, cfg)
    many = baseline.backprop_optimize(apt_dnn, t, baseline.OptimConfig(max_iter=200, n_starts=3, seed=4))
    assert many.loss <= one.loss


def test_checksum_is_stable_and_sensitive():
    t = np.array([[0.8, 2.1, 3.1], [0.9, 2.2, 3.2]])
    assert baseline.targets_checksum(t) == baseline.targets_checksum(t.copy())
    t2 = t.copy()
    t2[1, 2] = np.nextafter(t2[1, 2], 4)
    assert baseline.targets_checksum(t2) != baseline.targets_checksum(t)


@pytest.fixture(scope="module")
def small_reports(apt_dnn, sid_model, apt_ds):
    targets = apt_ds.y_raw("test")[:4]
    return baseline.run_benchmark({"apt": apt_dnn, "sid": sid_model}, targets,
                                  methods=("sid", "backprop", "sqp", "mid"))


def test_benchmark_report_fields(small_reports):
    by = {r.method: r for r in small_reports}
    assert set(by) == {"sid", "backprop", "sqp", "mid"}
    assert "no mid model" in by["mid"].error and by["mid"].records == []
    sums = {r.target_sha256 for r in small_reports}
    assert len(sums) == 1
    for m in ("sid", "backprop", "sqp"):
        r = by[m]
        assert r.error is None and r.n_targets == 4 and len(r.records) == 4
        assert r.rmse >= r.mae >= 0 and r.mae_oracle is not None
    doc = json.loads(baseline.report_json(small_reports))
    keys = {"method", "n_targets", "mae", "rmse", "r2", "mae_oracle", "rmse_oracle", "mean_seconds",
            "median_seconds", "records"}
    assert keys <= set(doc["methods"][0])


def test_single_method_report(apt_dnn, apt_ds):
    reps = baseline.run_benchmark({"apt": apt_dnn}, apt_ds.y_raw("test")[:2], methods=("sqp",))
    assert len(reps) == 1 and reps[0].method == "sqp"
    assert baseline.ordering_checks(reps) == {"time_order": None, "backprop_10x_sid": None, "mae_order": None}


def test_benchmark_rerun_identical_apart_from_timing(small_reports, apt_dnn, sid_model, apt_ds):
    again = baseline.run_benchmark({"apt": apt_dnn, "sid": sid_model}, apt_ds.y_raw("test")[:4],
                                   methods=("sid", "backprop", "sqp", "mid"))
    assert baseline.report_json(again, include_timing=False) == baseline.report_json(small_reports,
                                                                                   include_timing=False)


def test_written_artifacts(small_reports, tmp_path):
    paths = baseline.write_benchmark(tmp_path, small_reports)
    lines = paths["csv"].read_text().splitlines()
    assert lines[0].split(",") == list(baseline.CSV_COLUMNS) and len(lines) == 1 + 12
    svg = paths["svg"].read_text()
    assert svg.startswith("<svg") and svg.count("<rect") == 1 + 2 * 3
    assert json.loads(paths["json"].read_text())["methods"][0]["method"] == "sid"
