import warnings
from dataclasses import replace

import numpy as np
import pytest

from oracles import numeric_grad, rel_error
from brakeid import geometry, inverse
from brakeid.errors import IncompatibleForward, NormSpecMismatch, OutOfRangeTarget, ShapeMismatch
from brakeid.neural import Dense

# published (Loss_APT, Loss_Drag) pairs for the six weight settings, dots A..F
TABLE7 = {"A": (2.42e-3, 0.427), "B": (2.30e-3, 0.343), "C": (2.31e-3, 0.301),
          "D": (2.77e-3, 0.455), "E": (2.25e-3, 0.309), "F": (3.02e-3, 0.441)}


def _dims(stack):
    return [l.params["W"].shape for l in stack.layers if isinstance(l, Dense)]


def test_sid_architecture(apt_dnn):
    sid = inverse.build_sid(apt_dnn, seed=1)
    assert _dims(sid.inverse) == [(3, 256), (256, 256), (256, 128), (128, 64), (64, 13)]
    assert all(l.frozen for l in sid.apt.stack.layers)
    assert not any(l.frozen for l in apt_dnn.stack.layers)
    t = np.random.default_rng(0).random((5, 3))
    assert sid.apt.stack.forward(sid.decode(t)).shape == (5, 3)


def test_mid_architecture(apt_dnn, drag_bin):
    mid = inverse.build_mid(apt_dnn, drag_bin, seed=1)
    sid = inverse.build_sid(apt_dnn, seed=1)
    assert _dims(mid.inverse)[0] == (4, 256) and _dims(mid.inverse)[-1] == (64, 13)
    assert _dims(mid.inverse)[1:] == _dims(sid.inverse)[1:]
    assert (mid.w1, mid.w2) == (0.4, pytest.approx(0.6))
    assert mid.targets_to_input([[1.0, 2.0, 3.0]])[0, 3] == 0.0


def test_build_errors(apt_dnn, drag_bin, drag_multi):
    with pytest.raises(IncompatibleForward):
        inverse.build_sid(drag_bin)
    with pytest.raises(IncompatibleForward):
        inverse.build_mid(apt_dnn, drag_multi)
    other = replace(drag_bin, norm_spec={"x": {"min": [0.0] * 13, "max": [1.0] * 13}, "y": None})
    with pytest.raises(NormSpecMismatch):
        inverse.build_mid(apt_dnn, other)


def test_mid_loss_examples():
    assert inverse.mid_loss_from_parts(2.31e-3, 0.301, 0.4, 0.6) == pytest.approx(1.1046, abs=1e-12)
    rng = np.random.default_rng(0)
    p, t = rng.random((8, 3)), rng.random((8, 3))
    sid_loss = np.mean((p - t) ** 2)
    assert inverse.mid_loss(p, t, rng.random((8, 1)), 1.0, 0.0) == pytest.approx(1e3 * sid_loss)
    assert inverse.mid_loss(t, t, np.zeros((8, 1)), 0.4, 0.6) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        inverse.mid_loss_from_parts(1.0, 1.0, -0.1, 0.5)


def test_nondominated_on_published_sweep():
    keys = sorted(TABLE7)
    mask = inverse.nondominated([TABLE7[k] for k in keys])
    assert {k for k, m in zip(keys, mask) if m} == {"C", "E"}
    assert inverse.nondominated([(1.0, 1.0)]).tolist() == [True]
    assert inverse.nondominated([(1.0, 1.0), (1.0, 1.0)]).tolist() == [True, True]


def test_seal_fit_keeps_designs_valid():
    rng = np.random.default_rng(2)
    v = rng.random((5000, 13))
    u = inverse.SealFit().forward(v)
    assert np.all(geometry.valid_mask(geometry.denormalize(u)))
    untouched = [k for k in range(13) if k != 7]
    np.testing.assert_array_equal(u[:, untouched], v[:, untouched])


def test_seal_fit_gradient():
    rng = np.random.default_rng(3)
    v = rng.random((6, 13))
    v[:, 2] = np.r_[rng.uniform(0.0, 0.2, 3), rng.uniform(0.3, 1.0, 3)]  # both sides of the kink
    proj = rng.standard_normal((6, 13))
    fit = inverse.SealFit()
    fit.forward(v, training=True)
    dv = fit.backward(proj)
    num = numeric_grad(lambda: float(np.sum(fit.forward(v) * proj)), v, 1e-6)
    assert rel_error(dv, num) < 1e-6


def test_composite_gradient_matches_finite_differences(apt_dnn, drag_bin):
    mid = inverse.build_mid(apt_dnn, drag_bin, seed=4)
    t = np.random.default_rng(4).random((4, 4))
    t[:, 3] = 0
    mid.loss_and_grads(t)
    layer = mid.inverse.layers[-2]
    analytic = layer.grads["W"].copy()
    num = numeric_grad(lambda: mid.loss(t), layer.params["W"], 1e-6)
    assert rel_error(analytic, num) < 1e-4


def test_untrained_sid_is_inconsistent(apt_dnn, apt_ds):
    sid = inverse.build_sid(apt_dnn, seed=7)
    ev = inverse.evaluate_inverse(sid, apt_ds.y_raw("test"))
    assert ev.r2 < 0.5


def test_sid_consistency(sid_model, apt_ds):
    ev = inverse.evaluate_inverse(sid_model, apt_ds.y_raw("test"))
    assert ev.r2 >= 0.99
    assert ev.invalid_fraction == 0.0


def test_sid_best_checkpoints_nonincreasing(sid_model):
    h = sid_model.history
    running = np.minimum.accumulate(h.val_loss)
    assert np.all(np.diff(running) <= 0)
    assert h.val_loss[h.best_epoch - 1] == running[-1]


def test_infer_design_on_held_out_targets(sid_model, apt_ds):
    targets = apt_ds.y_raw("test")[:20]
    recs = inverse.infer_design(sid_model, targets)
    assert len(recs) == 20
    o = np.array([r.oracle_apt for r in recs])
    assert np.mean(np.abs(o - targets)) <= 0.15
    u = np.array([r.u for r in recs])
    assert np.all((u > 0) & (u < 1))
    assert all(r.validity == [] for r in recs)
    assert max(r.seconds for r in recs) < 0.1


def test_infer_design_warns_on_far_targets(sid_model):
    with pytest.warns(OutOfRangeTarget):
        recs = inverse.infer_design(sid_model, [[10.0, 20.0, 30.0]])
    assert len(recs) == 1 and recs[0].oracle_apt is not None
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        inverse.infer_design(sid_model, [[0.8, 2.1, 3.1]], verify=False)
    with pytest.raises(ShapeMismatch):
        inverse.infer_design(sid_model, [[1.0, 2.0]])


def test_inverse_training_leaves_forward_weights(sid_model, mid_model, forward_bytes, apt_dnn, drag_bin):
    assert sid_model.apt.stack.weight_bytes() == forward_bytes["apt"]
    assert mid_model.apt.stack.weight_bytes() == forward_bytes["apt"]
    assert mid_model.drag.stack.weight_bytes() == forward_bytes["drag"]
    assert apt_dnn.stack.weight_bytes() == forward_bytes["apt"]
    assert drag_bin.stack.weight_bytes() == forward_bytes["drag"]


def test_save_load_roundtrip(mid_model, tmp_path):
    path = mid_model.save(tmp_path / "mid.json")
    back = inverse.InverseModel.load(path)
    assert back.kind == "mid" and back.seal_fit and (back.w1, back.w2) == (mid_model.w1, mid_model.w2)
    targets = [[0.8, 2.1, 3.1], [0.9, 2.3, 3.3]]
    assert np.array_equal(back.generate(targets), mid_model.generate(targets))
    with pytest.raises(IncompatibleForward):
        inverse.InverseModel.load(mid_model.apt.save(tmp_path / "apt.json"))


def test_weight_sweep_single_row(apt_dnn, drag_bin, apt_ds):
    cfg = replace(inverse.MID_CONFIG, max_epochs=2, seed=1)
    rows = inverse.weight_sweep(apt_dnn, drag_bin, apt_ds, [0.5], cfg, seed=1)
    assert len(rows) == 1 and rows[0].nondominated and rows[0].w2 == 0.5
    text = inverse.sweep_csv(rows)
    assert text.splitlines()[0] == ",".join(inverse.SWEEP_COLUMNS) and len(text.splitlines()) == 2
    with pytest.raises(ValueError):
        inverse.weight_sweep(apt_dnn, drag_bin, apt_ds, [1.0], cfg)


def test_mid_without_drag_weight_is_scaled_apt_loss(apt_dnn, drag_bin, apt_ds):
    """w1 = 1, w2 = 0 reduces the composite objective to the scaled APT loss."""
    mid = inverse.build_mid(apt_dnn, drag_bin, seed=2, w1=1.0, w2=0.0)
    t = np.concatenate([apt_ds.y("val")[:16], np.zeros((16, 1))], axis=1)
    la, _ = mid.loss_parts(t)
    assert mid.loss(t) == pytest.approx(1e3 * la)
