"""Tandem inverse networks trained through frozen forward surrogates.

SID maps APT targets ``(y1, y2, y3)`` to a normalised design and is trained so
that the frozen APT regressor reproduces the targets.  MID adds a drag target
``y4`` (always 0) and the frozen binary drag classifier in parallel; its loss
is ``w1 * kA * mse(APT) + w2 * kD * bce(drag, 0)``.
"""

from __future__ import annotations

import copy
import csv
import io
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry, oracle
from .dataset import LabeledDataset, denormalize, normalize
from .errors import IncompatibleForward, NormSpecMismatch, OutOfRangeTarget, ShapeMismatch
from .neural import LayerStack, TrainConfig, load_model, mlp, save_model, train
from .neural import losses
from .neural.train import History
from .predict import SurrogateModel, metric_mae, metric_r2, metric_rmse

INVERSE_HIDDEN = (256, 256, 128, 64)
KAPPA_APT = 1e3
KAPPA_DRAG = 1.0
DEFAULT_SWEEP = (0.6, 0.5, 0.4, 0.3, 0.2, 0.1)
TARGET_MARGIN = 0.10

SID_CONFIG = TrainConfig(learning_rate=5e-4, batch_size=128, loss_kind="mse")
MID_CONFIG = TrainConfig(learning_rate=1e-5, batch_size=128, loss_kind="composite")


def inverse_stack(n_targets: int, seed: int) -> LayerStack:
    """targets -> 256 -> 256 -> 128 -> 64 -> 13, sigmoid head keeps designs inside the box."""
    return LayerStack.build(mlp((n_targets, *INVERSE_HIDDEN, geometry.N_VARS), head="sigmoid"),
                            (n_targets,), seed)


class SealFit:
    """Differentiable decoder step that keeps seal height <= groove depth.

    The sigmoid head proposes ``v`` in the unit box; the seal-height column is
    rescaled to the feasible fraction for the proposed groove depth, so every
    generated design passes the geometry validity rules by construction.
    """

    def __init__(self):
        self._cache = None

    @staticmethod
    def _fraction(u_depth):
        depth = geometry.LOWER[2] + u_depth * geometry.SPAN[2]
        frac = (np.minimum(geometry.UPPER[7], depth) - geometry.LOWER[7]) / geometry.SPAN[7]
        slope = np.where(depth < geometry.UPPER[7], geometry.SPAN[2] / geometry.SPAN[7], 0.0)
        return frac, slope

    def forward(self, v, training=False):
        frac, slope = self._fraction(v[:, 2])
        u = v.copy()
        u[:, 7] = v[:, 7] * frac
        if training:
            self._cache = (v, frac, slope)
        return u

    def backward(self, du):
        v, frac, slope = self._cache
        dv = du.copy()
        dv[:, 7] = du[:, 7] * frac
        dv[:, 2] += du[:, 7] * v[:, 7] * slope
        return dv


def _frozen_copy(model: SurrogateModel) -> SurrogateModel:
    m = copy.deepcopy(model)
    m.stack.freeze()
    return m


@dataclass
class InverseModel:
    kind: str  # "sid" | "mid"
    inverse: LayerStack
    apt: SurrogateModel
    drag: SurrogateModel | None = None
    w1: float = 1.0
    w2: float = 0.0
    kappa_apt: float = KAPPA_APT
    kappa_drag: float = KAPPA_DRAG
    config: TrainConfig | None = None
    history: History | None = None
    metadata: dict = field(default_factory=dict)
    seal_fit: bool = True

    def __post_init__(self):
        self._fit_map = SealFit() if self.seal_fit else None

    def decode(self, t, training=False):
        """Network input -> normalised design."""
        v = self.inverse.forward(t, training=training)
        return self._fit_map.forward(v, training) if self._fit_map else v

    @property
    def n_targets(self) -> int:
        return 3 if self.kind == "sid" else 4

    @property
    def label_spec(self) -> dict:
        return self.apt.norm_spec["y"]

    # objective protocol for neural.train ------------------------------------

    def params(self):
        return self.inverse.trainable_params()

    def _split_losses(self, t, training):
        u = self.decode(t, training=training)
        apt_pred = self.apt.stack.forward(u, training=training)
        loss_apt = losses.loss_mse(apt_pred, t[:, :3])
        if self.kind == "sid":
            return u, apt_pred, None, loss_apt, 0.0
        drag_prob = self.drag.stack.forward(u, training=training)
        loss_drag = losses.loss_bce(drag_prob, np.zeros_like(drag_prob))
        return u, apt_pred, drag_prob, loss_apt, loss_drag

    def combine(self, loss_apt: float, loss_drag: float) -> float:
        if self.kind == "sid":
            return loss_apt
        return mid_loss_from_parts(loss_apt, loss_drag, self.w1, self.w2, self.kappa_apt, self.kappa_drag)

    def loss(self, t, _y=None) -> float:
        _, _, _, la, ld = self._split_losses(t, training=False)
        return self.combine(la, ld)

    def loss_parts(self, t) -> tuple[float, float]:
        _, _, _, la, ld = self._split_losses(t, training=False)
        return la, ld

    def loss_and_grads(self, t, _y=None):
        u, apt_pred, drag_prob, la, ld = self._split_losses(t, training=True)
        scale_apt = 1.0 if self.kind == "sid" else self.w1 * self.kappa_apt
        du = self.apt.stack.backward(scale_apt * losses.grad_mse(apt_pred, t[:, :3]))
        if self.kind == "mid":
            g = losses.grad_bce(drag_prob, np.zeros_like(drag_prob))
            du = du + self.drag.stack.backward(self.w2 * self.kappa_drag * g)
        if self._fit_map:
            du = self._fit_map.backward(du)
        self.inverse.backward(du)
        return self.combine(la, ld), self.inverse.trainable_grads()

    # inference ----------------------------------------------------------------

    def targets_to_input(self, apt_targets):
        """Physical APT targets ``(k, 3)`` -> network input (scaled, plus y4 = 0 for MID)."""
        apt_targets = np.atleast_2d(np.asarray(apt_targets, dtype=np.float64))
        if apt_targets.shape[1] != 3:
            raise ShapeMismatch(f"expected (k, 3) APT targets, got {apt_targets.shape}")
        t = normalize(apt_targets, self.label_spec["min"], self.label_spec["max"])
        if self.kind == "mid":
            t = np.concatenate([t, np.zeros((t.shape[0], 1))], axis=1)
        return t

    def generate(self, apt_targets) -> np.ndarray:
        """Normalised designs for physical APT targets (one forward pass)."""
        return self.decode(self.targets_to_input(apt_targets))

    # persistence ----------------------------------------------------------------

    def save(self, path) -> Path:
        stacks = {"inverse": self.inverse, "apt": self.apt.stack}
        if self.drag is not None:
            stacks["drag"] = self.drag.stack
        return save_model(
            path, stacks, self.kind,
            norm_spec={"x": self.apt.norm_spec["x"], "y": self.label_spec},
            forward_kinds={"apt": self.apt.kind, **({"drag": self.drag.kind} if self.drag else {})},
            seal_fit=self.seal_fit,
            weights={"w1": self.w1, "w2": self.w2, "kappa_apt": self.kappa_apt, "kappa_drag": self.kappa_drag},
            train_config=self.config.to_dict() if self.config else None,
            seed=self.config.seed if self.config else None,
            metadata={**self.metadata,
                      "best_epoch": self.history.best_epoch if self.history else None,
                      "stopped_epoch": self.history.stopped_epoch if self.history else None},
        )

    @classmethod
    def load(cls, path) -> "InverseModel":
        stacks, doc = load_model(path)
        if doc["kind"] not in ("sid", "mid") or "inverse" not in stacks or "apt" not in stacks:
            raise IncompatibleForward(f"{path}: not an inverse model (kind {doc['kind']!r})")
        spec = doc["norm_spec"]
        cfg = TrainConfig(**doc["train_config"]) if doc.get("train_config") else None
        kinds = doc.get("forward_kinds", {})
        apt = SurrogateModel(kinds.get("apt", "apt-dnn"), stacks["apt"], spec, cfg or SID_CONFIG)
        drag = None
        if "drag" in stacks:
            drag = SurrogateModel(kinds.get("drag", "drag-bin"), stacks["drag"], {"x": spec["x"], "y": None},
                                  cfg or MID_CONFIG)
        w = doc.get("weights", {})
        return cls(doc["kind"], stacks["inverse"], apt, drag, w.get("w1", 1.0), w.get("w2", 0.0),
                   w.get("kappa_apt", KAPPA_APT), w.get("kappa_drag", KAPPA_DRAG), cfg, None,
                   doc.get("metadata", {}), bool(doc.get("seal_fit", True)))


def mid_loss_from_parts(loss_apt, loss_drag, w1, w2, kappa_apt=KAPPA_APT, kappa_drag=KAPPA_DRAG) -> float:
    if w1 < 0 or w2 < 0:
        raise ValueError("loss weights must be non-negative")
    return w1 * kappa_apt * loss_apt + w2 * kappa_drag * loss_drag


def mid_loss(apt_pred, apt_target, drag_prob, w1, w2, kappa_apt=KAPPA_APT, kappa_drag=KAPPA_DRAG) -> float:
    """Weighted APT regression loss plus the drag-free penalty (drag target is always 0)."""
    drag_prob = np.asarray(drag_prob, dtype=np.float64)
    return mid_loss_from_parts(losses.loss_mse(apt_pred, apt_target),
                               losses.loss_bce(drag_prob, np.zeros_like(drag_prob)),
                               w1, w2, kappa_apt, kappa_drag)


def _check_apt(apt: SurrogateModel):
    if apt.kind not in ("apt-dnn", "apt-baseline") or apt.stack.input_shape != (geometry.N_VARS,) \
            or apt.stack.output_shape != (3,):
        raise IncompatibleForward(f"need a 13 -> 3 design-space APT regressor, got {apt.kind}")
    if not apt.norm_spec or not apt.norm_spec.get("y"):
        raise IncompatibleForward("APT model lacks the label normalisation spec")


def build_sid(apt_model: SurrogateModel, seed: int = 0, seal_fit: bool = True) -> InverseModel:
    _check_apt(apt_model)
    return InverseModel("sid", inverse_stack(3, seed), _frozen_copy(apt_model), seal_fit=seal_fit)


def build_mid(apt_model: SurrogateModel, drag_model: SurrogateModel, seed: int = 0,
              w1: float = 0.4, w2: float | None = None,
              kappa_apt: float = KAPPA_APT, kappa_drag: float = KAPPA_DRAG,
              seal_fit: bool = True) -> InverseModel:
    _check_apt(apt_model)
    if drag_model.kind != "drag-bin" or drag_model.stack.output_shape != (1,) \
            or drag_model.stack.input_shape != (geometry.N_VARS,):
        raise IncompatibleForward(f"MID needs the binary drag classifier, got {drag_model.kind}")
    if apt_model.norm_spec["x"] != drag_model.norm_spec["x"]:
        raise NormSpecMismatch("APT and drag models were trained on different design scalings")
    w2 = 1.0 - w1 if w2 is None else w2
    return InverseModel("mid", inverse_stack(4, seed), _frozen_copy(apt_model), _frozen_copy(drag_model),
                        w1, w2, kappa_apt, kappa_drag, seal_fit=seal_fit)


def target_sets(ds: LabeledDataset) -> dict:
    """Scaled APT label vectors of each partition (the inverse training targets)."""
    if ds.task != "apt":
        raise ValueError("inverse targets come from the apt dataset")
    return {p: ds.y(p) for p in ("train", "val", "test")}


def _fit(model: InverseModel, ds: LabeledDataset, cfg: TrainConfig) -> InverseModel:
    sets = target_sets(ds)
    if model.kind == "mid":
        sets = {p: np.concatenate([t, np.zeros((t.shape[0], 1))], axis=1) for p, t in sets.items()}
    cfg = replace(cfg, loss_kind="mse" if model.kind == "sid" else "composite")
    model.history = train(model, (sets["train"], sets["train"]), (sets["val"], sets["val"]), cfg)
    model.config = cfg
    la, ld = model.loss_parts(sets["val"])
    model.metadata.update({"val_loss_apt": la, "val_loss_drag": ld})
    return model


def train_sid(model: InverseModel, ds: LabeledDataset, cfg: TrainConfig = SID_CONFIG) -> InverseModel:
    if model.kind != "sid":
        raise ValueError("train_sid needs a SID model")
    return _fit(model, ds, cfg)


def train_mid(model: InverseModel, ds: LabeledDataset, cfg: TrainConfig = MID_CONFIG) -> InverseModel:
    if model.kind != "mid":
        raise ValueError("train_mid needs a MID model")
    return _fit(model, ds, cfg)


# -- inference -----------------------------------------------------------------

@dataclass
class DesignRecord:
    targets: list
    x: list
    u: list
    surrogate_apt: list
    surrogate_drag_prob: float | None
    oracle_apt: list | None
    oracle_drag_amplified: bool | None
    oracle_drag_onset_bar: int | None
    validity: list
    seconds: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _warn_out_of_range(model: InverseModel, targets):
    lo = np.asarray(model.label_spec["min"])
    hi = np.asarray(model.label_spec["max"])
    pad = TARGET_MARGIN * (hi - lo)
    bad = np.any((targets < lo - pad) | (targets > hi + pad), axis=1)
    for i in np.flatnonzero(bad):
        warnings.warn(f"target {targets[i].tolist()} lies outside the training label range +-10%",
                      OutOfRangeTarget, stacklevel=3)


def infer_design(model: InverseModel, apt_targets, verify: bool = True) -> list[DesignRecord]:
    """One inverse pass per target; optional oracle verification of the generated design."""
    targets = np.atleast_2d(np.asarray(apt_targets, dtype=np.float64))
    if targets.shape[1] != 3:
        raise ShapeMismatch(f"expected 3 APT target values per design, got {targets.shape[1]}")
    _warn_out_of_range(model, targets)
    records = []
    spec = model.label_spec
    for t in targets:
        start = time.perf_counter()
        u = model.generate(t[None])
        x = geometry.denormalize(u)
        seconds = time.perf_counter() - start
        u_box = np.clip(u, 0.0, 1.0)
        sur = denormalize(model.apt.stack.forward(u_box), spec["min"], spec["max"])[0]
        prob = float(model.drag.stack.forward(u_box)[0, 0]) if model.drag is not None else None
        if verify:
            o_apt = oracle.eval_apt(u_box[0])
            amp, onset = oracle.eval_drag(u_box[0])
        else:
            o_apt, amp, onset = None, None, None
        records.append(DesignRecord(
            targets=t.tolist(), x=x[0].tolist(), u=u[0].tolist(), surrogate_apt=sur.tolist(),
            surrogate_drag_prob=prob, oracle_apt=None if o_apt is None else o_apt.tolist(),
            oracle_drag_amplified=amp, oracle_drag_onset_bar=onset,
            validity=geometry.validate(x[0]), seconds=seconds))
    return records


@dataclass
class InverseEvaluation:
    mae: float
    rmse: float
    r2: float
    mae_oracle: float
    rmse_oracle: float
    r2_oracle: float
    drag_free_rate: float
    invalid_fraction: float
    n: int


def evaluate_inverse(model: InverseModel, apt_targets) -> InverseEvaluation:
    """Batch accuracy of generated designs, in surrogate space and against the oracle."""
    targets = np.atleast_2d(np.asarray(apt_targets, dtype=np.float64))
    u = model.generate(targets)
    spec = model.label_spec
    sur = denormalize(model.apt.stack.forward(u), spec["min"], spec["max"])
    o_apt = oracle.eval_apt(u)
    amp, _ = oracle.eval_drag(u)
    invalid = ~geometry.valid_mask(geometry.denormalize(u))
    return InverseEvaluation(
        mae=metric_mae(sur, targets), rmse=metric_rmse(sur, targets), r2=metric_r2(sur, targets),
        mae_oracle=metric_mae(o_apt, targets), rmse_oracle=metric_rmse(o_apt, targets),
        r2_oracle=metric_r2(o_apt, targets), drag_free_rate=float(np.mean(~amp)),
        invalid_fraction=float(np.mean(invalid)), n=targets.shape[0])


# -- weight sweep ----------------------------------------------------------------

SWEEP_COLUMNS = ("w1", "w2", "loss_apt", "loss_drag", "drag_free_rate", "nondominated")


def nondominated(points) -> np.ndarray:
    """Mask of points not dominated under joint minimisation of every column."""
    pts = np.asarray(points, dtype=np.float64)
    keep = np.ones(pts.shape[0], dtype=bool)
    for i in range(pts.shape[0]):
        others = np.delete(pts, i, axis=0)
        dominated = np.all(others <= pts[i], axis=1) & np.any(others < pts[i], axis=1)
        keep[i] = not dominated.any()
    return keep


@dataclass
class SweepRow:
    w1: float
    w2: float
    loss_apt: float
    loss_drag: float
    drag_free_rate: float
    nondominated: bool = False
    model: InverseModel | None = None


def weight_sweep(apt_model: SurrogateModel, drag_model: SurrogateModel, ds: LabeledDataset,
                 w1_list=DEFAULT_SWEEP, cfg: TrainConfig = MID_CONFIG, seed: int = 0) -> list[SweepRow]:
    """One MID per ``(w1, 1 - w1)`` pair, all from the same seed."""
    for w1 in w1_list:
        if not 0.0 < w1 < 1.0:
            raise ValueError(f"sweep weights must lie in (0, 1), got {w1}")
    test_targets = ds.y_raw("test")
    rows = []
    for w1 in w1_list:
        model = build_mid(apt_model, drag_model, seed=seed, w1=w1, w2=1.0 - w1)
        train_mid(model, ds, cfg)
        ev = evaluate_inverse(model, test_targets)
        rows.append(SweepRow(w1, 1.0 - w1, model.metadata["val_loss_apt"], model.metadata["val_loss_drag"],
                             ev.drag_free_rate, model=model))
    flags = nondominated([(r.loss_apt, r.loss_drag) for r in rows])
    for row, flag in zip(rows, flags):
        row.nondominated = bool(flag)
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([repr(r.w1), repr(r.w2), repr(r.loss_apt), repr(r.loss_drag),
                    repr(r.drag_free_rate), str(r.nondominated).lower()])
    return buf.getvalue()
