"""Forward surrogates: APT regressors (DNN, baseline, CNN) and drag classifiers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry
from .dataset import LabeledDataset, argmax_decode, denormalize, multiclass_view, normalize
from .errors import DegenerateTruth, EmptyClass, MissingNormSpec, ShapeMismatch
from .neural import (
    Conv2D, Dense, Flatten, LayerStack, MaxPool2D, ReLU, SupervisedObjective, TrainConfig,
    load_model, mlp, save_model, train,
)
from .neural.train import History

APT_HIDDEN = (256, 256, 128, 64)
BASELINE_HIDDEN = (128,)
CNN_CHANNELS = (8, 16, 32, 64, 64)
CNN_FC = (512, 256, 128, 64, 32, 16)
CNN_RESOLUTION = 102
# stiffness/connector variables have no geometric footprint; they ride along as constant planes
CNN_SCALAR_COLUMNS = (9, 10, 11, 12)
DRAG_THRESHOLD = 0.5

APT_CONFIG = TrainConfig(learning_rate=5e-4, batch_size=128, loss_kind="mse")
DRAG_BINARY_CONFIG = TrainConfig(learning_rate=5.5e-3, batch_size=128, loss_kind="bce")
DRAG_MULTI_CONFIG = TrainConfig(learning_rate=2e-4, batch_size=128, loss_kind="ce")


# -- metrics -----------------------------------------------------------------

def _residual_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs truth {truth.shape}")
    return pred, truth


def metric_mae(pred, truth) -> float:
    pred, truth = _residual_pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def metric_rmse(pred, truth) -> float:
    pred, truth = _residual_pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def metric_r2(pred, truth) -> float:
    """Coefficient of determination about the truth mean.

    For 2-D inputs the per-column values are averaged uniformly.
    """
    pred, truth = _residual_pair(pred, truth)
    if truth.shape[0] < 2:
        raise DegenerateTruth("R^2 needs at least two samples")
    p2 = pred.reshape(truth.shape[0], -1)
    t2 = truth.reshape(truth.shape[0], -1)
    ss_tot = np.sum((t2 - t2.mean(axis=0)) ** 2, axis=0)
    if np.any(ss_tot <= 0.0):
        raise DegenerateTruth("truth is constant; R^2 undefined")
    ss_res = np.sum((p2 - t2) ** 2, axis=0)
    return float(np.mean(1.0 - ss_res / ss_tot))


@dataclass
class MetricReport:
    n: int
    mae: float | None = None
    rmse: float | None = None
    r2: float | None = None
    accuracy_percent: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def regression_report(pred, truth) -> MetricReport:
    try:
        r2 = metric_r2(pred, truth)
    except DegenerateTruth:
        r2 = None
    return MetricReport(n=int(np.shape(truth)[0]), mae=metric_mae(pred, truth),
                        rmse=metric_rmse(pred, truth), r2=r2)


def accuracy_percent(pred_labels, truth_labels) -> float:
    pred_labels = np.asarray(pred_labels).ravel()
    truth_labels = np.asarray(truth_labels).ravel()
    return float(100.0 * np.mean(pred_labels == truth_labels))


# -- architectures ---------------------------------------------------------

def apt_dnn_stack(seed: int, hidden=APT_HIDDEN) -> LayerStack:
    return LayerStack.build(mlp((geometry.N_VARS, *hidden, 3)), (geometry.N_VARS,), seed)


def apt_cnn_stack(seed: int, resolution: int = CNN_RESOLUTION) -> LayerStack:
    in_ch = 1 + len(CNN_SCALAR_COLUMNS)
    layers = []
    prev = in_ch
    for k, ch in enumerate(CNN_CHANNELS):
        layers += [Conv2D(prev, ch), ReLU()]
        if k < 4:
            layers.append(MaxPool2D())
        prev = ch
    layers.append(Flatten())
    side = resolution
    for _ in range(4):
        side //= 2
    if side < 1:
        raise ShapeMismatch(f"resolution {resolution} too small for four 2x2 pools")
    sizes = (CNN_CHANNELS[-1] * side * side, *CNN_FC, 3)
    layers += mlp(sizes)
    return LayerStack.build(layers, (in_ch, resolution, resolution), seed)


def drag_binary_stack(seed: int) -> LayerStack:
    return LayerStack.build(mlp((geometry.N_VARS, 128, 64, 1), head="sigmoid"), (geometry.N_VARS,), seed)


def drag_multiclass_stack(seed: int) -> LayerStack:
    return LayerStack.build(mlp((geometry.N_VARS, 128, 128, 7), head="softmax"), (geometry.N_VARS,), seed)


# -- model container ---------------------------------------------------------

MODEL_KINDS = ("apt-dnn", "apt-baseline", "apt-cnn", "drag-bin", "drag-multi")


@dataclass
class SurrogateModel:
    kind: str
    stack: LayerStack
    norm_spec: dict | None
    config: TrainConfig
    metrics: dict = field(default_factory=dict)
    history: History | None = None
    resolution: int | None = None

    @property
    def is_image_model(self) -> bool:
        return self.kind == "apt-cnn"

    def _spec(self):
        if not self.norm_spec or "x" not in self.norm_spec:
            raise MissingNormSpec(f"{self.kind} model has no stored normalisation spec")
        return self.norm_spec

    def to_unit(self, x):
        spec = self._spec()["x"]
        return normalize(np.atleast_2d(x), spec["min"], spec["max"])

    def predict_unit(self, u):
        """Raw network output for already-normalised designs (or CNN input tensors)."""
        u = np.asarray(u, dtype=np.float64)
        if self.is_image_model and u.ndim == 2:
            u = cnn_inputs(geometry.denormalize(u), self.resolution)
        return self.stack.forward(u)

    def predict(self, x):
        """Physical designs (or CNN input tensors) -> APT in mm, drag probability, or onset class."""
        x = np.asarray(x, dtype=np.float64)
        if self.is_image_model and x.ndim == 4:
            out = self.stack.forward(x)
        else:
            x2 = np.atleast_2d(x)
            if x2.shape[1] != geometry.N_VARS:
                raise ShapeMismatch(f"expected (k, {geometry.N_VARS}) designs, got {x.shape}")
            out = self.predict_unit(self.to_unit(x2))
        if self.kind.startswith("apt"):
            spec = self._spec().get("y")
            if not spec:
                raise MissingNormSpec("APT model lacks the label normalisation spec")
            return denormalize(out, spec["min"], spec["max"])
        if self.kind == "drag-bin":
            return out[:, 0]
        return argmax_decode(out)

    def save(self, path) -> Path:
        return save_model(
            path, {"forward": self.stack}, self.kind,
            norm_spec=self.norm_spec, train_config=self.config.to_dict(),
            seed=self.config.seed, resolution=self.resolution,
            metadata={"metrics": self.metrics,
                      "best_epoch": self.history.best_epoch if self.history else None,
                      "stopped_epoch": self.history.stopped_epoch if self.history else None},
        )

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        stacks, doc = load_model(path)
        if doc["kind"] not in MODEL_KINDS or "forward" not in stacks:
            raise ShapeMismatch(f"{path}: not a forward surrogate (kind {doc['kind']!r})")
        return cls(doc["kind"], stacks["forward"], doc.get("norm_spec"),
                   TrainConfig(**doc["train_config"]), doc.get("metadata", {}).get("metrics", {}),
                   None, doc.get("resolution"))


def predict_label(model: SurrogateModel, x):
    """Binary class for drag-bin models: probability >= 0.5 counts as amplified."""
    return (np.asarray(model.predict(x)) >= DRAG_THRESHOLD).astype(np.int64)


# -- training ---------------------------------------------------------------

def _parts(ds: LabeledDataset):
    return {p: (ds.u(p), ds.y(p)) for p in ("train", "val", "test")}


def _fit(kind, stack, parts, cfg, spec, loss_kind, resolution=None):
    cfg = replace(cfg, loss_kind=loss_kind)
    hist = train(SupervisedObjective(stack, loss_kind), parts["train"], parts["val"], cfg)
    return SurrogateModel(kind, stack, spec, cfg, history=hist, resolution=resolution)


def _apt_metrics(model: SurrogateModel, u_test, y_test) -> MetricReport:
    spec = model.norm_spec["y"]
    pred = denormalize(model.stack.forward(u_test), spec["min"], spec["max"])
    truth = denormalize(y_test, spec["min"], spec["max"])
    return regression_report(pred, truth)


def train_apt_dnn(ds: LabeledDataset, cfg: TrainConfig = APT_CONFIG, hidden=APT_HIDDEN,
                  kind: str = "apt-dnn") -> tuple[SurrogateModel, MetricReport]:
    """Train the 13 -> hidden -> 3 APT regressor; returns the model and its test report."""
    if ds.task != "apt":
        raise ValueError("APT regressor needs an apt dataset")
    parts = _parts(ds)
    model = _fit(kind, apt_dnn_stack(cfg.seed, hidden), parts, cfg, ds.norm_spec, "mse")
    report = _apt_metrics(model, *parts["test"])
    model.metrics = {"test": report.to_dict()}
    return model, report


def train_apt_baseline(ds: LabeledDataset, cfg: TrainConfig = APT_CONFIG):
    return train_apt_dnn(ds, cfg, BASELINE_HIDDEN, kind="apt-baseline")


def cnn_inputs(x, resolution: int = CNN_RESOLUTION) -> np.ndarray:
    """``(n, 5, r, r)`` tensors: the binary section plus one constant plane per stiffness variable."""
    x = np.atleast_2d(x)
    imgs = geometry.rasterize_batch(x, resolution).astype(np.float64)
    u = geometry.normalize(x)
    planes = np.broadcast_to(u[:, CNN_SCALAR_COLUMNS, None, None],
                             (x.shape[0], len(CNN_SCALAR_COLUMNS), resolution, resolution))
    return np.concatenate([imgs[:, None], planes], axis=1)


def train_apt_cnn(ds: LabeledDataset, cfg: TrainConfig = APT_CONFIG, resolution: int = CNN_RESOLUTION,
                  inputs: np.ndarray | None = None) -> tuple[SurrogateModel, MetricReport]:
    """Train the convolutional APT regressor.

    ``inputs`` overrides the rasterised tensors (one per dataset row), e.g. to
    probe the model with blank images.
    """
    if ds.task != "apt":
        raise ValueError("APT regressor needs an apt dataset")
    if inputs is None:
        inputs = cnn_inputs(ds.x, resolution)
    if inputs.shape[0] != len(ds) or inputs.shape[-1] != resolution:
        raise ShapeMismatch(f"inputs {inputs.shape} do not match {len(ds)} rows at {resolution}px")
    parts = {p: (inputs[ds.mask(p)], ds.y(p)) for p in ("train", "val", "test")}
    model = _fit("apt-cnn", apt_cnn_stack(cfg.seed, resolution), parts, cfg, ds.norm_spec, "mse",
                 resolution=resolution)
    report = _apt_metrics(model, *parts["test"])
    model.metrics = {"test": report.to_dict()}
    return model, report


def _require_classes(labels, split, classes, strict_all: bool):
    for part in ("train", "val", "test"):
        present = set(np.unique(labels[split == part]).tolist())
        missing = (set(classes) - present) if (strict_all or part == "train") else set()
        if missing:
            raise EmptyClass(f"{part} split lacks class(es) {sorted(missing)}")


def train_drag_binary(ds: LabeledDataset, cfg: TrainConfig = DRAG_BINARY_CONFIG):
    if ds.task != "drag":
        raise ValueError("drag classifier needs a drag dataset")
    _require_classes(ds.labels[:, 0], ds.split, (0, 1), strict_all=True)
    parts = _parts(ds)
    model = _fit("drag-bin", drag_binary_stack(cfg.seed), parts, cfg,
                 {"x": ds.norm_spec["x"], "y": None}, "bce")
    reports = {}
    for part in ("val", "test"):
        u, y = parts[part]
        pred = (model.stack.forward(u)[:, 0] >= DRAG_THRESHOLD).astype(np.int64)
        reports[part] = MetricReport(n=int(y.shape[0]), accuracy_percent=accuracy_percent(pred, y[:, 0]))
    model.metrics = {k: r.to_dict() for k, r in reports.items()}
    return model, reports


def train_drag_multiclass(ds: LabeledDataset, cfg: TrainConfig = DRAG_MULTI_CONFIG):
    """Onset-class model on amplified rows only (one-hot targets, softmax head)."""
    u, onehot, split = multiclass_view(ds)
    classes = np.argmax(onehot, axis=1)
    present = tuple(sorted(set(classes.tolist())))
    _require_classes(classes, split, present, strict_all=False)
    parts = {p: (u[split == p], onehot[split == p]) for p in ("train", "val", "test")}
    model = _fit("drag-multi", drag_multiclass_stack(cfg.seed), parts, cfg,
                 {"x": ds.norm_spec["x"], "y": None}, "ce")
    reports = {}
    for part in ("val", "test"):
        uu, yy = parts[part]
        pred = np.argmax(model.stack.forward(uu), axis=1)
        reports[part] = MetricReport(n=int(yy.shape[0]),
                                     accuracy_percent=accuracy_percent(pred, np.argmax(yy, axis=1)))
    model.metrics = {k: r.to_dict() for k, r in reports.items()}
    return model, reports


def write_report(path, report) -> None:
    if isinstance(report, MetricReport):
        doc = report.to_dict()
    else:
        doc = {k: (v.to_dict() if isinstance(v, MetricReport) else v) for k, v in report.items()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
