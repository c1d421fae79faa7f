"""Iterative design optimisation on a frozen APT surrogate, and the benchmark harness.

Two baselines search the normalised design box for one target at a time:

* ``backprop_optimize`` runs Adam on the design vector with exact input
  gradients from the network.
* ``sqp_optimize`` is projected BFGS with central-difference gradients.  For the
  unconstrained inverse problem this is what an SQP solver reduces to.

``run_benchmark`` times these against single-pass inverse networks on one
shared target set and writes JSON, CSV and an SVG bar chart.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, oracle
from .dataset import denormalize, normalize
from .errors import Diverged, LineSearchFailed, MethodFailed, ShapeMismatch
from .neural import LayerStack, losses
from .predict import metric_mae, metric_r2, metric_rmse
from .rng import make_rng

METHODS = ("sid", "mid", "backprop", "sqp")


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 0.01
    max_iter: int = 2000
    tol: float = 1e-10
    window: int = 20
    fd_step: float = 1e-5
    armijo: float = 1e-4
    max_halvings: int = 40
    sqp_max_iter: int = 500
    grad_tol: float = 1e-10
    n_starts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_iter < 1 or self.sqp_max_iter < 1 or self.window < 1:
            raise ValueError("learning rate and iteration limits must be positive")
        if self.fd_step <= 0 or not 0 < self.armijo < 1:
            raise ValueError("fd_step must be positive and armijo in (0, 1)")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class BenchmarkRecord:
    method: str
    target: list
    u: list
    surrogate: list
    oracle: list
    iterations: int
    wall_clock_seconds: float
    loss: float
    flagged: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class _Problem:
    """mse(forward(u), target) on the scaled outputs, with a frozen stack copy."""

    def __init__(self, forward_model, target):
        stack = forward_model.stack if hasattr(forward_model, "stack") else forward_model
        if not isinstance(stack, LayerStack) or len(stack.input_shape) != 1:
            raise ShapeMismatch("baselines need a vector-input forward stack")
        if not all(layer.frozen for layer in stack.layers):
            stack = copy.deepcopy(stack).freeze()
        self.stack = stack
        self.n = stack.input_shape[0]
        self.target = np.asarray(target, dtype=np.float64).reshape(1, -1)
        if (self.target.shape[1],) != stack.output_shape:
            raise ShapeMismatch(f"target has {self.target.shape[1]} values, model outputs {stack.output_shape}")

    def f(self, u) -> float:
        return losses.loss_mse(self.stack.forward(u[None]), self.target)

    def f_and_grad(self, u):
        pred = self.stack.forward(u[None], training=True)
        g = self.stack.backward(losses.grad_mse(pred, self.target))
        return losses.loss_mse(pred, self.target), g[0]

    def fd_grad(self, u, h):
        """Central differences, one forward pass per perturbed point (2n calls)."""
        g = np.empty(self.n)
        for i in range(self.n):
            up = u.copy()
            um = u.copy()
            up[i] += h
            um[i] -= h
            g[i] = (self.f(up) - self.f(um)) / (2.0 * h)
        return g


def _starts(n, cfg: OptimConfig):
    starts = [np.full(n, 0.5)]
    if cfg.n_starts > 1:
        rng = make_rng(cfg.seed, "multistart")
        starts += list(rng.random((cfg.n_starts - 1, n)))
    return starts


def _adam_run(prob: _Problem, u, cfg: OptimConfig):
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    history = []
    b1, b2, eps = 0.9, 0.999, 1e-8
    it = 0
    for it in range(1, cfg.max_iter + 1):
        loss, g = prob.f_and_grad(u)
        if not np.isfinite(loss):
            raise Diverged(f"backprop loss became {loss} at iteration {it}")
        history.append(loss)
        if len(history) > cfg.window and abs(history[-cfg.window - 1] - loss) < cfg.tol:
            break
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = cfg.learning_rate * (m / (1 - b1 ** it)) / (np.sqrt(v / (1 - b2 ** it)) + eps)
        u = np.clip(u - step, 0.0, 1.0)
    return u, prob.f(u), it, None


def _bfgs_run(prob: _Problem, u, cfg: OptimConfig):
    n = prob.n
    h_inv = np.eye(n)
    fu = prob.f(u)
    g = prob.fd_grad(u, cfg.fd_step)
    flag = None
    it = 0
    for it in range(1, cfg.sqp_max_iter + 1):
        # variables pinned at a bound with the gradient pushing outward stay put
        active = ((u <= 0.0) & (g > 0.0)) | ((u >= 1.0) & (g < 0.0))
        free = ~active
        if np.linalg.norm(g[free]) < cfg.grad_tol:
            break
        d = np.zeros(n)
        d[free] = -(h_inv[np.ix_(free, free)] @ g[free])
        if g @ d >= 0.0:
            h_inv = np.eye(n)
            d = np.where(free, -g, 0.0)
        alpha = 1.0
        for _ in range(cfg.max_halvings):
            u_new = np.clip(u + alpha * d, 0.0, 1.0)
            f_new = prob.f(u_new)
            if f_new <= fu + cfg.armijo * (g @ (u_new - u)):
                break
            alpha *= 0.5
        else:
            flag = LineSearchFailed.__name__
            break
        if not np.isfinite(f_new):
            raise Diverged(f"SQP objective became {f_new} at iteration {it}")
        g_new = prob.fd_grad(u_new, cfg.fd_step)
        s = u_new - u
        y = g_new - g
        sy = s @ y
        if sy > 1e-16:
            rho = 1.0 / sy
            eye = np.eye(n)
            h_inv = (eye - rho * np.outer(s, y)) @ h_inv @ (eye - rho * np.outer(y, s)) + rho * np.outer(s, s)
        done = fu - f_new <= 1e-20
        u, fu, g = u_new, f_new, g_new
        if done:
            break
    return u, fu, it, flag


def _optimize(method, run, forward_model, target, cfg):
    prob = _Problem(forward_model, target)
    start = time.perf_counter()
    best = None
    total_iters = 0
    for u0 in _starts(prob.n, cfg):
        u, loss, iters, flag = run(prob, u0.copy(), cfg)
        total_iters += iters
        if best is None or loss < best[1]:
            best = (u, loss, flag)
    seconds = time.perf_counter() - start
    u, loss, flag = best
    return _record(method, forward_model, prob.target[0], u, total_iters, seconds, loss, flag)


def _label_spec(forward_model):
    spec = getattr(forward_model, "norm_spec", None)
    return spec.get("y") if spec else None


def _record(method, forward_model, target_scaled, u, iterations, seconds, loss, flag):
    """Build a record in physical units when the model carries a label spec."""
    stack = forward_model.stack if hasattr(forward_model, "stack") else forward_model
    pred = stack.forward(u[None])[0]
    spec = _label_spec(forward_model)
    if spec:
        target = denormalize(target_scaled, spec["min"], spec["max"])
        pred = denormalize(pred, spec["min"], spec["max"])
    else:
        target = target_scaled
    o = oracle.eval_apt(u).tolist() if u.shape[0] == geometry.N_VARS else []
    return BenchmarkRecord(method, np.asarray(target).tolist(), u.tolist(), np.asarray(pred).tolist(), o,
                           int(iterations), float(seconds), float(loss), flag)


def backprop_optimize(forward_model, target, cfg: OptimConfig = OptimConfig()) -> BenchmarkRecord:
    """Adam on the design vector; ``target`` is in the model's scaled output space."""
    return _optimize("backprop", _adam_run, forward_model, target, cfg)


def sqp_optimize(forward_model, target, cfg: OptimConfig = OptimConfig()) -> BenchmarkRecord:
    """Projected BFGS with central-difference gradients and Armijo backtracking."""
    return _optimize("sqp", _bfgs_run, forward_model, target, cfg)


# -- benchmark -------------------------------------------------------------------

def targets_checksum(targets) -> str:
    """sha256 over the repr text of every target value, row by row."""
    text = "\n".join(",".join(repr(float(v)) for v in row) for row in np.atleast_2d(targets))
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def _inverse_records(model, method, targets):
    records = []
    for t in targets:
        start = time.perf_counter()
        u = model.generate(t[None])
        seconds = time.perf_counter() - start
        scaled = normalize(t, model.label_spec["min"], model.label_spec["max"])
        loss = losses.loss_mse(model.apt.stack.forward(u), scaled[None])
        records.append(_record(method, model.apt, scaled, u[0], 1, seconds, loss, None))
    return records


@dataclass
class MethodReport:
    method: str
    n_targets: int
    target_sha256: str
    mae: float | None = None
    rmse: float | None = None
    r2: float | None = None
    mae_oracle: float | None = None
    rmse_oracle: float | None = None
    mean_seconds: float | None = None
    median_seconds: float | None = None
    error: str | None = None
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [r if isinstance(r, dict) else r.to_dict() for r in self.records]
        return d


def _summarise(method, targets, records, checksum) -> MethodReport:
    sur = np.array([r.surrogate for r in records])
    orc = np.array([r.oracle for r in records])
    secs = np.array([r.wall_clock_seconds for r in records])
    return MethodReport(method, len(records), checksum,
                        mae=metric_mae(sur, targets), rmse=metric_rmse(sur, targets), r2=metric_r2(sur, targets),
                        mae_oracle=metric_mae(orc, targets), rmse_oracle=metric_rmse(orc, targets),
                        mean_seconds=float(secs.mean()), median_seconds=float(np.median(secs)),
                        records=records)


def run_benchmark(models: dict, targets, methods=("sid", "backprop", "sqp"),
                  cfg: OptimConfig = OptimConfig()) -> list[MethodReport]:
    """Run each method over the same physical APT targets.

    ``models`` maps ``"apt"`` to the forward surrogate and ``"sid"``/``"mid"`` to
    inverse models.  A failing method yields a report with ``error`` set.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape[1] != 3:
        raise ShapeMismatch(f"expected (k, 3) APT targets, got {targets.shape}")
    checksum = targets_checksum(targets)
    reports = []
    for method in methods:
        try:
            if method not in METHODS:
                raise MethodFailed(f"unknown method {method!r}")
            if method in ("sid", "mid"):
                if method not in models:
                    raise MethodFailed(f"no {method} model supplied")
                records = _inverse_records(models[method], method, targets)
            else:
                if "apt" not in models:
                    raise MethodFailed("iterative baselines need the APT forward model")
                apt = models["apt"]
                spec = _label_spec(apt)
                scaled = normalize(targets, spec["min"], spec["max"])
                run = backprop_optimize if method == "backprop" else sqp_optimize
                records = [run(apt, t, cfg) for t in scaled]
            reports.append(_summarise(method, targets, records, checksum))
        except Exception as exc:  # noqa: BLE001 - failures become report rows
            reports.append(MethodReport(method, int(targets.shape[0]), checksum,
                                        error=f"{type(exc).__name__}: {exc}"))
    return reports


CSV_COLUMNS = ("method", "index", "target_1", "target_2", "target_3", "surrogate_1", "surrogate_2",
               "surrogate_3", "oracle_1", "oracle_2", "oracle_3", "iterations", "wall_clock_seconds",
               "loss", "flagged")


def report_json(reports, include_timing: bool = True) -> str:
    doc = []
    for rep in reports:
        d = rep.to_dict()
        if not include_timing:
            d.pop("mean_seconds")
            d.pop("median_seconds")
            for r in d["records"]:
                r.pop("wall_clock_seconds")
        doc.append(d)
    return json.dumps({"methods": doc}, sort_keys=True, indent=1) + "\n"


def report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for i, r in enumerate(rep.records):
            o = r.oracle or [""] * 3
            w.writerow([rep.method, i, *map(repr, r.target), *map(repr, r.surrogate), *map(repr, o),
                        r.iterations, repr(r.wall_clock_seconds), repr(r.loss), r.flagged or ""])
    return buf.getvalue()


def report_svg(reports, width: int = 640, height: int = 300) -> str:
    """Two bar panels: surrogate-space MAE and log10 median seconds per method."""
    ok = [r for r in reports if r.error is None]
    panels = [("surrogate MAE (mm)", [r.mae for r in ok], False),
              ("median seconds (log10)", [r.median_seconds for r in ok], True)]
    pw = width / 2
    top, bottom = 30.0, height - 40.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    colours = ("#4c72b0", "#dd8452", "#55a868", "#c44e52")
    for p, (title, vals, log) in enumerate(panels):
        x0 = p * pw + 40
        out.append(f'<text x="{p * pw + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>')
        out.append(f'<line x1="{x0:.1f}" y1="{bottom:.1f}" x2="{x0 + pw - 60:.1f}" y2="{bottom:.1f}" stroke="black"/>')
        if not vals:
            continue
        if log:
            scaled = np.log10(np.maximum(vals, 1e-9))
            base = min(0.0, float(np.floor(scaled.min())))
            scaled = scaled - base
        else:
            scaled = np.asarray(vals, dtype=float)
        peak = float(scaled.max()) or 1.0
        bw = (pw - 60) / len(vals)
        for i, (rep, v, s) in enumerate(zip(ok, vals, scaled)):
            h = (bottom - top) * s / peak
            x = x0 + i * bw + 0.15 * bw
            out.append(f'<rect x="{x:.1f}" y="{bottom - h:.1f}" width="{0.7 * bw:.1f}" height="{h:.1f}" '
                       f'fill="{colours[i % len(colours)]}"/>')
            out.append(f'<text x="{x + 0.35 * bw:.1f}" y="{bottom + 14:.1f}" text-anchor="middle" '
                       f'font-size="11">{rep.method}</text>')
            out.append(f'<text x="{x + 0.35 * bw:.1f}" y="{bottom - h - 4:.1f}" text-anchor="middle" '
                       f'font-size="10">{v:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def ordering_checks(reports) -> dict:
    """Timing and accuracy orderings among sid, backprop and sqp (missing methods -> None)."""
    by = {r.method: r for r in reports if r.error is None}
    if not all(m in by for m in ("sid", "backprop", "sqp")):
        return {"time_order": None, "backprop_10x_sid": None, "mae_order": None}
    s, b, q = by["sid"], by["backprop"], by["sqp"]
    return {"time_order": s.median_seconds < b.median_seconds < q.median_seconds,
            "backprop_10x_sid": b.median_seconds >= 10 * s.median_seconds,
            "mae_order": s.mae <= b.mae <= q.mae}


def write_benchmark(out_dir, reports) -> dict:
    out_dir = Path(out_dir)
    paths = {"json": out_dir / "benchmark.json", "csv": out_dir / "benchmark.csv",
             "svg": out_dir / "benchmark.svg"}
    paths["json"].write_text(report_json(reports), encoding="utf-8")
    paths["csv"].write_text(report_csv(reports), encoding="utf-8")
    paths["svg"].write_text(report_svg(reports), encoding="utf-8")
    return paths
