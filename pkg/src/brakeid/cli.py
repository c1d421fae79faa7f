"""Command-line pipeline: gen -> train -> infer / benchmark / sweep / render.

Every stage reads and writes plain files, so each hand-off can be inspected.
Options may also come from a flat ``key = value`` file passed with
``--config``; keys are option names with dashes or underscores
(``n_apt = 1000``).  Flags given on the command line win.

Exit codes: 0 ok, 64 usage, 2 IO, 3 missing or invalid artifact, 4 training
divergence, 5 malformed input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baseline, dataset, geometry, inverse, oracle, predict
from .errors import (
    CorruptRow, DegenerateColumn, Diverged, EmptyClass, EmptyDataset, IncompatibleForward, InvalidDesign,
    NormSpecMismatch, OutOfRange, OutOfRangeTarget, SchemaMismatch, ShapeMismatch, TooFewRows,
)

OUT_ENV = "BRAKEID_OUT"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ARTIFACT, EXIT_DIVERGED, EXIT_INPUT = 0, 64, 2, 3, 4, 5

TRAIN_KINDS = ("apt-dnn", "apt-baseline", "apt-cnn", "drag-bin", "drag-multi", "sid", "mid")
DEFAULT_CONFIGS = {
    "apt-dnn": predict.APT_CONFIG, "apt-baseline": predict.APT_CONFIG, "apt-cnn": predict.APT_CONFIG,
    "drag-bin": predict.DRAG_BINARY_CONFIG, "drag-multi": predict.DRAG_MULTI_CONFIG,
    "sid": inverse.SID_CONFIG, "mid": inverse.MID_CONFIG,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, f"{self.prog}: {message}")


# -- argument helpers ---------------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _float_list(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _name_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def read_config(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_USAGE, f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _default_out() -> str:
    return os.environ.get(OUT_ENV, ".")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brakeid", description="Seal-groove surrogate and inverse-design pipeline.")
    p.add_argument("--config", help="flat key = value file supplying option defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if seed:
            sp.add_argument("--seed", type=int, default=42)

    g = sub.add_parser("gen", help="sample, label and split the APT and drag datasets")
    common(g)
    g.add_argument("--n-apt", type=_positive_int, default=1000)
    g.add_argument("--n-drag", type=_positive_int, default=2000)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("kind", choices=TRAIN_KINDS)
    common(t)
    t.add_argument("--data", help="dataset CSV (default <out>/apt.csv or <out>/drag.csv)")
    t.add_argument("--apt-model", help="frozen APT regressor for sid/mid (default <out>/apt-dnn.json)")
    t.add_argument("--drag-model", help="frozen drag classifier for mid (default <out>/drag-bin.json)")
    t.add_argument("--epochs", type=_positive_int)
    t.add_argument("--patience", type=_positive_int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=_positive_int)
    t.add_argument("--resolution", type=_positive_int, default=predict.CNN_RESOLUTION)
    t.add_argument("--w1", type=float, default=0.4)

    i = sub.add_parser("infer", help="generate designs for APT targets")
    common(i, seed=False)
    i.add_argument("--model", required=True)
    i.add_argument("--apt", type=float, nargs="+", help="one target: APT1 APT2 APT3 in mm")
    i.add_argument("--targets", help="file with one comma- or space-separated target per line")
    i.add_argument("--verify", action="store_true", help="evaluate designs with the analytic oracle")
    i.add_argument("--overlay", help="design JSON drawn dashed over each generated section")

    b = sub.add_parser("benchmark", help="compare inverse networks with iterative optimisers")
    common(b, seed=False)
    b.add_argument("--data", help="apt dataset CSV whose test split supplies the targets")
    b.add_argument("--apt-model")
    b.add_argument("--sid-model")
    b.add_argument("--mid-model")
    b.add_argument("--methods", type=_name_list, default="sid,backprop,sqp")
    b.add_argument("--limit", type=_positive_int, help="use only the first N targets")

    s = sub.add_parser("sweep", help="train one MID per APT loss weight")
    common(s)
    s.add_argument("--data")
    s.add_argument("--apt-model")
    s.add_argument("--drag-model")
    s.add_argument("--w1", type=_float_list, default=",".join(map(str, inverse.DEFAULT_SWEEP)))
    s.add_argument("--epochs", type=_positive_int)

    r = sub.add_parser("render", help="draw a design section as SVG")
    r.add_argument("--design", required=True, help="design JSON (an infer output or {\"x\": [...]})")
    r.add_argument("--overlay")
    r.add_argument("--out", required=True, help="SVG path")
    r.add_argument("--force", action="store_true")
    return p


def _config_value(action, text):
    if isinstance(action, argparse._StoreTrueAction):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise CliError(EXIT_USAGE, f"config key {action.dest} expects true or false, got {text!r}")
        return text.lower() in ("true", "1", "yes")
    return text


def parse_args(argv):
    parser = build_parser()
    if "--config" in argv:
        k = argv.index("--config")
        if k + 1 >= len(argv):
            raise CliError(EXIT_USAGE, "--config needs a path")
        config_path = argv[k + 1]
    else:
        config_path = next((a.split("=", 1)[1] for a in argv if a.startswith("--config=")), None)
    if config_path:
        values = read_config(config_path)
        sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        known = set()
        for sp in sub_action.choices.values():
            dests = {a.dest: a for a in sp._actions}
            known |= set(dests)
            sp.set_defaults(**{k: _config_value(dests[k], v) for k, v in values.items() if k in dests})
        unknown = sorted(set(values) - known)
        if unknown:
            raise CliError(EXIT_USAGE, f"unknown config key(s): {', '.join(unknown)}")
    return parser.parse_args(argv)


# -- file helpers -------------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out or _default_out())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory {out}: {exc}") from exc
    return out


def _claim(paths, force: bool):
    """Refuse to overwrite existing outputs unless forced."""
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise CliError(EXIT_IO, f"refusing to overwrite {', '.join(existing)} (use --force)")


def _write(path, text: str):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_ARTIFACT, f"missing {what}: {path}")
    return path


def _load_dataset(path, task: str) -> dataset.LabeledDataset:
    path = _require(path, f"{task} dataset")
    try:
        ds = dataset.load(path)
    except (SchemaMismatch, CorruptRow, InvalidDesign, OutOfRange, DegenerateColumn) as exc:
        raise CliError(EXIT_ARTIFACT, f"invalid dataset {path}: {exc}") from exc
    if ds.task != task:
        raise CliError(EXIT_ARTIFACT, f"{path} holds a {ds.task} dataset, need {task}")
    return ds


def _load_surrogate(path, what: str, kinds) -> predict.SurrogateModel:
    path = _require(path, what)
    try:
        model = predict.SurrogateModel.load(path)
    except (SchemaMismatch, ShapeMismatch, TypeError) as exc:
        raise CliError(EXIT_ARTIFACT, f"invalid {what} {path}: {exc}") from exc
    if model.kind not in kinds:
        raise CliError(EXIT_ARTIFACT, f"{path} is a {model.kind} model, need one of {', '.join(kinds)}")
    return model


def _load_inverse(path) -> inverse.InverseModel:
    path = _require(path, "inverse model")
    try:
        return inverse.InverseModel.load(path)
    except (SchemaMismatch, ShapeMismatch, IncompatibleForward, KeyError, TypeError) as exc:
        raise CliError(EXIT_ARTIFACT, f"invalid inverse model {path}: {exc}") from exc


# -- commands ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = _out_dir(args)
    files = [out / f"{task}.csv" for task in ("apt", "drag")]
    _claim(files + [dataset.sidecar_path(f) for f in files], args.force)
    for task, n, path in (("apt", args.n_apt, files[0]), ("drag", args.n_drag, files[1])):
        raw = oracle.generate_labeled(oracle.DoePlan(n, args.seed), task)
        if raw.x.shape[0] == 0:
            raise EmptyDataset(f"every sampled {task} design was invalid")
        try:
            ds = dataset.from_raw(raw, args.seed)
        except TooFewRows as exc:
            raise EmptyDataset(f"{task}: {exc}") from exc
        try:
            dataset.save(ds, path)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc
        c = ds.counts()
        print(f"{task}: sampled {raw.provenance['n_sampled']}, dropped {raw.provenance['n_dropped']}, "
              f"kept {len(ds)} (train {c['train']}, val {c['val']}, test {c['test']}) -> {path}")
    return EXIT_OK


def _train_config(args):
    cfg = replace(DEFAULT_CONFIGS[args.kind], seed=args.seed)
    if args.epochs:
        cfg = replace(cfg, max_epochs=args.epochs)
    if args.patience:
        cfg = replace(cfg, early_stop_patience=args.patience)
    if args.lr is not None:
        if not args.lr > 0:
            raise CliError(EXIT_USAGE, "--lr must be > 0")
        cfg = replace(cfg, learning_rate=args.lr)
    if args.batch_size:
        cfg = replace(cfg, batch_size=args.batch_size)
    return cfg


def cmd_train(args) -> int:
    out = _out_dir(args)
    kind = args.kind
    paths = {"model": out / f"{kind}.json", "metrics": out / f"{kind}.metrics.json",
             "history": out / f"{kind}.history.csv"}
    _claim(paths.values(), args.force)
    cfg = _train_config(args)
    task = "drag" if kind.startswith("drag") else "apt"
    data = args.data or out / f"{task}.csv"

    if kind in ("sid", "mid"):
        apt = _load_surrogate(args.apt_model or out / "apt-dnn.json", "APT model", ("apt-dnn", "apt-baseline"))
        drag = None
        if kind == "mid":
            drag = _load_surrogate(args.drag_model or out / "drag-bin.json", "drag model", ("drag-bin",))
        ds = _load_dataset(data, "apt")
        try:
            if kind == "sid":
                model = inverse.train_sid(inverse.build_sid(apt, seed=args.seed), ds, cfg)
            else:
                if not 0.0 < args.w1 < 1.0:
                    raise CliError(EXIT_USAGE, "--w1 must lie in (0, 1)")
                model = inverse.train_mid(inverse.build_mid(apt, drag, seed=args.seed, w1=args.w1), ds, cfg)
        except (IncompatibleForward, NormSpecMismatch) as exc:
            raise CliError(EXIT_ARTIFACT, str(exc)) from exc
        ev = inverse.evaluate_inverse(model, ds.y_raw("test"))
        metrics = {"test": {k: getattr(ev, k) for k in ev.__dataclass_fields__},
                   "val_loss_apt": model.metadata["val_loss_apt"],
                   "val_loss_drag": model.metadata["val_loss_drag"]}
    else:
        ds = _load_dataset(data, task)
        try:
            if kind == "apt-dnn":
                model, rep = predict.train_apt_dnn(ds, cfg)
            elif kind == "apt-baseline":
                model, rep = predict.train_apt_baseline(ds, cfg)
            elif kind == "apt-cnn":
                model, rep = predict.train_apt_cnn(ds, cfg, resolution=args.resolution)
            elif kind == "drag-bin":
                model, rep = predict.train_drag_binary(ds, cfg)
            else:
                model, rep = predict.train_drag_multiclass(ds, cfg)
        except EmptyClass as exc:
            raise CliError(EXIT_ARTIFACT, f"{data}: {exc}") from exc
        metrics = model.metrics

    try:
        model.save(paths["model"])
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {paths['model']}: {exc}") from exc
    _write(paths["metrics"], _dumps(metrics))
    _write(paths["history"], model.history.to_csv())
    print(f"{kind}: best epoch {model.history.best_epoch}, stopped {model.history.stopped_epoch} -> {paths['model']}")
    print(_dumps(metrics), end="")
    return EXIT_OK


def _read_targets(args, n_values: int = 3) -> np.ndarray:
    if (args.apt is None) == (args.targets is None):
        raise CliError(EXIT_USAGE, "give exactly one of --apt or --targets")
    if args.apt is not None:
        rows = [args.apt]
    else:
        path = Path(args.targets)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
        rows = []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.replace(",", " ").split()])
            except ValueError:
                raise CliError(EXIT_INPUT, f"{path}:{n}: not numeric: {line!r}") from None
        if not rows:
            raise CliError(EXIT_INPUT, f"{path}: no targets")
    for row in rows:
        if len(row) != n_values:
            raise CliError(EXIT_INPUT, f"expected {n_values} APT values per target, got {len(row)}")
        if not np.all(np.isfinite(row)):
            raise CliError(EXIT_INPUT, f"non-finite target {row}")
    return np.asarray(rows, dtype=np.float64)


def _design_from_json(path) -> np.ndarray:
    """Physical design vector from an infer output (first record) or ``{"x": [...]}``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"{path}: not JSON ({exc})") from exc
    if isinstance(doc, dict) and "records" in doc and doc["records"]:
        doc = doc["records"][0]
    x = doc.get("x") if isinstance(doc, dict) else doc
    try:
        x = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError):
        raise CliError(EXIT_INPUT, f"{path}: no numeric design vector") from None
    if x.shape != (geometry.N_VARS,):
        raise CliError(EXIT_INPUT, f"{path}: design must have {geometry.N_VARS} values")
    return x


def _geometry(x, what):
    try:
        return geometry.compute_points(x)
    except InvalidDesign as exc:
        raise CliError(EXIT_INPUT, f"{what}: {exc}") from exc


def cmd_infer(args) -> int:
    out = _out_dir(args)
    model = _load_inverse(args.model)
    targets = _read_targets(args)
    overlay = _geometry(_design_from_json(args.overlay), "overlay") if args.overlay else None
    svgs = [out / f"design_{k}.svg" for k in range(targets.shape[0])]
    _claim([out / "designs.json", *svgs], args.force)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OutOfRangeTarget)
        records = inverse.infer_design(model, targets, verify=args.verify)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for rec, svg in zip(records, svgs):
        if rec.validity:
            text = f'<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"><!-- invalid design: ' \
                   f'{"; ".join(rec.validity)} --></svg>\n'
        else:
            text = geometry.to_svg(geometry.compute_points(rec.x), overlay)
        _write(svg, text)
    _write(out / "designs.json", _dumps({"model": str(args.model), "kind": model.kind,
                                         "records": [r.to_dict() for r in records]}))
    for k, rec in enumerate(records):
        line = f"target {k}: x = [{', '.join(f'{v:.4f}' for v in rec.x)}]"
        line += f" surrogate APT = [{', '.join(f'{v:.4f}' for v in rec.surrogate_apt)}]"
        if args.verify:
            line += f" oracle APT = [{', '.join(f'{v:.4f}' for v in rec.oracle_apt)}]"
            line += f" drag amplified = {rec.oracle_drag_amplified}"
        if rec.validity:
            line += f" INVALID ({'; '.join(rec.validity)})"
        print(line)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    out = _out_dir(args)
    files = [out / n for n in ("benchmark.json", "benchmark.csv", "benchmark.svg")]
    _claim(files, args.force)
    unknown = [m for m in args.methods if m not in baseline.METHODS]
    if unknown or not args.methods:
        raise CliError(EXIT_USAGE, f"methods must be drawn from {', '.join(baseline.METHODS)}")
    ds = _load_dataset(args.data or out / "apt.csv", "apt")
    models = {}
    if {"backprop", "sqp"} & set(args.methods):
        models["apt"] = _load_surrogate(args.apt_model or out / "apt-dnn.json", "APT model",
                                        ("apt-dnn", "apt-baseline"))
    if "sid" in args.methods:
        models["sid"] = _load_inverse(args.sid_model or out / "sid.json")
    if "mid" in args.methods:
        models["mid"] = _load_inverse(args.mid_model or out / "mid.json")
    targets = ds.y_raw("test")
    if args.limit:
        targets = targets[: args.limit]
    reports = baseline.run_benchmark(models, targets, args.methods)
    try:
        baseline.write_benchmark(out, reports)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write benchmark files: {exc}") from exc
    for rep in reports:
        if rep.error:
            print(f"{rep.method}: FAILED {rep.error}")
        else:
            print(f"{rep.method}: mae {rep.mae:.6g} rmse {rep.rmse:.6g} r2 {rep.r2:.6g} "
                  f"oracle mae {rep.mae_oracle:.6g} median {rep.median_seconds:.3g} s")
    for name, ok in baseline.ordering_checks(reports).items():
        if ok is not None:
            print(f"ordering {name}: {'holds' if ok else 'violated'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    path = out / "sweep.csv"
    _claim([path], args.force)
    if not args.w1 or any(not 0.0 < w < 1.0 for w in args.w1):
        raise CliError(EXIT_USAGE, "--w1 values must lie in (0, 1)")
    apt = _load_surrogate(args.apt_model or out / "apt-dnn.json", "APT model", ("apt-dnn", "apt-baseline"))
    drag = _load_surrogate(args.drag_model or out / "drag-bin.json", "drag model", ("drag-bin",))
    ds = _load_dataset(args.data or out / "apt.csv", "apt")
    cfg = replace(inverse.MID_CONFIG, seed=args.seed)
    if args.epochs:
        cfg = replace(cfg, max_epochs=args.epochs)
    try:
        rows = inverse.weight_sweep(apt, drag, ds, args.w1, cfg, seed=args.seed)
    except (IncompatibleForward, NormSpecMismatch) as exc:
        raise CliError(EXIT_ARTIFACT, str(exc)) from exc
    _write(path, inverse.sweep_csv(rows))
    for r in rows:
        print(f"w1 {r.w1:g}: loss_apt {r.loss_apt:.6g} loss_drag {r.loss_drag:.6g} "
              f"drag-free {r.drag_free_rate:.3f}{' *' if r.nondominated else ''}")
    return EXIT_OK


def cmd_render(args) -> int:
    out = Path(args.out)
    _claim([out], args.force)
    g = _geometry(_design_from_json(args.design), "design")
    overlay = _geometry(_design_from_json(args.overlay), "overlay") if args.overlay else None
    _write(out, geometry.to_svg(g, overlay))
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "infer": cmd_infer, "benchmark": cmd_benchmark,
            "sweep": cmd_sweep, "render": cmd_render}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Diverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EmptyDataset as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
