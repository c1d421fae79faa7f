"""Labeled datasets: splitting, scaling, one-hot encoding and the CSV/JSON formats.

On disk a dataset is a CSV with header ``id,x1..x13,<labels>,split`` holding
physical design values, plus a JSON sidecar carrying the normalisation spec
and provenance.  Design inputs are always scaled by the bounds table so that
every forward model shares one input space; APT labels are min-max scaled
with extrema from the training partition only.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import CorruptRow, DegenerateColumn, SchemaMismatch, TooFewRows, UnknownClass
from .oracle import ONSET_CLASSES, ORACLE_VERSION, RawDataset
from .rng import GENERATOR_NAME, make_rng

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")
X_COLUMNS = tuple(v.key for v in geometry.VARIABLES)
LABEL_COLUMNS = {"apt": ("apt1", "apt2", "apt3"), "drag": ("drag", "onset")}


# -- scaling -----------------------------------------------------------------

def _check_range(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi <= lo):
        bad = np.flatnonzero(np.atleast_1d(hi <= lo)).tolist()
        raise DegenerateColumn(f"min >= max for column(s) {bad}")
    return lo, hi


def normalize(values, lo, hi):
    """Min-max scaling ``(v - lo) / (hi - lo)``; values outside the range pass through unclipped."""
    lo, hi = _check_range(lo, hi)
    return (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)


def denormalize(values, lo, hi):
    lo, hi = _check_range(lo, hi)
    return lo + np.asarray(values, dtype=np.float64) * (hi - lo)


def x_norm_spec() -> dict:
    return {
        "kind": "bounds",
        "bounds_id": geometry.BOUNDS_ID,
        "min": geometry.LOWER.tolist(),
        "max": geometry.UPPER.tolist(),
    }


# -- splitting ---------------------------------------------------------------

def split_counts(n: int, ratios=(7, 2, 1)) -> tuple[int, int, int]:
    total = sum(ratios)
    n_train = n * ratios[0] // total
    n_test = n * ratios[2] // total
    return n_train, n - n_train - n_test, n_test


def split(n_rows: int, ratios=(7, 2, 1), seed: int = 0) -> np.ndarray:
    """Tag ``n_rows`` rows train/val/test: seeded shuffle, then contiguous cut."""
    if n_rows < 10:
        raise TooFewRows(f"need at least 10 rows to split, got {n_rows}")
    n_train, n_val, _ = split_counts(n_rows, ratios)
    order = make_rng(seed, "split").permutation(n_rows)
    tags = np.empty(n_rows, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train:n_train + n_val]] = "val"
    tags[order[n_train + n_val:]] = "test"
    return tags.astype(str)


# -- one-hot -----------------------------------------------------------------

def one_hot(onset) -> np.ndarray:
    onset = np.atleast_1d(np.asarray(onset))
    bad = ~np.isin(onset, ONSET_CLASSES)
    if bad.any():
        raise UnknownClass(f"onset class(es) {sorted(set(onset[bad].tolist()))} not in {ONSET_CLASSES}")
    idx = (onset.astype(np.int64) - 30) // 10
    out = np.zeros((onset.shape[0], len(ONSET_CLASSES)))
    out[np.arange(onset.shape[0]), idx] = 1.0
    return out


def argmax_decode(scores) -> np.ndarray:
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.shape[1] != len(ONSET_CLASSES):
        raise UnknownClass(f"expected {len(ONSET_CLASSES)} class scores, got {scores.shape[1]}")
    return 30 + 10 * np.argmax(scores, axis=1)


# -- dataset container -------------------------------------------------------

@dataclass
class LabeledDataset:
    task: str  # "apt" or "drag"
    x: np.ndarray  # physical, (n, 13)
    labels: np.ndarray  # apt: (n, 3) float; drag: (n, 2) int (amplified, onset)
    split: np.ndarray  # (n,) str
    norm_spec: dict
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return self.x.shape[0]

    def mask(self, part: str) -> np.ndarray:
        return self.split == part

    def u(self, part: str | None = None) -> np.ndarray:
        x = self.x if part is None else self.x[self.mask(part)]
        return normalize(x, self.norm_spec["x"]["min"], self.norm_spec["x"]["max"])

    def y_raw(self, part: str | None = None) -> np.ndarray:
        return self.labels if part is None else self.labels[self.mask(part)]

    def y(self, part: str | None = None) -> np.ndarray:
        """Training targets: scaled APT triples, or the {0,1} drag column."""
        y = self.y_raw(part)
        if self.task == "apt":
            spec = self.norm_spec["y"]
            return normalize(y, spec["min"], spec["max"])
        return y[:, :1].astype(np.float64)

    def counts(self) -> dict:
        return {part: int(self.mask(part).sum()) for part in SPLITS}


def from_raw(raw: RawDataset, seed: int, ratios=(7, 2, 1)) -> LabeledDataset:
    tags = split(raw.x.shape[0], ratios, seed)
    spec = {"x": x_norm_spec(), "y": None}
    if raw.task == "apt":
        train = raw.labels[tags == "train"]
        lo, hi = train.min(axis=0), train.max(axis=0)
        _check_range(lo, hi)
        spec["y"] = {"columns": list(LABEL_COLUMNS["apt"]), "min": lo.tolist(), "max": hi.tolist()}
    prov = dict(raw.provenance)
    prov["split_seed"] = int(seed)
    return LabeledDataset(raw.task, raw.x, raw.labels, tags, spec, prov)


def multiclass_view(ds: LabeledDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Amplified rows only: ``(u, one_hot_labels, split)``."""
    if ds.task != "drag":
        raise ValueError("multiclass view needs a drag dataset")
    amp = ds.labels[:, 0] == 1
    return ds.u()[amp], one_hot(ds.labels[amp, 1]), ds.split[amp]


# -- file formats ------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def _csv_text(ds: LabeledDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("id",) + X_COLUMNS + LABEL_COLUMNS[ds.task] + ("split",))
    for i in range(len(ds)):
        row = [str(i)] + [_fmt(v) for v in ds.x[i]]
        if ds.task == "apt":
            row += [_fmt(v) for v in ds.labels[i]]
        else:
            amp, onset = int(ds.labels[i, 0]), int(ds.labels[i, 1])
            row += [str(amp), str(onset) if amp else ""]
        row.append(ds.split[i])
        w.writerow(row)
    return buf.getvalue()


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def save(ds: LabeledDataset, csv_path) -> tuple[Path, Path]:
    csv_path = Path(csv_path)
    text = _csv_text(ds)
    data = text.encode("utf-8")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "task": ds.task,
        "columns": list(X_COLUMNS + LABEL_COLUMNS[ds.task]),
        "norm_spec": ds.norm_spec,
        "seed": ds.provenance.get("seed"),
        "split_seed": ds.provenance.get("split_seed"),
        "oracle_version": ds.provenance.get("oracle_version", ORACLE_VERSION),
        "generator": GENERATOR_NAME,
        "counts": {
            "sampled": ds.provenance.get("n_sampled"),
            "dropped": ds.provenance.get("n_dropped"),
            "rows": len(ds),
            **ds.counts(),
        },
        "csv_sha256": hashlib.sha256(data).hexdigest(),
    }
    csv_path.write_bytes(data)
    side = sidecar_path(csv_path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, side


def load(csv_path) -> LabeledDataset:
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read sidecar {side}: {exc}") from exc
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported schema_version {meta.get('schema_version')!r}")
    task = meta.get("task")
    if task not in LABEL_COLUMNS:
        raise SchemaMismatch(f"unknown task {task!r}")
    spec = meta.get("norm_spec") or {}
    if "x" not in spec:
        raise SchemaMismatch("sidecar lacks norm_spec.x")
    _check_range(spec["x"]["min"], spec["x"]["max"])
    if task == "apt":
        if not spec.get("y"):
            raise SchemaMismatch("apt sidecar lacks norm_spec.y")
        _check_range(spec["y"]["min"], spec["y"]["max"])

    data = csv_path.read_bytes()
    text = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    header = tuple(rows[0]) if rows else ()
    expected = ("id",) + X_COLUMNS + LABEL_COLUMNS[task] + ("split",)
    if header != expected:
        raise SchemaMismatch(f"header {header} does not match expected {expected}")
    body = rows[1:]
    counts = meta.get("counts", {})
    if counts.get("rows") != len(body):
        raise SchemaMismatch(f"sidecar says {counts.get('rows')} rows, file has {len(body)}")

    n_lab = len(LABEL_COLUMNS[task])
    x = np.empty((len(body), len(X_COLUMNS)))
    labels = np.zeros((len(body), n_lab), dtype=np.float64 if task == "apt" else np.int64)
    tags = []
    for i, row in enumerate(body):
        if len(row) != len(expected):
            raise CorruptRow(f"row {i}: expected {len(expected)} fields, got {len(row)}")
        try:
            x[i] = [float(v) for v in row[1:14]]
            if task == "apt":
                labels[i] = [float(v) for v in row[14:17]]
            else:
                amp = int(row[14])
                onset = int(row[15]) if row[15] else 0
                if amp not in (0, 1) or (amp == 1) != (onset in ONSET_CLASSES) or (amp == 0 and onset != 0):
                    raise ValueError(f"inconsistent drag label ({row[14]!r}, {row[15]!r})")
                labels[i] = (amp, onset)
        except ValueError as exc:
            raise CorruptRow(f"row {i}: {exc}") from exc
        if row[-1] not in SPLITS:
            raise CorruptRow(f"row {i}: unknown split tag {row[-1]!r}")
        problems = geometry.validate(x[i])
        if problems:
            raise CorruptRow(f"row {i}: invalid design ({'; '.join(problems)})")
        tags.append(row[-1])

    prov = {
        "seed": meta.get("seed"),
        "split_seed": meta.get("split_seed"),
        "oracle_version": meta.get("oracle_version"),
        "n_sampled": counts.get("sampled"),
        "n_dropped": counts.get("dropped"),
        "csv_sha256": hashlib.sha256(data).hexdigest(),
    }
    return LabeledDataset(task, x, labels, np.array(tags, dtype=str), spec, prov)
