"""JSON model files.

Layout (``schema_version`` 1)::

    {
      "schema_version": 1,
      "kind": "<model kind>",
      "stacks": {"<name>": {"input_shape": [...], "layers": [
          {"kind": "dense", "config": {"in": 13, "out": 256}, "frozen": false,
           "params": {"W": {"shape": [13, 256], "data": [... row-major ...]},
                      "b": {"shape": [256], "data": [...]}}},
          ...]}},
      "norm_spec": {...}, "train_config": {...}, "seed": 42, "metadata": {...}
    }

Floats are written with ``repr`` so a load reproduces every weight bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaMismatch, ShapeMismatch
from .layers import LayerStack, layer_from_config

SCHEMA_VERSION = 1


def stack_to_dict(stack: LayerStack) -> dict:
    layers = []
    for layer in stack.layers:
        entry = {"kind": layer.kind, "config": layer.config(), "frozen": bool(layer.frozen)}
        if layer.params:
            entry["params"] = {
                name: {"shape": list(p.shape), "data": p.ravel(order="C").tolist()}
                for name, p in layer.params.items()
            }
        layers.append(entry)
    return {"input_shape": list(stack.input_shape), "layers": layers}


def stack_from_dict(d: dict) -> LayerStack:
    try:
        layers = []
        for entry in d["layers"]:
            layer = layer_from_config(entry["kind"], entry.get("config", {}))
            layer.frozen = bool(entry.get("frozen", False))
            stored = entry.get("params", {})
            if set(stored) != set(layer.params):
                raise SchemaMismatch(f"{entry['kind']}: parameters {sorted(stored)} != {sorted(layer.params)}")
            for name, blob in stored.items():
                arr = np.asarray(blob["data"], dtype=np.float64)
                shape = tuple(blob["shape"])
                if arr.size != int(np.prod(shape)) or shape != layer.params[name].shape:
                    raise ShapeMismatch(f"{entry['kind']}.{name}: stored shape {shape}, "
                                        f"expected {layer.params[name].shape}")
                layer.params[name] = arr.reshape(shape)
            layers.append(layer)
        return LayerStack(layers, d["input_shape"])
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"malformed stack description: {exc!r}") from exc


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(path, stacks: dict, kind: str, **fields) -> Path:
    """Write one or more named stacks plus free-form metadata fields."""
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind,
           "stacks": {name: stack_to_dict(s) for name, s in stacks.items()}}
    doc.update(fields)
    path = Path(path)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def load_model(path) -> tuple[dict, dict]:
    """Return ``(stacks, document)``; raises :class:`SchemaMismatch` on bad files."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: unsupported or missing schema_version")
    if "stacks" not in doc or "kind" not in doc:
        raise SchemaMismatch(f"{path}: missing 'stacks' or 'kind'")
    stacks = {name: stack_from_dict(d) for name, d in doc["stacks"].items()}
    return stacks, doc
