"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time from the ``BRAKEID_KERNELS``
environment variable (``numba`` or ``numpy``).  When the variable is unset,
numba is used if it can be imported.  :func:`use_backend` switches at run
time, which the tests and ``benchmarks/bench_kernels.py`` rely on.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is optional
    _numba = None

ENV_VAR = "BRAKEID_KERNELS"

_BACKENDS: dict[str, ModuleType | None] = {"numpy": _numpy, "numba": _numba}
_active: ModuleType = _numpy


def available_backends() -> list[str]:
    return [name for name, mod in _BACKENDS.items() if mod is not None]


def use_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {sorted(_BACKENDS)}")
    mod = _BACKENDS[name]
    if mod is None:
        raise ImportError("numba backend requested but numba is not importable")
    _active = mod


def backend() -> str:
    return "numba" if _active is _numba and _numba is not None else "numpy"


def points_in_polygons(zs, ys, polygons):
    return _active.points_in_polygons(zs, ys, polygons)


def conv2d_forward(x, w, b):
    return _active.conv2d_forward(x, w, b)


def conv2d_backward(x, w, dout):
    return _active.conv2d_backward(x, w, dout)


def maxpool2d_forward(x):
    return _active.maxpool2d_forward(x)


def maxpool2d_backward(dout, idx, in_shape):
    return _active.maxpool2d_backward(dout, idx, in_shape)


use_backend(os.environ.get(ENV_VAR, "numba" if _numba is not None else "numpy").strip().lower())
