"""Shared fixtures: the seed-42 datasets and models trained once per session."""

import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from brakeid import dataset, inverse, oracle, predict  # noqa: E402

SEED = 42
N_APT = 1000
N_DRAG = 2000

# wall-clock seconds of each session-level training run, read by the acceptance checks
TIMINGS = {}
# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def _timed(name, fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    TIMINGS[name] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def apt_ds():
    raw = oracle.generate_labeled(oracle.DoePlan(N_APT, SEED), "apt")
    return dataset.from_raw(raw, SEED)


@pytest.fixture(scope="session")
def drag_ds():
    raw = oracle.generate_labeled(oracle.DoePlan(N_DRAG, SEED), "drag")
    return dataset.from_raw(raw, SEED)


@pytest.fixture(scope="session")
def apt_dnn(apt_ds):
    model, _ = _timed("apt-dnn", predict.train_apt_dnn, apt_ds, replace(predict.APT_CONFIG, seed=SEED))
    return model


@pytest.fixture(scope="session")
def apt_base(apt_ds):
    model, _ = _timed("apt-baseline", predict.train_apt_baseline, apt_ds, replace(predict.APT_CONFIG, seed=SEED))
    return model


@pytest.fixture(scope="session")
def drag_bin(drag_ds):
    model, _ = predict.train_drag_binary(drag_ds, replace(predict.DRAG_BINARY_CONFIG, seed=SEED))
    return model


@pytest.fixture(scope="session")
def drag_multi(drag_ds):
    model, _ = predict.train_drag_multiclass(drag_ds, replace(predict.DRAG_MULTI_CONFIG, seed=SEED))
    return model


@pytest.fixture(scope="session")
def forward_bytes(apt_dnn, drag_bin):
    """Weight bytes of the forward models before any inverse training touches them."""
    return {"apt": apt_dnn.stack.weight_bytes(), "drag": drag_bin.stack.weight_bytes()}


@pytest.fixture(scope="session")
def sid_model(apt_dnn, apt_ds, forward_bytes):
    return inverse.train_sid(inverse.build_sid(apt_dnn, seed=SEED), apt_ds,
                             replace(inverse.SID_CONFIG, seed=SEED))


@pytest.fixture(scope="session")
def mid_model(apt_dnn, drag_bin, apt_ds, forward_bytes):
    return inverse.train_mid(inverse.build_mid(apt_dnn, drag_bin, seed=SEED, w1=0.4), apt_ds,
                             replace(inverse.MID_CONFIG, seed=SEED))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
