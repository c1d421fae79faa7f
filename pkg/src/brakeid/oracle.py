"""Deterministic analytic stand-in for the FEA: APT triples and drag labels.

All formulas take normalised designs ``u`` in ``[0, 1]^13`` (column ``k`` is
variable ``x{k+1}``) and are vectorised over leading axes.

Roll-back (seal grip) saturates APT and raises drag risk; compliance (inverse
stiffness) grows APT linearly with pressure and lowers drag risk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import EmptyDataset
from .rng import make_rng

ORACLE_VERSION = "analytic-v1"

PRESSURE_FRACTIONS = (0.04, 0.40, 1.00)
P_MAX = 100.0  # bar
P_CHAR = 6.0  # bar, roll-back saturation pressure
DRAG_THRESHOLD = -0.35
ONSET_CLASSES = (30, 40, 50, 60, 70, 80, 90)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def rollback(u):
    u = geometry.check_unit_box(u)
    z = 3.0 * (u[..., 0] + u[..., 3] + 0.5 * u[..., 1] - u[..., 5] - u[..., 6] - 0.25)
    return 0.8 + 1.2 * _sigmoid(z) + 0.4 * u[..., 7] * u[..., 8]


def compliance(u):
    u = geometry.check_unit_box(u)
    return (0.004 + 0.010 * (1.0 - u[..., 9]) + 0.008 * (1.0 - u[..., 10])
            + 0.004 * (1.0 - u[..., 11]) + 0.003 * u[..., 12])


def eval_apt(u):
    """APT at 4/40/100 % of max pressure, shape ``(..., 3)`` in mm."""
    r = rollback(u)[..., None]
    c = compliance(u)[..., None]
    f = np.asarray(PRESSURE_FRACTIONS)
    return r * (1.0 - np.exp(-f * P_MAX / P_CHAR)) + c * f * P_MAX


def drag_score(u):
    u = geometry.check_unit_box(u)
    return rollback(u) - 120.0 * compliance(u) + 0.6 * u[..., 2] - 0.5 * u[..., 4]


def onset_from_score(s):
    """Onset class in bar for amplified scores; 0 marks "not amplified"."""
    s = np.asarray(s, dtype=np.float64)
    amplified = s > DRAG_THRESHOLD
    level = np.minimum(6, np.floor(7.0 * np.clip(1.0 - (s - DRAG_THRESHOLD) / 1.2, 0.0, 1.0)))
    return np.where(amplified, 30 + 10 * level.astype(np.int64), 0)


def eval_drag(u):
    """Return ``(amplified, onset_bar)``; onset is ``None`` when not amplified.

    Vectorised calls return ``(bool array, int array)`` with 0 for no onset.
    """
    s = drag_score(u)
    amplified = s > DRAG_THRESHOLD
    onset = onset_from_score(s)
    if np.ndim(s) == 0:
        return bool(amplified), (int(onset) if amplified else None)
    return amplified, onset


@dataclass(frozen=True)
class OracleEval:
    rollback: float
    compliance: float
    apt: tuple[float, float, float]
    drag_score: float
    drag_amplified: bool
    drag_onset_bar: int | None


def evaluate(u) -> OracleEval:
    u = geometry.check_unit_box(u)
    amplified, onset = eval_drag(u)
    return OracleEval(
        rollback=float(rollback(u)),
        compliance=float(compliance(u)),
        apt=tuple(float(v) for v in eval_apt(u)),
        drag_score=float(drag_score(u)),
        drag_amplified=amplified,
        drag_onset_bar=onset,
    )


@dataclass(frozen=True)
class DoePlan:
    n_samples: int
    seed: int
    n_dims: int = geometry.N_VARS


def lhs_strata(plan: DoePlan) -> np.ndarray:
    """Per-column stratum permutations, shape ``(n_samples, n_dims)``."""
    if plan.n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = make_rng(plan.seed, "lhs")
    return np.stack([rng.permutation(plan.n_samples) for _ in range(plan.n_dims)], axis=1)


def lhs_sample(plan: DoePlan) -> np.ndarray:
    """Latin hypercube in the unit box: one jittered point per stratum per column."""
    strata = lhs_strata(plan)
    jitter = make_rng(plan.seed, "lhs-jitter").random(strata.shape)
    return (strata + jitter) / plan.n_samples


@dataclass
class RawDataset:
    task: str
    x: np.ndarray  # physical designs, (n, 13)
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)


def generate_labeled(plan: DoePlan, task: str) -> RawDataset:
    """Sample, drop invalid designs (emulated convergence failures), then label.

    APT labels are ``(n, 3)`` mm; drag labels are ``(n, 2)`` integer columns
    ``(amplified, onset_bar)`` with onset 0 when not amplified.
    """
    if task not in ("apt", "drag"):
        raise ValueError(f"unknown task {task!r}")
    u = lhs_sample(plan)
    x = geometry.denormalize(u)
    keep = geometry.valid_mask(x)
    if not keep.any():
        raise EmptyDataset("every sampled design failed validation")
    x = x[keep]
    u = np.clip(u[keep], 0.0, 1.0)
    if task == "apt":
        labels = eval_apt(u)
    else:
        amplified, onset = eval_drag(u)
        labels = np.stack([amplified.astype(np.int64), onset], axis=1)
    provenance = {
        "seed": int(plan.seed),
        "n_sampled": int(plan.n_samples),
        "n_dropped": int((~keep).sum()),
        "n_kept": int(keep.sum()),
        "oracle_version": ORACLE_VERSION,
        "sampler": "latin-hypercube",
    }
    return RawDataset(task=task, x=x, labels=labels, provenance=provenance)
