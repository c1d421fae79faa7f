"""Seal-groove parameterisation, validity rules, rasterisation and SVG output.

Coordinates are millimetres in a groove-local frame: ``z`` runs axially to the
right, ``y`` radially downward from the groove mouth (``y = 0``).  A design is
a length-13 float array ``x`` in physical units (see :data:`VARIABLES`); its
normalised twin ``u`` lives in the unit box defined by the bounds table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DegenerateFrame, InvalidDesign, OutOfRange

DEFAULT_RESOLUTION = 204
BOUNDS_ID = "brakeid-bounds-v1"


class Variable(NamedTuple):
    key: str
    name: str
    unit: str
    group: str
    lower: float
    upper: float


VARIABLES: tuple[Variable, ...] = (
    Variable("x1", "chamfer", "mm", "seal groove", 0.1, 0.6),
    Variable("x2", "front_wall_angle", "deg", "seal groove", 0.0, 20.0),
    Variable("x3", "groove_depth", "mm", "seal groove", 3.0, 5.0),
    Variable("x4", "groove_bottom_width", "mm", "seal groove", 4.0, 6.0),
    Variable("x5", "bottom_front_relief", "mm", "seal groove", 0.2, 0.8),
    Variable("x6", "bottom_rear_relief", "mm", "seal groove", 0.2, 0.8),
    Variable("x7", "mouth_rear_round", "mm", "seal groove", 0.1, 0.5),
    Variable("x8", "seal_height", "mm", "piston and seal size", 2.0, 3.5),
    Variable("x9", "seal_thickness", "mm", "piston and seal size", 2.5, 3.5),
    Variable("x10", "caliper_stiffness", "kN/mm", "stiffness", 20.0, 60.0),
    Variable("x11", "pad_stiffness", "kN/mm", "stiffness", 10.0, 40.0),
    Variable("x12", "gp_bush_stiffness", "kN/mm", "stiffness", 1.0, 5.0),
    Variable("x13", "gp_bush_load_limit", "kN", "connector", 0.5, 2.0),
)

N_VARS = len(VARIABLES)
LOWER = np.array([v.lower for v in VARIABLES])
UPPER = np.array([v.upper for v in VARIABLES])
SPAN = UPPER - LOWER
MIDPOINT = 0.5 * (LOWER + UPPER)

# relative slack on the box test so denormalize(1.0) is never rejected for 1 ulp
_BOX_TOL = 1e-12


def normalize(x):
    """Map physical designs onto the unit box (works on ``(..., 13)`` arrays)."""
    return (np.asarray(x, dtype=np.float64) - LOWER) / SPAN


def denormalize(u):
    return LOWER + np.asarray(u, dtype=np.float64) * SPAN


def validate(x) -> list[str]:
    """Return human-readable descriptions of every violated constraint."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_VARS,):
        return [f"expected {N_VARS} design variables, got shape {x.shape}"]
    problems = []
    for v, val in zip(VARIABLES, x):
        tol = _BOX_TOL * (v.upper - v.lower)
        if not np.isfinite(val) or val < v.lower - tol or val > v.upper + tol:
            problems.append(f"{v.key} ({v.name}) = {val:g} outside [{v.lower:g}, {v.upper:g}]")
    if x[7] > x[2]:
        problems.append("seal height exceeds groove depth")
    if not x[4] + x[5] < x[3]:
        problems.append("bottom reliefs exceed groove bottom width")
    if not x[0] < x[2]:
        problems.append("chamfer exceeds groove depth")
    return problems


def is_valid(x) -> bool:
    return not validate(x)


def valid_mask(x):
    """Vectorised :func:`is_valid` over an ``(n, 13)`` array."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    tol = _BOX_TOL * SPAN
    ok = np.all(np.isfinite(x), axis=1)
    ok &= np.all((x >= LOWER - tol) & (x <= UPPER + tol), axis=1)
    ok &= x[:, 7] <= x[:, 2]
    ok &= x[:, 4] + x[:, 5] < x[:, 3]
    ok &= x[:, 0] < x[:, 2]
    return ok


@dataclass(frozen=True)
class SealGeometry:
    """The 14 construction points of one groove/seal cross-section."""

    points: np.ndarray  # (14, 2) as (z, y)

    def __post_init__(self):
        if self.points.shape != (14, 2):
            raise ValueError(f"SealGeometry needs 14 points, got {self.points.shape}")

    @property
    def groove_polygon(self) -> np.ndarray:
        return self.points[0:8]

    @property
    def seal_polygon(self) -> np.ndarray:
        return self.points[8:12]

    @property
    def frame(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points[12], self.points[13]


def _construct(x):
    """Closed-form point construction, vectorised over leading axes of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    ch, alpha, D, W, a, e, R, h, t = (x[..., k] for k in range(9))
    tan_a = np.tan(np.deg2rad(alpha))
    zb = (D - ch) * tan_a
    zero = np.zeros_like(D)
    pts = [
        (ch, zero),
        (zero, ch),
        ((D - a - ch) * tan_a, D - a),
        (zb + a, D),
        (zb + W - e, D),
        (zb + W, D - e),
        (zb + W, R),
        (zb + W + R, zero),
        # seal rectangle seated against the bottom and rear wall
        (zb + W - t, D),
        (zb + W, D),
        (zb + W, D - h),
        (zb + W - t, D - h),
    ]
    p = np.stack([np.stack(xy, axis=-1) for xy in pts], axis=-2)
    m = 0.1 * D
    zmin = p[..., 0].min(axis=-1)
    zmax = p[..., 0].max(axis=-1)
    p13 = np.stack([zmin - m, -m], axis=-1)
    p14 = np.stack([zmax + m, D + m], axis=-1)
    return np.concatenate([p, p13[..., None, :], p14[..., None, :]], axis=-2)


def compute_points(x) -> SealGeometry:
    problems = validate(x)
    if problems:
        raise InvalidDesign("; ".join(problems))
    return SealGeometry(_construct(x))


def compute_points_batch(x) -> np.ndarray:
    """``(n, 14, 2)`` point arrays for already-validated designs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not valid_mask(x).all():
        raise InvalidDesign("batch contains invalid designs")
    return _construct(x)


def shoelace_area(poly) -> float:
    z, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(z, np.roll(y, -1)) - np.dot(y, np.roll(z, -1))))


def polygons_simple(polys) -> np.ndarray:
    """Segment-intersection simplicity test for a batch of polygons ``(n, k, 2)``.

    Non-adjacent edge pairs must not touch; adjacent edges may only share
    their common vertex.
    """
    polys = np.asarray(polys, dtype=np.float64)
    if polys.ndim == 2:
        polys = polys[None]
    k = polys.shape[1]
    a = polys
    b = np.roll(polys, -1, axis=1)
    ok = np.ones(polys.shape[0], dtype=bool)

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    def on_seg(p, q, r):
        return (np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0])) & \
               (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1]))

    for i in range(k):
        # zero-length edges make the polygon degenerate
        ok &= np.any(a[:, i] != b[:, i], axis=-1)
        for j in range(i + 1, k):
            adjacent = j == i + 1 or (i == 0 and j == k - 1)
            p1, p2, p3, p4 = a[:, i], b[:, i], a[:, j], b[:, j]
            d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
            d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
            proper = (d1 * d2 < 0) & (d3 * d4 < 0)
            if adjacent:
                # shared vertex is fine; collinear overlap is not
                shared = p2 if j == i + 1 else p1
                other_i = p1 if j == i + 1 else p2
                other_j = p4 if j == i + 1 else p3
                overlap = (orient(other_i, shared, other_j) == 0) & (
                    (on_seg(p3, p4, other_i)) | (on_seg(p1, p2, other_j)))
                ok &= ~overlap
            else:
                touch = ((d1 == 0) & on_seg(p3, p4, p1)) | ((d2 == 0) & on_seg(p3, p4, p2)) | \
                        ((d3 == 0) & on_seg(p1, p2, p3)) | ((d4 == 0) & on_seg(p1, p2, p4))
                ok &= ~(proper | touch)
    return ok


def frame_transform(g: SealGeometry, resolution: int):
    """Affine map from the geometry frame onto pixel space ``[0, resolution)^2``.

    Returns ``(origin, scale)`` with ``pixel = (point - origin) * scale``.
    """
    lo, hi = g.frame
    extent = hi - lo
    if not np.all(extent > 0):
        raise DegenerateFrame(f"frame has zero extent: {extent}")
    return lo, resolution / extent


def rasterize(g: SealGeometry, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Binary ``(resolution, resolution)`` image of groove ∪ seal, row 0 at the mouth side."""
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    origin, scale = frame_transform(g, resolution)
    centres = (np.arange(resolution) + 0.5)
    zs = origin[0] + centres / scale[0]
    ys = origin[1] + centres / scale[1]
    polys = [np.ascontiguousarray(g.groove_polygon), np.ascontiguousarray(g.seal_polygon)]
    return kernels.points_in_polygons(zs, ys, polys)


def rasterize_batch(x, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Rasterise an ``(n, 13)`` batch of valid designs to ``(n, resolution, resolution)``."""
    pts = compute_points_batch(x)
    out = np.empty((pts.shape[0], resolution, resolution), dtype=np.uint8)
    for k in range(pts.shape[0]):
        out[k] = rasterize(SealGeometry(pts[k]), resolution)
    return out


def write_pgm(image: np.ndarray, path) -> None:
    """Binary PGM (P5) dump; material pixels become 255."""
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.where(img > 0, 255, 0).astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return (pix > maxval // 2).astype(np.uint8)


def _svg_path(poly, origin, scale) -> str:
    px = (poly - origin) * scale
    cmds = [f"M {px[0, 0]:.4f} {px[0, 1]:.4f}"]
    cmds += [f"L {p[0]:.4f} {p[1]:.4f}" for p in px[1:]]
    return " ".join(cmds) + " Z"


def to_svg(g: SealGeometry, overlay: SealGeometry | None = None, resolution: int = DEFAULT_RESOLUTION) -> str:
    """SVG 1.1 outline drawing in the same pixel frame as :func:`rasterize`.

    The overlay (e.g. the existing design) is drawn dashed in a second colour,
    mapped through ``g``'s frame so both outlines share one coordinate system.
    """
    origin, scale = frame_transform(g, resolution)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{resolution}" '
        f'height="{resolution}" viewBox="0 0 {resolution} {resolution}" overflow="visible">',
        f'<rect x="0" y="0" width="{resolution}" height="{resolution}" fill="white"/>',
    ]
    layers = [("design", g, 'stroke="black" stroke-width="1.5"')]
    if overlay is not None:
        layers.append(("overlay", overlay, 'stroke="red" stroke-width="1" stroke-dasharray="4 2"'))
    for name, geom, style in layers:
        lines.append(f'<g id="{name}" fill="none" {style}>')
        lines.append(f'<path class="groove" d="{_svg_path(geom.groove_polygon, origin, scale)}"/>')
        lines.append(f'<path class="seal" d="{_svg_path(geom.seal_polygon, origin, scale)}"/>')
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def check_unit_box(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != N_VARS:
        raise OutOfRange(f"expected {N_VARS} normalised variables, got shape {u.shape}")
    if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise OutOfRange("normalised design outside [0, 1]^13")
    return u
