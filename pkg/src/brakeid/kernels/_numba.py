"""numba ``@njit`` versions of the hot kernels.

Signatures mirror :mod:`brakeid.kernels._numpy`; loops run serially so the
reduction order is fixed and results are reproducible run to run.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _fill(zs, ys, verts, offsets):
    ny, nz = ys.shape[0], zs.shape[0]
    out = np.zeros((ny, nz), dtype=np.uint8)
    for p in range(offsets.shape[0] - 1):
        start, stop = offsets[p], offsets[p + 1]
        n = stop - start
        for iy in range(ny):
            y = ys[iy]
            for iz in range(nz):
                if out[iy, iz]:
                    continue
                z = zs[iz]
                inside = False
                for k in range(n):
                    z0 = verts[start + k, 0]
                    y0 = verts[start + k, 1]
                    z1 = verts[start + (k + 1) % n, 0]
                    y1 = verts[start + (k + 1) % n, 1]
                    if y0 == y1:
                        continue
                    if (y0 > y) != (y1 > y):
                        zc = z0 + (y - y0) * (z1 - z0) / (y1 - y0)
                        if z < zc:
                            inside = not inside
                if inside:
                    out[iy, iz] = 1
    return out


def points_in_polygons(zs, ys, polygons):
    verts = np.ascontiguousarray(np.concatenate(polygons, axis=0), dtype=np.float64)
    offsets = np.zeros(len(polygons) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([p.shape[0] for p in polygons])
    return _fill(np.ascontiguousarray(zs, dtype=np.float64), np.ascontiguousarray(ys, dtype=np.float64), verts, offsets)


@njit(cache=True)
def _conv_fwd(xp, w, b, h, wd):
    n, c = xp.shape[0], xp.shape[1]
    o = w.shape[0]
    out = np.empty((n, o, h, wd))
    for s in range(n):
        for q in range(o):
            acc = np.full((h, wd), b[q])
            for ch in range(c):
                for i in range(3):
                    for j in range(3):
                        wv = w[q, ch, i, j]
                        if wv == 0.0:
                            continue
                        for r in range(h):
                            for t in range(wd):
                                acc[r, t] += wv * xp[s, ch, r + i, t + j]
            out[s, q] = acc
    return out


def conv2d_forward(x, w, b):
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return _conv_fwd(xp, np.ascontiguousarray(w), np.ascontiguousarray(b, dtype=np.float64), h, wd)


@njit(cache=True)
def _conv_dw(xp, dout):
    n, o, h, wd = dout.shape
    c = xp.shape[1]
    dw = np.zeros((o, c, 3, 3))
    for q in range(o):
        for ch in range(c):
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    for s in range(n):
                        for r in range(h):
                            for t in range(wd):
                                acc += dout[s, q, r, t] * xp[s, ch, r + i, t + j]
                    dw[q, ch, i, j] = acc
    return dw


def conv2d_backward(x, w, dout):
    n, c, h, wd = x.shape
    dout = np.ascontiguousarray(dout)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dw = _conv_dw(xp, dout)
    db = dout.sum(axis=(0, 2, 3))
    w_t = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx = conv2d_forward(dout, w_t, np.zeros(c))
    return dx, dw, db


@njit(cache=True)
def _pool_fwd(x):
    n, c, h, wd = x.shape
    ho, wo = h // 2, wd // 2
    out = np.empty((n, c, ho, wo))
    idx = np.empty((n, c, ho, wo), dtype=np.int8)
    for s in range(n):
        for ch in range(c):
            for r in range(ho):
                for t in range(wo):
                    best = x[s, ch, 2 * r, 2 * t]
                    k = 0
                    for m in range(1, 4):
                        v = x[s, ch, 2 * r + m // 2, 2 * t + m % 2]
                        if v > best:
                            best = v
                            k = m
                    out[s, ch, r, t] = best
                    idx[s, ch, r, t] = k
    return out, idx


def maxpool2d_forward(x):
    return _pool_fwd(np.ascontiguousarray(x))


@njit(cache=True)
def _pool_bwd(dout, idx, h, wd):
    n, c, ho, wo = dout.shape
    dx = np.zeros((n, c, h, wd))
    for s in range(n):
        for ch in range(c):
            for r in range(ho):
                for t in range(wo):
                    k = idx[s, ch, r, t]
                    dx[s, ch, 2 * r + k // 2, 2 * t + k % 2] = dout[s, ch, r, t]
    return dx


def maxpool2d_backward(dout, idx, in_shape):
    return _pool_bwd(np.ascontiguousarray(dout), idx, in_shape[2], in_shape[3])
