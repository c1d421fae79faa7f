"""Pure-numpy reference kernels.

These are the fallback path and the reference the numba versions are tested
against.  Layout is NCHW for images; convolutions are 3x3, stride 1, zero
padding 1.
"""

from __future__ import annotations

import numpy as np


def points_in_polygons(zs, ys, polygons):
    """Even-odd membership of every (ys[i], zs[j]) grid point in the union of ``polygons``.

    ``zs`` and ``ys`` are 1-D arrays of pixel-centre coordinates; the result
    has shape ``(len(ys), len(zs))`` and dtype uint8.
    """
    Z = zs[None, :]
    Y = ys[:, None]
    out = np.zeros((ys.shape[0], zs.shape[0]), dtype=bool)
    for poly in polygons:
        inside = np.zeros_like(out)
        n = poly.shape[0]
        for k in range(n):
            z0, y0 = poly[k]
            z1, y1 = poly[(k + 1) % n]
            if y0 == y1:
                continue
            # half-open rule on y avoids double counting shared vertices
            straddle = (y0 > Y) != (y1 > Y)
            zc = z0 + (Y - y0) * (z1 - z0) / (y1 - y0)
            inside ^= straddle & (Z < zc)
        out |= inside
    return out.astype(np.uint8)


def conv2d_forward(x, w, b):
    n, c, h, wd = x.shape
    o = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((o, n, h, wd))
    for i in range(3):
        for j in range(3):
            out += np.tensordot(w[:, :, i, j], xp[:, :, i:i + h, j:j + wd], axes=([1], [1]))
    out += b[:, None, None, None]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_backward(x, w, dout):
    """Return (dx, dw, db) for :func:`conv2d_forward`."""
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dw = np.empty_like(w)
    for i in range(3):
        for j in range(3):
            dw[:, :, i, j] = np.tensordot(dout, xp[:, :, i:i + h, j:j + wd], axes=([0, 2, 3], [0, 2, 3]))
    db = dout.sum(axis=(0, 2, 3))
    # full correlation with the flipped, channel-swapped kernel
    w_t = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx = conv2d_forward(dout, w_t, np.zeros(c))
    return dx, dw, db


def maxpool2d_forward(x):
    """2x2/stride-2 max pool (floor).  Returns (out, argmax) with argmax in 0..3."""
    n, c, h, wd = x.shape
    ho, wo = h // 2, wd // 2
    blocks = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int8)


def maxpool2d_backward(dout, idx, in_shape):
    n, c, h, wd = in_shape
    ho, wo = dout.shape[2], dout.shape[3]
    blocks = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(blocks, idx.astype(np.intp)[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    dx = np.zeros(in_shape)
    dx[:, :, :2 * ho, :2 * wo] = blocks
    return dx
