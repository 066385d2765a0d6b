"""Vectorized numpy convolution kernels.

Fallback used when the compiled core is unavailable, and the only path for
float64 tensors (gradient checks run in 64-bit end to end). Reductions are
accumulated in float64 and cast back to the input dtype at the end.

Layouts: activations are (N, H, W, C); weights are (kh, kw, cin, cout).
Padding is explicit (top, bottom, left, right).
"""

from __future__ import annotations

import numpy as np


def conv_forward(x, w, bias, stride, pads):
    pt, pb, pl, pr = pads
    n, h, wd, ci = x.shape
    kh, kw, wci, co = w.shape
    oh = (h + pt + pb - kh) // stride + 1
    ow = (wd + pl + pr - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))).astype(np.float64, copy=False)
    w64 = w.astype(np.float64, copy=False)
    out = np.zeros((n, oh, ow, co), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :]
            out += patch @ w64[i, j]
    if bias is not None:
        out += bias.astype(np.float64, copy=False).reshape(-1)
    return out.astype(x.dtype)


def conv_dinput(g, w, stride, pads, in_hw):
    pt, pb, pl, pr = pads
    h, wd = in_hw
    n, oh, ow, co = g.shape
    kh, kw, ci, wco = w.shape
    g64 = g.astype(np.float64, copy=False)
    w64 = w.astype(np.float64, copy=False)
    dxp = np.zeros((n, h + pt + pb, wd + pl + pr, ci), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += g64 @ w64[i, j].T
    return dxp[:, pt:pt + h, pl:pl + wd, :].astype(g.dtype)


def conv_dweight(x, g, kh, kw, stride, pads):
    pt, pb, pl, pr = pads
    n, h, wd, ci = x.shape
    _, oh, ow, co = g.shape
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))).astype(np.float64, copy=False)
    g64 = g.astype(np.float64, copy=False)
    dw = np.empty((kh, kw, ci, co), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :]
            dw[i, j] = np.tensordot(patch, g64, axes=([0, 1, 2], [0, 1, 2]))
    return dw.astype(x.dtype)
