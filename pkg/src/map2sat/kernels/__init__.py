"""Convolution kernel dispatch.

At import time we try the compiled Cython core; if it is missing (build
skipped or failed) everything routes to the numpy backend. Setting
``MAP2SAT_FORCE_NUMPY=1`` forces the fallback, which the benchmark uses to
compare the two. float64 tensors always take the numpy path: the compiled
kernels are float32-only by design, while verification runs in 64-bit.
"""

from __future__ import annotations

import os

import numpy as np

from . import numpy_backend

try:
    from . import _convcore  # type: ignore[attr-defined]
except ImportError:
    _convcore = None

_FORCE_NUMPY = os.environ.get("MAP2SAT_FORCE_NUMPY", "") not in ("", "0")


def backend_name() -> str:
    return "numpy" if (_convcore is None or _FORCE_NUMPY) else "compiled"


def have_compiled() -> bool:
    return _convcore is not None


def _use_compiled(*arrays) -> bool:
    if _convcore is None or _FORCE_NUMPY:
        return False
    return all(a is None or a.dtype == np.float32 for a in arrays)


def conv_forward(x, w, bias, stride, pads):
    """out[n,oh,ow,co] = sum_{i,j,ci} x_pad[n, oh*s+i, ow*s+j, ci] * w[i,j,ci,co] (+ bias)."""
    if _use_compiled(x, w, bias):
        return _convcore.conv_forward_f32(x, w, bias, stride, *pads)
    return numpy_backend.conv_forward(x, w, bias, stride, pads)


def conv_dinput(g, w, stride, pads, in_hw):
    """Adjoint of conv_forward with respect to the input."""
    if _use_compiled(g, w):
        return _convcore.conv_dinput_f32(g, w, stride, *pads, in_hw[0], in_hw[1])
    return numpy_backend.conv_dinput(g, w, stride, pads, in_hw)


def conv_dweight(x, g, kh, kw, stride, pads):
    """Adjoint of conv_forward with respect to the weight."""
    if _use_compiled(x, g):
        return _convcore.conv_dweight_f32(x, g, kh, kw, stride, *pads)
    return numpy_backend.conv_dweight(x, g, kh, kw, stride, pads)
