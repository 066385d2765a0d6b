"""Layer operations: forward kernels plus tape-recorded backward passes.

Shape conventions
-----------------
Activations are (batch, height, width, channels). A conv weight is
(kh, kw, cin, cout); a transposed-conv weight is (kh, kw, cout, cin),
i.e. the weight of the ordinary convolution it is the adjoint of. Biases
and per-channel batchnorm parameters are (1, 1, 1, channels) tensors.

"same" padding pads symmetrically with the extra pixel on the bottom and
right when the total is odd; output extent is ceil(in / stride). "valid"
uses no padding; output extent is floor((in - k) / stride) + 1.

Every op takes an optional ``tape``; with ``tape=None`` it runs forward
only and keeps no saved context.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tape import Tape
from .tensor import ShapeError, Tensor4


def same_pads(extent: int, k: int, stride: int) -> tuple[int, int]:
    """(before, after) zero padding for ceil(extent/stride) outputs."""
    out = -(-extent // stride)
    total = max((out - 1) * stride + k - extent, 0)
    return total // 2, total - total // 2


def conv_out_extent(extent: int, k: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-extent // stride)
    if padding == "valid":
        if extent < k:
            raise ShapeError(f"valid conv needs extent >= kernel, got {extent} < {k}")
        return (extent - k) // stride + 1
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _check_dtype(*tensors: Tensor4) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed dtypes in op: {sorted(str(d) for d in dtypes)}")


def conv2d(x: Tensor4, w: Tensor4, b: Tensor4 | None, stride: int = 2,
           padding: str = "same", tape: Tape | None = None) -> Tensor4:
    """2-D convolution over the spatial axes."""
    n, h, wd, ci = x.dims
    kh, kw, wci, co = w.dims
    if ci != wci:
        raise ShapeError(
            f"conv2d: input channels {ci} != weight cin {wci} "
            f"(input {x.dims}, weight {w.dims})")
    if b is not None and b.dims != (1, 1, 1, co):
        raise ShapeError(f"conv2d: bias dims {b.dims} do not match cout {co}")
    _check_dtype(*(t for t in (x, w, b) if t is not None))
    if padding == "same":
        pt, pb = same_pads(h, kh, stride)
        pl, pr = same_pads(wd, kw, stride)
    else:
        conv_out_extent(h, kh, stride, padding)
        conv_out_extent(wd, kw, stride, padding)
        pt = pb = pl = pr = 0
    pads = (pt, pb, pl, pr)

    bias_arr = None if b is None else b.data
    out = Tensor4(kernels.conv_forward(x.data, w.data, bias_arr, stride, pads))

    if tape is not None:
        def bwd(g: np.ndarray):
            dx = kernels.conv_dinput(g, w.data, stride, pads, (h, wd))
            dw = kernels.conv_dweight(x.data, g, kh, kw, stride, pads)
            if b is None:
                return dx, dw
            db = g.astype(np.float64).sum(axis=(0, 1, 2)).reshape(1, 1, 1, co)
            return dx, dw, db.astype(g.dtype)

        inputs = (x, w) if b is None else (x, w, b)
        tape.record("conv2d", inputs, out, bwd)
    return out


def conv2d_transpose(x: Tensor4, w: Tensor4, b: Tensor4 | None, stride: int = 2,
                     tape: Tape | None = None) -> Tensor4:
    """Transposed convolution: output spatial extent = input extent * stride.

    Implemented as the adjoint of ``conv2d(.., stride, "same")`` at the
    output size, so its backward input pass is exactly that forward conv.
    """
    n, h, wd, ci = x.dims
    kh, kw, co, wci = w.dims
    if ci != wci:
        raise ShapeError(
            f"conv2d_transpose: input channels {ci} != weight cin {wci} "
            f"(input {x.dims}, weight {w.dims})")
    if kh < stride or kw < stride:
        raise ShapeError(f"conv2d_transpose: kernel {kh}x{kw} smaller than stride {stride}")
    if b is not None and b.dims != (1, 1, 1, co):
        raise ShapeError(f"conv2d_transpose: bias dims {b.dims} do not match cout {co}")
    _check_dtype(*(t for t in (x, w, b) if t is not None))
    oh, ow = h * stride, wd * stride
    pt, pb = same_pads(oh, kh, stride)
    pl, pr = same_pads(ow, kw, stride)
    pads = (pt, pb, pl, pr)

    out_arr = kernels.conv_dinput(x.data, w.data, stride, pads, (oh, ow))
    if b is not None:
        out_arr = (out_arr.astype(np.float64) + b.data.astype(np.float64)).astype(x.data.dtype)
    out = Tensor4(out_arr)

    if tape is not None:
        def bwd(g: np.ndarray):
            dx = kernels.conv_forward(g, w.data, None, stride, pads)
            dw = kernels.conv_dweight(g, x.data, kh, kw, stride, pads)
            if b is None:
                return dx, dw
            db = g.astype(np.float64).sum(axis=(0, 1, 2)).reshape(1, 1, 1, co)
            return dx, dw, db.astype(g.dtype)

        inputs = (x, w) if b is None else (x, w, b)
        tape.record("conv2d_transpose", inputs, out, bwd)
    return out


def batchnorm(x: Tensor4, gamma: Tensor4, beta: Tensor4, epsilon: float = 1e-5,
              tape: Tape | None = None) -> Tensor4:
    """Normalize each channel over the batch and spatial axes.

    Always uses current-batch statistics; with batch size 1 this behaves
    like instance normalization.
    """
    n, h, wd, c = x.dims
    m = n * h * wd
    if m == 0:
        raise ShapeError(f"batchnorm: empty channel slab for input {x.dims}")
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p.dims != (1, 1, 1, c):
            raise ShapeError(f"batchnorm: {name} dims {p.dims} do not match channels {c}")
    _check_dtype(x, gamma, beta)

    x64 = x.data.astype(np.float64, copy=False)
    mean = x64.mean(axis=(0, 1, 2), keepdims=True)
    var = x64.var(axis=(0, 1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x64 - mean) * inv_std
    out64 = gamma.data.astype(np.float64) * xhat + beta.data.astype(np.float64)
    out = Tensor4(out64.astype(x.dtype))

    if tape is not None:
        def bwd(g: np.ndarray):
            g64 = g.astype(np.float64, copy=False)
            dbeta = g64.sum(axis=(0, 1, 2), keepdims=True)
            dgamma = (g64 * xhat).sum(axis=(0, 1, 2), keepdims=True)
            dxhat = g64 * gamma.data.astype(np.float64)
            dx = (inv_std / m) * (
                m * dxhat
                - dxhat.sum(axis=(0, 1, 2), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 1, 2), keepdims=True)
            )
            return dx.astype(g.dtype), dgamma.astype(g.dtype), dbeta.astype(g.dtype)

        tape.record("batchnorm", (x, gamma, beta), out, bwd)
    return out


def leaky_relu(x: Tensor4, slope: float = 0.2, tape: Tape | None = None) -> Tensor4:
    """Elementwise max(v, slope * v)."""
    if slope < 0:
        raise ValueError(f"leaky_relu slope must be non-negative, got {slope}")
    out = Tensor4(np.maximum(x.data, np.asarray(slope, dtype=x.dtype) * x.data))
    if tape is not None:
        mult = np.where(x.data > 0, max(1.0, slope), min(1.0, slope)).astype(x.dtype)
        tape.record("leaky_relu", (x,), out, lambda g: (g * mult,))
    return out


def relu(x: Tensor4, tape: Tape | None = None) -> Tensor4:
    out = Tensor4(np.maximum(x.data, 0))
    if tape is not None:
        mask = (x.data > 0).astype(x.dtype)
        tape.record("relu", (x,), out, lambda g: (g * mask,))
    return out


def tanh_act(x: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Elementwise tanh, clamped strictly inside (-1, 1).

    The clamp keeps the output contract exact in finite precision: float
    tanh saturates to exactly +-1 for |v| beyond ~9 (float32) while the
    mathematical range is open.
    """
    lim = float(np.nextafter(np.asarray(1, dtype=x.dtype), np.asarray(0, dtype=x.dtype)))
    y = np.clip(np.tanh(x.data.astype(np.float64)), -lim, lim).astype(x.dtype)
    out = Tensor4(y)
    if tape is not None:
        tape.record("tanh", (x,), out, lambda g: (g * (1.0 - y * y).astype(x.dtype),))
    return out


def sigmoid(x: Tensor4, tape: Tape | None = None) -> Tensor4:
    y = _sigmoid64(x.data).astype(x.dtype)
    out = Tensor4(y)
    if tape is not None:
        tape.record("sigmoid", (x,), out, lambda g: (g * (y * (1.0 - y)).astype(x.dtype),))
    return out


def _sigmoid64(z: np.ndarray) -> np.ndarray:
    z64 = z.astype(np.float64, copy=False)
    out = np.empty_like(z64)
    pos = z64 >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z64[pos]))
    ez = np.exp(z64[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dropout(x: Tensor4, rate: float, rng: np.random.Generator | None = None,
            active: bool = True, tape: Tape | None = None) -> Tensor4:
    """Zero each element with probability ``rate``, scaling survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not active or rate == 0.0:
        out = Tensor4(x.data)
        if tape is not None:
            tape.record("dropout", (x,), out, lambda g: (g,))
        return out
    if rng is None:
        raise ValueError("active dropout requires an rng stream")
    keep = rng.random(x.dims) >= rate
    mask = (keep / (1.0 - rate)).astype(x.dtype)
    out = Tensor4(x.data * mask)
    if tape is not None:
        tape.record("dropout", (x,), out, lambda g: (g * mask,))
    return out


def concat_channels(a: Tensor4, b: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Concatenate along the channel axis; batch/spatial extents must agree."""
    if a.dims[:3] != b.dims[:3]:
        raise ShapeError(f"concat_channels: spatial mismatch {a.dims} vs {b.dims}")
    _check_dtype(a, b)
    ca = a.dims[3]
    out = Tensor4(np.concatenate([a.data, b.data], axis=3))
    if tape is not None:
        tape.record("concat", (a, b), out,
                    lambda g: (np.ascontiguousarray(g[..., :ca]),
                               np.ascontiguousarray(g[..., ca:])))
    return out


def zero_pad(x: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Pad one zero pixel on each spatial side."""
    out = Tensor4(np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0))))
    if tape is not None:
        tape.record("zero_pad", (x,), out,
                    lambda g: (np.ascontiguousarray(g[:, 1:-1, 1:-1, :]),))
    return out


def add(a: Tensor4, b: Tensor4, tape: Tape | None = None) -> Tensor4:
    if a.dims != b.dims:
        raise ShapeError(f"add: dims {a.dims} vs {b.dims}")
    _check_dtype(a, b)
    out = Tensor4(a.data + b.data)
    if tape is not None:
        tape.record("add", (a, b), out, lambda g: (g, g))
    return out


def scale(x: Tensor4, factor: float, tape: Tape | None = None) -> Tensor4:
    out = Tensor4(x.data * np.asarray(factor, dtype=x.dtype))
    if tape is not None:
        tape.record("scale", (x,), out,
                    lambda g: (g * np.asarray(factor, dtype=x.dtype),))
    return out
