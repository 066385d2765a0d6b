"""Adversarial and reconstruction losses, recorded on the tape as single
nodes with hand-derived backward passes."""

from __future__ import annotations

import numpy as np

from .ops import _sigmoid64
from .tape import Tape
from .tensor import ShapeError, Tensor4


def gan_bce(logits: Tensor4, target_is_real: bool, tape: Tape | None = None) -> Tensor4:
    """Mean sigmoid cross-entropy of a logit map against all-ones or all-zeros.

    Uses the stable form max(z, 0) - z*t + log(1 + exp(-|z|)), which never
    exponentiates a large positive value.
    """
    z = logits.data.astype(np.float64)
    t = 1.0 if target_is_real else 0.0
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = Tensor4.scalar(per.mean(), dtype=logits.dtype)
    if tape is not None:
        n = z.size

        def bwd(g: np.ndarray):
            coeff = float(g.reshape(())) / n
            dz = (_sigmoid64(z) - t) * coeff
            return (dz.astype(logits.dtype),)

        tape.record("gan_bce", (logits,), out, bwd)
    return out


def l1_loss(a: Tensor4, b: Tensor4, tape: Tape | None = None) -> Tensor4:
    """Mean absolute difference."""
    if a.dims != b.dims:
        raise ShapeError(f"l1_loss: dims {a.dims} vs {b.dims}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    out = Tensor4.scalar(np.abs(diff).mean(), dtype=a.dtype)
    if tape is not None:
        n = diff.size

        def bwd(g: np.ndarray):
            coeff = float(g.reshape(())) / n
            da = np.sign(diff) * coeff
            return da.astype(a.dtype), (-da).astype(a.dtype)

        tape.record("l1_loss", (a, b), out, bwd)
    return out
