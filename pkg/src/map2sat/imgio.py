"""Image decode/encode and paired-file handling.

Dataset files are "combined" images: map and aerial tile side by side in
one JPEG or PNG, two equal halves. ``pair_order`` says which half is the
map ("map-left" by default; the public paired datasets disagree on this).
Decoded values are float tensors in pixel space [0, 255]; the training
pipeline normalizes them to [-1, 1].

Only 8-bit RGB images are accepted. Grayscale or alpha inputs are
rejected rather than silently expanded, because channel surprises usually
mean a broken dataset. Output is always PNG (lossless, so inspection
artifacts never compound).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .tensor import ShapeError, Tensor4

PAIR_ORDERS = ("map-left", "map-right")


class ImageFormatError(ValueError):
    """Input file violates the dataset's image contract."""


@dataclass
class ImagePair:
    """Aligned (map, ground-truth aerial) tensors of identical dims."""

    input_map: Tensor4
    target_truth: Tensor4
    source_id: str = ""

    def __post_init__(self):
        if self.input_map.dims != self.target_truth.dims:
            raise ShapeError(
                f"pair tensors must match: {self.input_map.dims} vs "
                f"{self.target_truth.dims}")


def decode_image(path: str | os.PathLike) -> Tensor4:
    """Decode a JPEG/PNG into a 1xHxWx3 float32 tensor in [0, 255]."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode != "RGB":
                raise ImageFormatError(
                    f"{path}: expected an 8-bit RGB image, got mode {mode!r}")
            arr = np.asarray(img, dtype=np.float32)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: unreadable image ({exc})") from exc
    return Tensor4(arr[None, :, :, :])


def load_combined(path: str | os.PathLike, pair_order: str = "map-left") -> ImagePair:
    """Split a combined map|aerial file into an aligned pair.

    The two tensors never alias: each half is copied out of the decode
    buffer.
    """
    if pair_order not in PAIR_ORDERS:
        raise ValueError(f"pair_order must be one of {PAIR_ORDERS}, got {pair_order!r}")
    t = decode_image(path)
    _, h, w, _ = t.dims
    if w % 2 != 0:
        raise ImageFormatError(f"{path}: odd combined width {w}")
    half = w // 2
    left = Tensor4(t.data[:, :, :half, :].copy())
    right = Tensor4(t.data[:, :, half:, :].copy())
    if pair_order == "map-left":
        return ImagePair(left, right, source_id=str(path))
    return ImagePair(right, left, source_id=str(path))


def to_pixels(t: Tensor4) -> np.ndarray:
    """[-1, 1] float tensor -> HxWx3 uint8, rounding half up."""
    n, h, w, c = t.dims
    if n != 1 or c != 3:
        raise ShapeError(f"expected a 1xHxWx3 tensor, got {t.dims}")
    v = t.data.astype(np.float64)
    pix = np.floor((v + 1.0) * 127.5 + 0.5)
    return np.clip(pix, 0, 255).astype(np.uint8)[0]


def encode_png(t: Tensor4, path: str | os.PathLike) -> None:
    """Write a [-1, 1] tensor as an 8-bit RGB PNG."""
    arr = to_pixels(t)
    try:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"failed to write PNG {path}: {exc}") from exc


def write_combined(map_t: Tensor4, truth_t: Tensor4, path: str | os.PathLike,
                   pair_order: str = "map-left") -> None:
    """Write a pixel-space pair as one combined PNG (inverse of load_combined)."""
    if pair_order not in PAIR_ORDERS:
        raise ValueError(f"pair_order must be one of {PAIR_ORDERS}, got {pair_order!r}")
    if map_t.dims != truth_t.dims:
        raise ShapeError(f"pair tensors must match: {map_t.dims} vs {truth_t.dims}")
    halves = (map_t, truth_t) if pair_order == "map-left" else (truth_t, map_t)
    combined = np.concatenate([halves[0].data, halves[1].data], axis=2)
    arr = np.clip(np.floor(combined.astype(np.float64) + 0.5), 0, 255).astype(np.uint8)[0]
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def make_triptych(input_t: Tensor4, truth_t: Tensor4, generated_t: Tensor4) -> Tensor4:
    """Concatenate input | ground truth | generated along the width."""
    if not (input_t.dims == truth_t.dims == generated_t.dims):
        raise ShapeError(
            f"triptych panels must match: {input_t.dims}, {truth_t.dims}, "
            f"{generated_t.dims}")
    return Tensor4(np.concatenate(
        [input_t.data, truth_t.data, generated_t.data], axis=2))
