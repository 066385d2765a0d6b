"""Preprocessing pipeline and datasets.

Training samples go through resize -> random crop -> random mirror ->
normalize; evaluation skips the random jitter and resizes straight to the
crop size. Every random transform applies identical spatial parameters to
the map and truth halves so pairs stay aligned, and every draw comes from
a (seed, purpose, step)-keyed stream so any sample can be regenerated
without replaying the run.

A procedural tile generator provides desk-scale stand-in data: ``invert``
(truth is the negative of the map), ``recolor`` (fixed channel
permutation), and ``roads`` (schematic roads on a flat background mapped
to noisy textured "terrain" with recolored roads).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .imgio import ImagePair, load_combined
from .rng import Rng
from .tensor import ShapeError, Tensor4

SYNTH_TASKS = ("invert", "recolor", "roads")
RECOLOR_PERM = (1, 2, 0)

ROADS_MAP_BG = (224, 224, 224)
ROADS_MAP_ROAD = (255, 255, 255)
ROADS_TRUTH_BASE = (60, 130, 60)
ROADS_TRUTH_ROAD = (70, 70, 70)


@dataclass(frozen=True)
class JitterSpec:
    """Resize-then-random-crop augmentation sizes."""

    resize_to: int = 286
    crop_to: int = 256
    mirror_prob: float = 0.5
    method: str = "nearest"

    def __post_init__(self):
        if self.crop_to <= 0 or self.resize_to <= 0:
            raise ValueError("sizes must be positive")
        if self.resize_to < self.crop_to:
            raise ValueError(
                f"resize_to ({self.resize_to}) must be >= crop_to ({self.crop_to})")
        if not 0.0 <= self.mirror_prob <= 1.0:
            raise ValueError(f"mirror_prob must be in [0, 1]: {self.mirror_prob}")


def resize(t: Tensor4, h: int, w: int, method: str = "nearest") -> Tensor4:
    """Resize the spatial axes.

    nearest maps destination index d to source floor(d * src/dst);
    bilinear interpolates at pixel centers with edge clamping.
    """
    if h <= 0 or w <= 0:
        raise ValueError(f"resize target must be positive, got {h}x{w}")
    n, sh, sw, c = t.dims
    if (sh, sw) == (h, w) and method == "nearest":
        return Tensor4(t.data)
    if method == "nearest":
        rows = (np.arange(h) * (sh / h)).astype(np.int64)
        cols = (np.arange(w) * (sw / w)).astype(np.int64)
        return Tensor4(np.ascontiguousarray(t.data[:, rows][:, :, cols]))
    if method == "bilinear":
        out = _bilinear(t.data, h, w)
        return Tensor4(out.astype(t.dtype))
    raise ValueError(f"resize method must be 'nearest' or 'bilinear', got {method!r}")


def _bilinear(data: np.ndarray, h: int, w: int) -> np.ndarray:
    n, sh, sw, c = data.shape
    ys = np.clip((np.arange(h) + 0.5) * (sh / h) - 0.5, 0, sh - 1)
    xs = np.clip((np.arange(w) + 0.5) * (sw / w) - 0.5, 0, sw - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ys - y0).reshape(1, h, 1, 1)
    fx = (xs - x0).reshape(1, 1, w, 1)
    d = data.astype(np.float64)
    top = d[:, y0][:, :, x0] * (1 - fx) + d[:, y0][:, :, x1] * fx
    bot = d[:, y1][:, :, x0] * (1 - fx) + d[:, y1][:, :, x1] * fx
    return top * (1 - fy) + bot * fy


def crop_pair(pair: ImagePair, top: int, left: int, size: int) -> ImagePair:
    a = pair.input_map.data[:, top:top + size, left:left + size, :]
    b = pair.target_truth.data[:, top:top + size, left:left + size, :]
    return ImagePair(Tensor4(np.ascontiguousarray(a)),
                     Tensor4(np.ascontiguousarray(b)), pair.source_id)


def random_crop_pair(pair: ImagePair, crop_to: int,
                     stream: np.random.Generator) -> ImagePair:
    """Crop both halves at one offset drawn uniformly over the valid range."""
    _, h, w, _ = pair.input_map.dims
    if h < crop_to or w < crop_to:
        raise ShapeError(f"cannot crop {h}x{w} input to {crop_to}")
    top = int(stream.integers(0, h - crop_to + 1))
    left = int(stream.integers(0, w - crop_to + 1))
    return crop_pair(pair, top, left, crop_to)


def mirror_pair(pair: ImagePair) -> ImagePair:
    return ImagePair(Tensor4(np.ascontiguousarray(pair.input_map.data[:, :, ::-1, :])),
                     Tensor4(np.ascontiguousarray(pair.target_truth.data[:, :, ::-1, :])),
                     pair.source_id)


def random_mirror_pair(pair: ImagePair, stream: np.random.Generator,
                       prob: float = 0.5) -> ImagePair:
    """Flip both halves left-right together with the given probability."""
    if prob > 0 and float(stream.random()) < prob:
        return mirror_pair(pair)
    return pair


def normalize(t: Tensor4) -> Tensor4:
    """Pixel [0, 255] -> [-1, 1]. Computed as (v - 127.5) / 127.5, which
    the denormalize affine inverts bit-exactly in float64."""
    return Tensor4(((t.data.astype(np.float64) - 127.5) / 127.5).astype(t.dtype))


def denormalize(t: Tensor4) -> Tensor4:
    """[-1, 1] -> pixel [0, 255]; out-of-range values are clamped."""
    v = t.data.astype(np.float64) * 127.5 + 127.5
    return Tensor4(np.clip(v, 0.0, 255.0).astype(t.dtype))


def normalize_pair(pair: ImagePair) -> ImagePair:
    return ImagePair(normalize(pair.input_map), normalize(pair.target_truth),
                     pair.source_id)


def _rect(stream: np.random.Generator, size: int) -> tuple[int, int, int, int]:
    y0, x0 = int(stream.integers(0, size - 1)), int(stream.integers(0, size - 1))
    y1 = int(stream.integers(y0 + 1, size + 1))
    x1 = int(stream.integers(x0 + 1, size + 1))
    return y0, x0, y1, x1


def _base_map(stream: np.random.Generator, size: int) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.float32)
    img[:] = stream.integers(0, 256, 3)
    for _ in range(int(stream.integers(4, 9))):
        y0, x0, y1, x1 = _rect(stream, size)
        img[y0:y1, x0:x1] = stream.integers(0, 256, 3)
    return img


def _value_noise(stream: np.random.Generator, size: int, cell: int) -> np.ndarray:
    """Smooth noise in [-1, 1]: coarse uniform grid, bilinear upsample."""
    grid_n = max(size // cell, 1) + 1
    grid = stream.uniform(-1.0, 1.0, (1, grid_n, grid_n, 1))
    return _bilinear(grid, size, size)[0, :, :, 0]


def _roads_pair(stream: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    map_img = np.empty((size, size, 3), dtype=np.float32)
    map_img[:] = ROADS_MAP_BG
    noise = _value_noise(stream, size, max(size // 8, 2))
    truth = np.empty((size, size, 3), dtype=np.float32)
    truth[:] = ROADS_TRUTH_BASE
    truth += (noise * 45.0)[:, :, None]
    truth = np.clip(truth, 0, 255)
    for _ in range(int(stream.integers(2, 5))):
        width = int(stream.integers(max(size // 16, 1), max(size // 8, 2)))
        pos = int(stream.integers(0, size - width + 1))
        if int(stream.integers(0, 2)) == 0:
            sl = (slice(pos, pos + width), slice(None))
        else:
            sl = (slice(None), slice(pos, pos + width))
        map_img[sl] = ROADS_MAP_ROAD
        truth[sl] = ROADS_TRUTH_ROAD
    return map_img, truth


def synth_pair(task: str, size: int, seed: int, index: int) -> ImagePair:
    """Deterministic synthetic pair for (seed, index)."""
    if task not in SYNTH_TASKS:
        raise ValueError(f"task must be one of {SYNTH_TASKS}, got {task!r}")
    if size < 16:
        raise ValueError(f"synth size must be >= 16, got {size}")
    stream = Rng(seed).stream("synth", index)
    if task == "roads":
        map_img, truth = _roads_pair(stream, size)
    else:
        map_img = _base_map(stream, size)
        if task == "invert":
            truth = 255.0 - map_img
        else:
            truth = map_img[:, :, RECOLOR_PERM]
    return ImagePair(Tensor4(map_img[None]), Tensor4(np.ascontiguousarray(truth[None])),
                     source_id=f"synth:{task}:{seed}:{index}")


def synth_tiles(n: int, size: int, task: str, seed: int) -> Iterator[ImagePair]:
    """Stream of deterministic synthetic pairs."""
    for index in range(n):
        yield synth_pair(task, size, seed, index)


class Dataset:
    """Indexable source of raw (pixel-space) pairs plus the sampling logic.

    ``training_sample(rng, jitter, step)`` is pure in (dataset, seed, step):
    epoch shuffling, crop offsets and mirror flips all come from streams
    keyed by the step, which is what makes interrupted runs resumable
    bit-for-bit.
    """

    def __init__(self, loader, count: int, fingerprint: str):
        if count <= 0:
            raise ValueError("dataset is empty")
        self._loader = loader
        self._count = count
        self._fingerprint = fingerprint
        self._perm_cache: tuple[int, np.ndarray] | None = None

    @classmethod
    def from_dir(cls, directory: str | os.PathLike,
                 pair_order: str = "map-left") -> "Dataset":
        root = Path(directory)
        files = sorted(p for p in root.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        if not files:
            raise ValueError(f"no image files under {root}")
        digest = hashlib.sha256()
        for p in files:
            digest.update(p.name.encode())
            digest.update(str(p.stat().st_size).encode())
        return cls(lambda i: load_combined(files[i], pair_order), len(files),
                   digest.hexdigest()[:16])

    @classmethod
    def from_synth(cls, task: str, count: int, size: int, seed: int) -> "Dataset":
        if count <= 0:
            raise ValueError("dataset is empty")
        tag = hashlib.sha256(f"{task}:{count}:{size}:{seed}".encode()).hexdigest()[:16]
        return cls(lambda i: synth_pair(task, size, seed, i), count, tag)

    def __len__(self) -> int:
        return self._count

    @property
    def fingerprint(self) -> str:
        return self._fingerprint

    def pair(self, index: int) -> ImagePair:
        return self._loader(index)

    def _shuffled_index(self, rng: Rng, epoch: int, offset: int) -> int:
        key = (rng.seed, epoch)
        if self._perm_cache is not None and self._perm_cache[0] == key:
            perm = self._perm_cache[1]
        else:
            perm = rng.stream("shuffle", epoch).permutation(self._count)
            self._perm_cache = (key, perm)
        return int(perm[offset])

    def training_sample(self, rng: Rng, jitter: JitterSpec, step: int,
                        shuffle: bool = True) -> ImagePair:
        """Jittered, normalized pair for one global training step."""
        epoch, offset = divmod(step, self._count)
        idx = self._shuffled_index(rng, epoch, offset) if shuffle else offset
        pair = self.pair(idx)
        pair = ImagePair(
            resize(pair.input_map, jitter.resize_to, jitter.resize_to, jitter.method),
            resize(pair.target_truth, jitter.resize_to, jitter.resize_to, jitter.method),
            pair.source_id)
        pair = random_crop_pair(pair, jitter.crop_to, rng.stream("crop", step))
        pair = random_mirror_pair(pair, rng.stream("mirror", step), jitter.mirror_prob)
        return normalize_pair(pair)

    def eval_sample(self, index: int, crop_to: int, method: str = "nearest") -> ImagePair:
        """Deterministic evaluation pair: straight resize, no jitter."""
        pair = self.pair(index)
        pair = ImagePair(resize(pair.input_map, crop_to, crop_to, method),
                         resize(pair.target_truth, crop_to, crop_to, method),
                         pair.source_id)
        return normalize_pair(pair)

    def iter_epochs(self, epochs: int, rng: Rng, jitter: JitterSpec | None,
                    crop_to: int | None = None, shuffle: bool = True,
                    ) -> Iterator[ImagePair]:
        """One full pass per epoch; jitter applied when given, otherwise the
        deterministic eval path (requires crop_to)."""
        if jitter is None and crop_to is None:
            raise ValueError("need either a jitter spec or crop_to")
        for step in range(epochs * self._count):
            if jitter is not None:
                yield self.training_sample(rng, jitter, step, shuffle)
            else:
                epoch, offset = divmod(step, self._count)
                idx = self._shuffled_index(rng, epoch, offset) if shuffle else offset
                yield self.eval_sample(idx, crop_to)
