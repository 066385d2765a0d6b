"""Patch discriminator over (input, target) image pairs.

The two images are concatenated on the channel axis, run through strided
downsample blocks (conv k4 s2, batchnorm except the first block,
LeakyReLU), then a k3 same-padded conv with relu, zero padding, a k4
valid conv without bias followed by batchnorm and LeakyReLU, zero padding
again, and a final k4 valid conv to one channel. The output is a grid of
patch logits, not probabilities; apply the loss (or ``patch_score``) to
squash it.

Parameter names: ``disc/down{i}/{w,b,gamma,beta}``, ``disc/conv256/{w,b}``,
``disc/conv512/{w,gamma,beta}`` (no bias), ``disc/out/{w,b}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .rng import Rng
from .tape import Tape
from .tensor import ParamStore, ShapeError, Tensor4

INIT_STD = 0.02


@dataclass(frozen=True)
class DiscriminatorSpec:
    down_filters: tuple[int, ...] = (64, 128, 256)
    extra_filters: int = 256
    extra_kernel: int = 3
    deep_filters: int = 512
    deep_kernel: int = 4
    kernel: int = 4
    stride: int = 2
    leaky_slope: float = 0.2
    bn_epsilon: float = 1e-5
    in_channels: int = 3

    def __post_init__(self):
        if not self.down_filters or any(f <= 0 for f in self.down_filters):
            raise ValueError(f"down_filters must be positive: {self.down_filters}")
        if self.extra_filters <= 0 or self.deep_filters <= 0:
            raise ValueError("filter counts must be positive")

    def output_extent(self, extent: int) -> int:
        """Patch-grid extent for a given input extent (pure shape trace)."""
        s = extent
        for _ in self.down_filters:
            s = ops.conv_out_extent(s, self.kernel, self.stride, "same")
        s = ops.conv_out_extent(s, self.extra_kernel, 1, "same")
        s = ops.conv_out_extent(s + 2, self.deep_kernel, 1, "valid")
        s = ops.conv_out_extent(s + 2, self.kernel, 1, "valid")
        return s

    @classmethod
    def from_store(cls, store: ParamStore, **overrides) -> "DiscriminatorSpec":
        down = []
        while f"disc/down{len(down)}/w" in store:
            down.append(store[f"disc/down{len(down)}/w"].dims[3])
        if not down or "disc/out/w" not in store:
            raise ValueError("store does not contain discriminator parameters")
        fields = dict(
            down_filters=tuple(down),
            extra_filters=store["disc/conv256/w"].dims[3],
            extra_kernel=store["disc/conv256/w"].dims[0],
            deep_filters=store["disc/conv512/w"].dims[3],
            deep_kernel=store["disc/conv512/w"].dims[0],
            in_channels=store["disc/down0/w"].dims[2] // 2,
            kernel=store["disc/down0/w"].dims[0],
        )
        fields.update(overrides)
        return cls(**fields)


def build_discriminator(spec: DiscriminatorSpec, rng: Rng,
                        dtype=np.float32) -> ParamStore:
    """Initialize discriminator parameters: weights N(0, 0.02^2), biases
    zero; the deep conv has no bias and the first downsample no batchnorm."""
    stream = rng.stream("disc_init")
    store = ParamStore()

    def normal(shape):
        return Tensor4(stream.normal(0.0, INIT_STD, size=shape).astype(dtype))

    k = spec.kernel
    cin = 2 * spec.in_channels
    for i, f in enumerate(spec.down_filters):
        store.add(f"disc/down{i}/w", normal((k, k, cin, f)))
        store.add(f"disc/down{i}/b", Tensor4.zeros((1, 1, 1, f), dtype))
        if i > 0:
            store.add(f"disc/down{i}/gamma", Tensor4.full((1, 1, 1, f), 1, dtype))
            store.add(f"disc/down{i}/beta", Tensor4.zeros((1, 1, 1, f), dtype))
        cin = f

    store.add("disc/conv256/w", normal((spec.extra_kernel, spec.extra_kernel,
                                        cin, spec.extra_filters)))
    store.add("disc/conv256/b", Tensor4.zeros((1, 1, 1, spec.extra_filters), dtype))

    store.add("disc/conv512/w", normal((spec.deep_kernel, spec.deep_kernel,
                                        spec.extra_filters, spec.deep_filters)))
    store.add("disc/conv512/gamma", Tensor4.full((1, 1, 1, spec.deep_filters), 1, dtype))
    store.add("disc/conv512/beta", Tensor4.zeros((1, 1, 1, spec.deep_filters), dtype))

    store.add("disc/out/w", normal((k, k, spec.deep_filters, 1)))
    store.add("disc/out/b", Tensor4.zeros((1, 1, 1, 1), dtype))
    return store


def discriminator_forward(spec: DiscriminatorSpec, store: ParamStore,
                          x: Tensor4, y_or_g: Tensor4,
                          tape: Tape | None = None,
                          trace: list | None = None) -> Tensor4:
    """Patch logit map for (conditioning input, candidate target)."""
    if x.dims != y_or_g.dims:
        raise ShapeError(f"discriminator inputs must match: {x.dims} vs {y_or_g.dims}")

    def log(name, t):
        if trace is not None:
            trace.append((name, t.dims))

    h = ops.concat_channels(x, y_or_g, tape)
    log("concat", h)
    for i in range(len(spec.down_filters)):
        h = ops.conv2d(h, store[f"disc/down{i}/w"], store[f"disc/down{i}/b"],
                       spec.stride, "same", tape)
        if i > 0:
            h = ops.batchnorm(h, store[f"disc/down{i}/gamma"],
                              store[f"disc/down{i}/beta"], spec.bn_epsilon, tape)
        h = ops.leaky_relu(h, spec.leaky_slope, tape)
        log(f"down{i}", h)

    h = ops.conv2d(h, store["disc/conv256/w"], store["disc/conv256/b"], 1, "same", tape)
    h = ops.relu(h, tape)
    log("conv256", h)
    h = ops.zero_pad(h, tape)
    log("pad1", h)
    h = ops.conv2d(h, store["disc/conv512/w"], None, 1, "valid", tape)
    h = ops.batchnorm(h, store["disc/conv512/gamma"], store["disc/conv512/beta"],
                      spec.bn_epsilon, tape)
    h = ops.leaky_relu(h, spec.leaky_slope, tape)
    log("conv512", h)
    h = ops.zero_pad(h, tape)
    log("pad2", h)
    h = ops.conv2d(h, store["disc/out/w"], store["disc/out/b"], 1, "valid", tape)
    log("logits", h)
    return h


def patch_score(logits: Tensor4) -> float:
    """Mean sigmoid over the patch logit map: a single real/fake score."""
    z = logits.data.astype(np.float64)
    return float((1.0 / (1.0 + np.exp(-z))).mean())
