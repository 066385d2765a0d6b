"""U-Net generator: strided-conv encoder, transposed-conv decoder, skip
connections between mirror-depth levels, tanh output.

Encoder levels apply conv(stride 2) -> batchnorm -> LeakyReLU, except the
first level which has no batchnorm. Decoder levels apply tconv(stride 2)
-> batchnorm -> dropout (first ``dropout_layers`` levels, training only)
-> ReLU, then concatenate the same-resolution encoder activation. A final
tconv maps to ``out_channels`` followed by tanh.

Parameter names follow ``gen/enc{i}/{w,b,gamma,beta}``,
``gen/dec{j}/{w,b,gamma,beta}`` and ``gen/out/{w,b}``.
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
class GeneratorSpec:
    enc_filters: tuple[int, ...] = (64, 128, 256, 512, 512, 512, 512, 512)
    dec_filters: tuple[int, ...] = (512, 512, 512, 512, 256, 128, 64)
    dropout_layers: int = 3
    dropout_rate: float = 0.5
    in_channels: int = 3
    out_channels: int = 3
    kernel: int = 4
    stride: int = 2
    leaky_slope: float = 0.2
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        if len(self.enc_filters) != len(self.dec_filters) + 1:
            raise ValueError(
                f"need len(enc_filters) == len(dec_filters) + 1, got "
                f"{len(self.enc_filters)} and {len(self.dec_filters)}")
        if any(f <= 0 for f in self.enc_filters + self.dec_filters):
            raise ValueError("filter counts must be positive")
        if not 0 <= self.dropout_layers <= len(self.dec_filters):
            raise ValueError(f"dropout_layers out of range: {self.dropout_layers}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1): {self.dropout_rate}")

    @property
    def input_size(self) -> int:
        """Spatial extent the encoder contracts to a 1x1 bottleneck."""
        return self.stride ** len(self.enc_filters)

    def check_input(self, t: Tensor4) -> None:
        n, h, w, c = t.dims
        s = self.input_size
        if h != s or w != s or c != self.in_channels:
            raise ShapeError(
                f"generator expects Nx{s}x{s}x{self.in_channels} input, got {t.dims}")

    def skip_source(self, dec_level: int) -> int:
        """Encoder level whose activation matches dec_level's output size."""
        return len(self.enc_filters) - 2 - dec_level

    @classmethod
    def from_store(cls, store: ParamStore, **overrides) -> "GeneratorSpec":
        """Recover the architecture from parameter shapes (for inference)."""
        enc = []
        while f"gen/enc{len(enc)}/w" in store:
            enc.append(store[f"gen/enc{len(enc)}/w"].dims[3])
        dec = []
        while f"gen/dec{len(dec)}/w" in store:
            dec.append(store[f"gen/dec{len(dec)}/w"].dims[2])
        if not enc or "gen/out/w" not in store:
            raise ValueError("store does not contain generator parameters")
        out_w = store["gen/out/w"]
        fields = dict(
            enc_filters=tuple(enc),
            dec_filters=tuple(dec),
            in_channels=store["gen/enc0/w"].dims[2],
            out_channels=out_w.dims[2],
            kernel=out_w.dims[0],
        )
        fields.update(overrides)
        return cls(**fields)


def build_generator(spec: GeneratorSpec, rng: Rng,
                    dtype=np.float32) -> ParamStore:
    """Initialize all generator parameters.

    Weights are N(0, 0.02^2) from the seeded stream, biases zero,
    batchnorm gamma one and beta zero. The first encoder level carries no
    batchnorm parameters.
    """
    stream = rng.stream("gen_init")
    store = ParamStore()

    def normal(shape):
        return Tensor4(stream.normal(0.0, INIT_STD, size=shape).astype(dtype))

    k = spec.kernel
    cin = spec.in_channels
    for i, f in enumerate(spec.enc_filters):
        store.add(f"gen/enc{i}/w", normal((k, k, cin, f)))
        store.add(f"gen/enc{i}/b", Tensor4.zeros((1, 1, 1, f), dtype))
        if i > 0:
            store.add(f"gen/enc{i}/gamma", Tensor4.full((1, 1, 1, f), 1, dtype))
            store.add(f"gen/enc{i}/beta", Tensor4.zeros((1, 1, 1, f), dtype))
        cin = f

    for j, f in enumerate(spec.dec_filters):
        store.add(f"gen/dec{j}/w", normal((k, k, f, cin)))
        store.add(f"gen/dec{j}/b", Tensor4.zeros((1, 1, 1, f), dtype))
        store.add(f"gen/dec{j}/gamma", Tensor4.full((1, 1, 1, f), 1, dtype))
        store.add(f"gen/dec{j}/beta", Tensor4.zeros((1, 1, 1, f), dtype))
        cin = f + spec.enc_filters[spec.skip_source(j)]

    store.add("gen/out/w", normal((k, k, spec.out_channels, cin)))
    store.add("gen/out/b", Tensor4.zeros((1, 1, 1, spec.out_channels), dtype))
    return store


def generator_forward(spec: GeneratorSpec, store: ParamStore, x: Tensor4,
                      training: bool = False,
                      dropout_rng: np.random.Generator | None = None,
                      tape: Tape | None = None,
                      trace: list | None = None) -> Tensor4:
    """Run the U-Net. Output is strictly inside (-1, 1).

    ``dropout_rng`` is consumed in layer order and only when ``training``
    is true and the spec enables dropout.
    """
    spec.check_input(x)

    def log(name, t):
        if trace is not None:
            trace.append((name, t.dims))

    skips: list[Tensor4] = []
    h = x
    for i in range(len(spec.enc_filters)):
        h = ops.conv2d(h, store[f"gen/enc{i}/w"], store[f"gen/enc{i}/b"],
                       spec.stride, "same", tape)
        if i > 0:
            h = ops.batchnorm(h, store[f"gen/enc{i}/gamma"], store[f"gen/enc{i}/beta"],
                              spec.bn_epsilon, tape)
        h = ops.leaky_relu(h, spec.leaky_slope, tape)
        log(f"enc{i}", h)
        skips.append(h)

    for j in range(len(spec.dec_filters)):
        h = ops.conv2d_transpose(h, store[f"gen/dec{j}/w"], store[f"gen/dec{j}/b"],
                                 spec.stride, tape)
        h = ops.batchnorm(h, store[f"gen/dec{j}/gamma"], store[f"gen/dec{j}/beta"],
                          spec.bn_epsilon, tape)
        if training and j < spec.dropout_layers and spec.dropout_rate > 0:
            h = ops.dropout(h, spec.dropout_rate, dropout_rng, True, tape)
        h = ops.relu(h, tape)
        h = ops.concat_channels(h, skips[spec.skip_source(j)], tape)
        log(f"dec{j}", h)

    h = ops.conv2d_transpose(h, store["gen/out/w"], store["gen/out/b"],
                             spec.stride, tape)
    out = ops.tanh_act(h, tape)
    log("out", out)
    return out
