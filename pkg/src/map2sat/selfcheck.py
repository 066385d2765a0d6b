"""Built-in verification: finite-difference checks for every differentiable
op, end-to-end micro-network loss gradients, and the two full-resolution
shape traces. The CLI ``selfcheck`` command and the test suite both run
these."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .discriminator import DiscriminatorSpec, build_discriminator, discriminator_forward
from .fdcheck import max_rel_error, numeric_grad, numeric_grad_filtered
from .generator import GeneratorSpec, build_generator, generator_forward
from .losses import gan_bce, l1_loss
from .rng import Rng
from .tape import Tape, backward
from .tensor import ParamStore, Tensor4

OP_THRESHOLD = 1e-4
NETWORK_THRESHOLD = 1e-3

MICRO_GEN_SPEC = GeneratorSpec(
    enc_filters=(4, 8, 16), dec_filters=(8, 4), dropout_layers=1, dropout_rate=0.5)
MICRO_DISC_SPEC = DiscriminatorSpec(
    down_filters=(4,), extra_filters=6, deep_filters=8)


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.threshold


def op_gradient_error(forward: Callable, tensors: list[Tensor4], seed: int = 0) -> float:
    """Compare one op's backward against central differences.

    ``forward(tensors, tape)`` must record exactly one node whose inputs
    are ``tensors`` in order. The output is scalarized by a fixed random
    weighting so every output element contributes.
    """
    tape = Tape()
    out = forward(tensors, tape)
    r = np.random.default_rng(seed).standard_normal(out.dims)
    analytic = tape.nodes[-1].backward(r.astype(out.dtype))

    def f(arrays):
        o = forward([Tensor4(a) for a in arrays], None)
        return float((o.data.astype(np.float64) * r).sum())

    numeric = numeric_grad(f, [t.data for t in tensors])
    errs = [max_rel_error(a, n) for a, n in zip(analytic, numeric) if a is not None]
    return max(errs)


def _rand(dims, seed, lo=-1.0, hi=1.0, avoid_zero=0.0):
    g = np.random.default_rng(seed)
    a = g.uniform(lo, hi, dims)
    if avoid_zero:
        a = np.where(np.abs(a) < avoid_zero, avoid_zero * np.sign(a) + (a == 0) * avoid_zero, a)
    return Tensor4(a.astype(np.float64))


def check_op_gradients() -> list[CheckResult]:
    """Finite-difference check for every differentiable op, in float64."""
    results = []

    def run(name, forward, tensors, seed=0):
        results.append(CheckResult(name, op_gradient_error(forward, tensors, seed), OP_THRESHOLD))

    run("conv2d(s1,same)",
        lambda ts, tape: ops.conv2d(ts[0], ts[1], ts[2], 1, "same", tape),
        [_rand((1, 5, 5, 2), 1), _rand((3, 3, 2, 2), 2), _rand((1, 1, 1, 2), 3)])
    run("conv2d(s2,same)",
        lambda ts, tape: ops.conv2d(ts[0], ts[1], ts[2], 2, "same", tape),
        [_rand((1, 6, 6, 3), 4), _rand((4, 4, 3, 2), 5), _rand((1, 1, 1, 2), 6)])
    run("conv2d(s2,valid)",
        lambda ts, tape: ops.conv2d(ts[0], ts[1], None, 2, "valid", tape),
        [_rand((2, 6, 6, 2), 7), _rand((4, 4, 2, 3), 8)])
    run("conv2d_transpose",
        lambda ts, tape: ops.conv2d_transpose(ts[0], ts[1], ts[2], 2, tape),
        [_rand((1, 3, 3, 2), 9), _rand((4, 4, 3, 2), 10), _rand((1, 1, 1, 3), 11)])
    run("batchnorm",
        lambda ts, tape: ops.batchnorm(ts[0], ts[1], ts[2], 1e-5, tape),
        [_rand((2, 4, 4, 3), 12), _rand((1, 1, 1, 3), 13, 0.5, 1.5),
         _rand((1, 1, 1, 3), 14)])
    run("leaky_relu",
        lambda ts, tape: ops.leaky_relu(ts[0], 0.2, tape),
        [_rand((2, 4, 4, 3), 15, avoid_zero=0.05)])
    run("relu",
        lambda ts, tape: ops.relu(ts[0], tape),
        [_rand((2, 4, 4, 3), 16, avoid_zero=0.05)])
    run("tanh",
        lambda ts, tape: ops.tanh_act(ts[0], tape),
        [_rand((2, 4, 4, 3), 17, -2, 2)])
    run("sigmoid",
        lambda ts, tape: ops.sigmoid(ts[0], tape),
        [_rand((2, 4, 4, 3), 18, -3, 3)])
    run("dropout",
        lambda ts, tape: ops.dropout(ts[0], 0.3, Rng(5).stream("test"), True, tape),
        [_rand((2, 4, 4, 3), 19)])
    run("concat_channels",
        lambda ts, tape: ops.concat_channels(ts[0], ts[1], tape),
        [_rand((1, 3, 3, 2), 20), _rand((1, 3, 3, 3), 21)])
    run("zero_pad",
        lambda ts, tape: ops.zero_pad(ts[0], tape),
        [_rand((1, 3, 3, 2), 22)])
    run("add",
        lambda ts, tape: ops.add(ts[0], ts[1], tape),
        [_rand((1, 2, 2, 2), 23), _rand((1, 2, 2, 2), 24)])
    run("scale",
        lambda ts, tape: ops.scale(ts[0], 2.5, tape),
        [_rand((1, 2, 2, 2), 25)])
    run("gan_bce(real)",
        lambda ts, tape: gan_bce(ts[0], True, tape),
        [_rand((1, 3, 3, 1), 26, -4, 4)])
    run("gan_bce(fake)",
        lambda ts, tape: gan_bce(ts[0], False, tape),
        [_rand((1, 3, 3, 1), 27, -4, 4)])
    run("l1_loss",
        lambda ts, tape: l1_loss(ts[0], ts[1], tape),
        [_rand((1, 3, 3, 2), 28), _rand((1, 3, 3, 2), 29)])
    return results


def _micro_setup(seed: int = 11):
    rng = Rng(seed)
    gen = build_generator(MICRO_GEN_SPEC, rng, dtype=np.float64)
    disc = build_discriminator(MICRO_DISC_SPEC, rng, dtype=np.float64)
    # Freshly built nets sit exactly on relu kinks (zero biases and betas,
    # zero bottleneck); jitter every parameter so the check samples a
    # generic point away from non-differentiabilities.
    jitter = np.random.default_rng(seed)
    for _, p in list(gen.items()) + list(disc.items()):
        p.data = p.data + jitter.uniform(-0.15, 0.15, p.dims)
    s = MICRO_GEN_SPEC.input_size
    x = _rand((1, s, s, 3), 30)
    y = _rand((1, s, s, 3), 31)
    return gen, disc, x, y


def _store_loss_error(store: ParamStore,
                      loss_fn: Callable[[Tape | None], Tensor4]) -> tuple[float, float]:
    """FD-check a composite loss with respect to every parameter in ``store``.

    Uses the kink-filtered oracle: elements whose perturbation crosses a
    relu/|.| non-differentiability carry no derivative information at this
    step size and are excluded. Returns (max rel error, valid fraction).
    """
    names = store.names()
    originals = {n: store[n].data for n in names}

    tape = Tape()
    loss = loss_fn(tape)
    store.zero_grads()
    backward(tape, loss)
    analytic = {n: store[n].grad.copy() for n in names}

    def f(arrays):
        for n, a in zip(names, arrays):
            store[n].data = a
        val = loss_fn(None).item()
        return val

    numeric, valid = numeric_grad_filtered(f, [originals[n] for n in names])
    for n in names:
        store[n].data = originals[n]
    err = max(max_rel_error(analytic[n], g, valid=v)
              for n, g, v in zip(names, numeric, valid))
    total = sum(v.size for v in valid)
    frac = sum(int(v.sum()) for v in valid) / total
    return err, frac


def check_network_gradients(lambda_l1: float = 100.0) -> list[CheckResult]:
    """End-to-end loss gradients of micro generator and discriminator."""
    gen, disc, x, y = _micro_setup()

    def gen_loss(tape):
        g = generator_forward(MICRO_GEN_SPEC, gen, x, training=True,
                              dropout_rng=Rng(3).stream("dropout"), tape=tape)
        logits = discriminator_forward(MICRO_DISC_SPEC, disc, x, g, tape=tape)
        return ops.add(gan_bce(logits, True, tape),
                       ops.scale(l1_loss(y, g, tape), lambda_l1, tape), tape)

    fake = generator_forward(MICRO_GEN_SPEC, gen, x, training=False)

    def disc_loss(tape):
        real_logits = discriminator_forward(MICRO_DISC_SPEC, disc, x, y, tape=tape)
        fake_logits = discriminator_forward(MICRO_DISC_SPEC, disc, x, fake, tape=tape)
        return ops.add(gan_bce(real_logits, True, tape),
                       gan_bce(fake_logits, False, tape), tape)

    results = []
    for name, store, fn in [("generator loss (micro)", gen, gen_loss),
                            ("discriminator loss (micro)", disc, disc_loss)]:
        err, frac = _store_loss_error(store, fn)
        # a vacuously small valid set would make the check meaningless
        if frac < 0.5:
            err = float("inf")
        results.append(CheckResult(f"{name} [{frac:.0%} of elements smooth]",
                                   err, NETWORK_THRESHOLD))
    return results


def generator_shape_trace(spec: GeneratorSpec | None = None, seed: int = 0):
    """(layer, dims) sequence of a forward pass with random weights."""
    spec = spec or GeneratorSpec()
    store = build_generator(spec, Rng(seed))
    s = spec.input_size
    x = Tensor4(np.random.default_rng(seed).uniform(-1, 1, (1, s, s, spec.in_channels))
                .astype(np.float32))
    trace: list = [("input", x.dims)]
    generator_forward(spec, store, x, trace=trace)
    return trace


def discriminator_shape_trace(spec: DiscriminatorSpec | None = None, seed: int = 0,
                              extent: int = 256):
    spec = spec or DiscriminatorSpec()
    store = build_discriminator(spec, Rng(seed))
    g = np.random.default_rng(seed)
    x = Tensor4(g.uniform(-1, 1, (1, extent, extent, spec.in_channels)).astype(np.float32))
    y = Tensor4(g.uniform(-1, 1, (1, extent, extent, spec.in_channels)).astype(np.float32))
    trace: list = [("input", x.dims)]
    discriminator_forward(spec, store, x, y, trace=trace)
    return trace
