"""Benchmark the compiled convolution core against the numpy fallback.

Run:  python3 benchmarks/bench_conv.py [--repeats N]

Shapes cover both scales that matter: the 32x32 toy-training layers and
the 256x256 full-resolution layers.
"""

import argparse
import time

import numpy as np

from map2sat.kernels import numpy_backend
from map2sat import kernels

CASES = [
    # (name, x shape, w shape, stride, padding-pads)
    ("toy enc 32->16", (1, 32, 32, 32), (4, 4, 32, 64), 2),
    ("toy disc deep 6x6", (1, 6, 6, 128), (4, 4, 128, 512), 1),
    ("full enc 256->128", (1, 256, 256, 3), (4, 4, 3, 64), 2),
    ("full enc 128->64", (1, 128, 128, 64), (4, 4, 64, 128), 2),
    ("full disc deep 34x34", (1, 34, 34, 256), (4, 4, 256, 512), 1),
]


def _pads(h, k, s):
    out = -(-h // s)
    total = max((out - 1) * s + k - h, 0)
    return total // 2, total - total // 2


def bench(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1000


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()

    if not kernels.have_compiled():
        print("compiled core not available; benchmarking numpy only")

    rng = np.random.default_rng(0)
    print(f"{'case':24s} {'kernel':10s} {'numpy ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, xs, ws, stride in CASES:
        x = rng.standard_normal(xs).astype(np.float32)
        w = rng.standard_normal(ws).astype(np.float32)
        b = rng.standard_normal((1, 1, 1, ws[3])).astype(np.float32)
        pt, pb = _pads(xs[1], ws[0], stride)
        pl, pr = _pads(xs[2], ws[1], stride)
        pads = (pt, pb, pl, pr)
        oh = (xs[1] + pt + pb - ws[0]) // stride + 1
        ow = (xs[2] + pl + pr - ws[1]) // stride + 1
        g = rng.standard_normal((xs[0], oh, ow, ws[3])).astype(np.float32)

        runs = {
            "forward": (
                lambda: numpy_backend.conv_forward(x, w, b, stride, pads),
                lambda: kernels._convcore.conv_forward_f32(x, w, b, stride, *pads),
            ),
            "dinput": (
                lambda: numpy_backend.conv_dinput(g, w, stride, pads, (xs[1], xs[2])),
                lambda: kernels._convcore.conv_dinput_f32(g, w, stride, *pads, xs[1], xs[2]),
            ),
            "dweight": (
                lambda: numpy_backend.conv_dweight(x, g, ws[0], ws[1], stride, pads),
                lambda: kernels._convcore.conv_dweight_f32(x, g, ws[0], ws[1], stride, *pads),
            ),
        }
        for kname, (np_fn, cy_fn) in runs.items():
            t_np = bench(np_fn, args.repeats)
            if kernels.have_compiled():
                t_cy = bench(cy_fn, args.repeats)
                print(f"{name:24s} {kname:10s} {t_np:10.2f} {t_cy:12.2f} {t_np/t_cy:7.1f}x")
            else:
                print(f"{name:24s} {kname:10s} {t_np:10.2f} {'-':>12s} {'-':>8s}")


if __name__ == "__main__":
    main()
