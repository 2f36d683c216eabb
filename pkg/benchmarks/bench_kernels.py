"""Timing comparison of the convolution kernel backends.

Runs the 3x3 convolution forward and backward passes on autoencoder-sized
workloads with every available backend (compiled extension and the numpy
im2col fallback) and prints a table of per-call times plus the maximum
elementwise disagreement between backends.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from bandfuse.nn import kernels

CASES = [
    # (label, batch, in_channels, out_channels, height, width)
    ("encoder stage 1 (B=12 -> 64, 7x7)", 32, 12, 64, 7, 7),
    ("encoder stage 2 (64 -> 32, 3x3)", 32, 64, 32, 3, 3),
    ("decoder stage 2 (64 -> 12, 7x7)", 32, 64, 12, 7, 7),
    ("wide raster (8 -> 16, 32x32)", 4, 8, 16, 32, 32),
]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench(repeats: int) -> None:
    backends = kernels.available_backends()
    print(f"backends: {', '.join(sorted(backends))} (selected: {kernels.BACKEND})")
    header = f"{'case':38s} {'pass':8s}" + "".join(
        f" {name:>12s}" for name in sorted(backends)) + "  max diff"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for label, n, cin, cout, h, w in CASES:
        x = np.ascontiguousarray(rng.standard_normal((n, cin, h, w)))
        wgt = np.ascontiguousarray(rng.standard_normal((cout, cin, 3, 3)))
        b = np.ascontiguousarray(rng.standard_normal(cout))
        gout = np.ascontiguousarray(rng.standard_normal((n, cout, h, w)))

        fwd = {name: np.asarray(mod.conv3x3_forward(x, wgt, b))
               for name, mod in backends.items()}
        times = {name: _time(lambda m=mod: m.conv3x3_forward(x, wgt, b), repeats)
                 for name, mod in backends.items()}
        ref = fwd[sorted(backends)[0]]
        diff = max(float(np.abs(fwd[name] - ref).max()) for name in backends)
        row = f"{label:38s} {'forward':8s}" + "".join(
            f" {times[name] * 1e3:10.3f}ms" for name in sorted(backends))
        print(row + f"  {diff:.2e}")

        bwd = {name: mod.conv3x3_backward(x, wgt, gout)
               for name, mod in backends.items()}
        times = {name: _time(lambda m=mod: m.conv3x3_backward(x, wgt, gout), repeats)
                 for name, mod in backends.items()}
        ref_b = bwd[sorted(backends)[0]]
        diff = max(
            float(np.abs(np.asarray(got) - np.asarray(want)).max())
            for name in backends
            for got, want in zip(bwd[name], ref_b))
        row = f"{'':38s} {'backward':8s}" + "".join(
            f" {times[name] * 1e3:10.3f}ms" for name in sorted(backends))
        print(row + f"  {diff:.2e}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repetitions per case (best of N)")
    bench(parser.parse_args().repeats)


if __name__ == "__main__":
    main()
