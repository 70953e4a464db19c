"""Benchmark the dilated-convolution kernels: numba loops vs numpy BLAS.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Reports per-call wall time of forward and backward for representative
(feature_dim, T, dilation) shapes, plus the speedup of the numba path over
the numpy reference. Run with WSSEG_BACKEND=numpy to confirm the package
works without numba at all; this script always times both paths directly.
"""

import argparse
import time

import numpy as np

from wsseg.backend import HAS_NUMBA
from wsseg import kernels

SHAPES = [
    (16, 512, 4),
    (16, 2000, 16),
    (32, 2000, 8),
    (64, 2000, 32),
]


def timeit(fn, repeats):
    fn()  # warm (JIT compile and caches)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for f, t_len, dil in SHAPES:
        x = rng.standard_normal((f, t_len))
        w = rng.standard_normal((f, f, 3))
        b = rng.standard_normal(f)
        d_out = rng.standard_normal((f, t_len))
        entry = {"shape": f"F={f:<3} T={t_len:<5} dil={dil}"}
        entry["np_fwd"] = timeit(lambda: kernels.dilated_conv_forward_np(x, w, b, dil),
                                 args.repeats)
        entry["np_bwd"] = timeit(lambda: kernels.dilated_conv_backward_np(x, w, dil, d_out),
                                 args.repeats)
        if HAS_NUMBA:
            entry["nb_fwd"] = timeit(lambda: kernels.dilated_conv_forward_nb(x, w, b, dil),
                                     args.repeats)
            entry["nb_bwd"] = timeit(lambda: kernels.dilated_conv_backward_nb(x, w, dil, d_out),
                                     args.repeats)
            got = kernels.dilated_conv_forward_nb(x, w, b, dil)
            want = kernels.dilated_conv_forward_np(x, w, b, dil)
            assert np.allclose(got, want, atol=1e-10), "backends disagree"
        rows.append(entry)

    if not HAS_NUMBA:
        print("numba not installed: timing the numpy path only\n")
    header = f"{'shape':<24} {'numpy fwd':>10} {'numpy bwd':>10}"
    if HAS_NUMBA:
        header += f" {'numba fwd':>10} {'numba bwd':>10} {'fwd speedup':>12} {'bwd speedup':>12}"
    print(header)
    for entry in rows:
        line = (f"{entry['shape']:<24} {entry['np_fwd'] * 1e3:>8.3f}ms"
                f" {entry['np_bwd'] * 1e3:>8.3f}ms")
        if HAS_NUMBA:
            line += (f" {entry['nb_fwd'] * 1e3:>8.3f}ms {entry['nb_bwd'] * 1e3:>8.3f}ms"
                     f" {entry['np_fwd'] / entry['nb_fwd']:>11.2f}x"
                     f" {entry['np_bwd'] / entry['nb_bwd']:>11.2f}x")
        print(line)


if __name__ == "__main__":
    main()
