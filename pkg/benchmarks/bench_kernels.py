"""Benchmark the numba kernels against their pure-numpy twins.

Runs each hot kernel on representative shapes under both backends, checks
the outputs agree bit for bit, and prints a timing table.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from senscov import backend, kernels


def timed(fn, *args, repeats=5):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_case(name, fn, args, repeats):
    results = {}
    times = {}
    for be in ("numba", "numpy"):
        backend.set_backend(be)
        try:
            if be == "numba":
                fn(*args)  # JIT warm-up outside the timer
            results[be], times[be] = timed(fn, *args, repeats=repeats)
        finally:
            backend.set_backend(None)
    a, b = results["numba"], results["numpy"]
    if isinstance(a, tuple):
        identical = all(np.array_equal(x, y) for x, y in zip(a, b))
    else:
        identical = np.array_equal(a, b)
    speedup = times["numpy"] / times["numba"]
    print(f"{name:<24} numba {times['numba']*1e3:9.3f} ms   "
          f"numpy {times['numpy']*1e3:9.3f} ms   "
          f"speedup {speedup:7.1f}x   bit-identical: {identical}")
    return identical


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not backend._numba_available():
        print("numba not installed; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 28, 28))
    kern = rng.normal(size=(8, 4, 5, 5))
    bias = rng.normal(size=8)
    g_out = rng.normal(size=(8, 24, 24))

    pool_in = rng.normal(size=(8, 24, 24))
    _, pool_idx = kernels.maxpool2x2_forward_np(pool_in)
    pool_g = rng.normal(size=(8, 12, 12))

    z = rng.normal(size=(1500, 2))
    logu = np.log1p(-rng.random(1500))
    chain_args = (5000.0, 260.0, 1430.0, 1000, 500, 0.3, 0.052, -1.6,
                  100.0, 100.0, 0.004, 0.024, z, logu)

    print(f"repeats per case: {args.repeats} (best-of)")
    ok = True
    ok &= bench_case("conv2d forward", kernels.conv2d_forward,
                     (x, kern, bias, 1), args.repeats)
    ok &= bench_case("conv2d input grad", kernels.conv2d_input_grad,
                     (g_out, kern, x.shape, 1), args.repeats)
    ok &= bench_case("conv2d param grad", kernels.conv2d_param_grad,
                     (x, g_out, kern.shape, 1), args.repeats)
    ok &= bench_case("maxpool forward", kernels.maxpool2x2_forward,
                     (pool_in,), args.repeats)
    ok &= bench_case("maxpool backward", kernels.maxpool2x2_backward,
                     (pool_g, pool_idx, pool_in.shape), args.repeats)
    ok &= bench_case("metropolis chain", kernels.mh_chain,
                     chain_args, args.repeats)
    if not ok:
        print("BACKEND MISMATCH: outputs differ between numba and numpy paths")
        return 1
    print("all kernels agree across backends")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
