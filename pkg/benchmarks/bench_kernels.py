"""Time the numba kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from mtnetkit import kernels as K
from mtnetkit._jit import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up (jit compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _value(r):
    return r[0] if isinstance(r, tuple) else r


def cases(rng):
    x = rng.standard_normal((16, 66, 66))
    k = rng.standard_normal((32, 16, 4, 4))
    a, b = rng.standard_normal((1024, 64)), rng.standard_normal((64, 256))
    img = rng.standard_normal((3, 150, 150))
    q, kk, v = (rng.standard_normal((1024, 16)) for _ in range(3))
    kz = rng.standard_normal((256, 16))
    return [
        ("conv2d 16x66x66 * 32x16x4x4 s2", lambda f: f(x, k, 1, 2), K.conv2d_numba, K.conv2d_numpy),
        ("matmul 1024x64 @ 64x256", lambda f: f(a, b), K.matmul_numba, K.matmul_numpy),
        ("resize 3x150x150 -> 256", lambda f: f(img, 256, 256), K.resize_bilinear_numba, K.resize_bilinear_numpy),
        ("attention self 1024x16", lambda f: f(q, kk, v, 0.25), K.attention_numba, K.attention_numpy),
        ("attention cross 1024x256", lambda f: f(q, kz, kz, 0.25), K.attention_numba, K.attention_numpy),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'numba ms':>10}{'numpy ms':>10}{'ratio':>8}  max|diff|")
    for name, call, f_nb, f_np in cases(rng):
        t_np = best_of(lambda: call(f_np), args.repeat)
        if not HAVE_NUMBA:
            print(f"{name:<34}{'-':>10}{t_np * 1e3:10.2f}")
            continue
        t_nb = best_of(lambda: call(f_nb), args.repeat)
        diff = np.max(np.abs(_value(call(f_nb)) - _value(call(f_np))))
        print(f"{name:<34}{t_nb * 1e3:10.2f}{t_np * 1e3:10.2f}{t_np / t_nb:8.2f}  {diff:.1e}")


if __name__ == "__main__":
    main()
