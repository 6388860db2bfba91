"""Benchmark the numba kernels against the pure-numpy fallback.

Runs every kernel in ``torusjets._kernels`` on representative array sizes
under both backends and prints a timing table.  The numba backend is
warmed up once per kernel so compilation time is excluded.

Usage::

    python benchmarks/bench_kernels.py [--sizes 64,128] [--repeat 5]
"""

import argparse
import time

import numpy as np

from torusjets._kernels import get_kernels


def _inputs(name, n, rng):
    """Build arguments for kernel ``name`` on an n^3 sample grid."""
    shape = (n, n, n)
    if name in ("bump_window", "bump1d_psi", "bump1d_dpsi"):
        return (rng.uniform(-1.5, 1.5, shape), 2.0)
    if name in ("bump2d_phi", "bump2d_Phi"):
        return (rng.uniform(-1.5, 1.5, shape),
                rng.uniform(-1.5, 1.5, shape), 2.0)
    if name == "frobenius6":
        return tuple(rng.standard_normal(shape) for _ in range(6))
    raise ValueError(name)


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128",
                    help="comma-separated grid sizes (default 64,128)")
    ap.add_argument("--repeat", type=int, default=5,
                    help="timing repetitions, best-of (default 5)")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    numpy_k = get_kernels("numpy")
    try:
        numba_k = get_kernels("numba")
    except ImportError:
        numba_k = None
        print("numba not importable; timing the numpy backend only\n")

    rng = np.random.default_rng(0)
    hdr = "%-12s %6s %12s %12s %8s" % ("kernel", "n", "numpy [ms]",
                                       "numba [ms]", "speedup")
    print(hdr)
    print("-" * len(hdr))
    for name in sorted(numpy_k):
        for n in sizes:
            inp = _inputs(name, n, rng)
            t_np = _time(numpy_k[name], inp, args.repeat)
            if numba_k is None:
                print("%-12s %6d %12.3f %12s %8s"
                      % (name, n, 1e3 * t_np, "-", "-"))
                continue
            numba_k[name](*inp)  # warm up / compile
            t_nb = _time(numba_k[name], inp, args.repeat)
            err = np.max(np.abs(numpy_k[name](*inp) - numba_k[name](*inp)))
            assert err < 1e-12, "backend mismatch in %s: %g" % (name, err)
            print("%-12s %6d %12.3f %12.3f %7.2fx"
                  % (name, n, 1e3 * t_np, 1e3 * t_nb, t_np / t_nb))


if __name__ == "__main__":
    main()
