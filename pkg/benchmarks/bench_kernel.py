"""Time the compiled frame loop against the pure-Python fallback.

    python3 benchmarks/bench_kernel.py [--frames N] [--repeat R]

Both backends run the same pre-drawn arrivals and gains, so the timings
cover the battery recursion only.  The script also checks that the two
backends agree bit for bit.
"""
import argparse
import time

import numpy as np

from ehbattery import kernels
from ehbattery.core import ExponentialArrivals, ExponentialFading, RngHandle


def run(fn, u, h, kind, level):
    thr = np.linspace(2000.0, 10_000.0, 9)
    state = np.array([15_000.0])
    sums = np.zeros(len(kernels.SUM_FIELDS))
    counts = np.zeros(len(kernels.COUNT_FIELDS), dtype=np.int64)
    exceed = np.zeros(thr.size, dtype=np.int64)
    entries = np.zeros(thr.size, dtype=np.int64)
    inside = np.zeros(thr.size, dtype=np.uint8)
    t0 = time.perf_counter()
    fn(u, h, kind, level, 100.0, 1.0, 15_000.0, 0.85, 0.80, thr, False, True,
       state, sums, counts, exceed, entries, inside)
    return time.perf_counter() - t0, (state, sums, counts, exceed, entries)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    u = ExponentialArrivals(0.01).sample(RngHandle(1, 0), args.frames)
    h = ExponentialFading().sample(RngHandle(1, 1), args.frames)
    backends = {"python": kernels.python_advance}
    if kernels.compiled_advance is not None:
        backends["cython"] = kernels.compiled_advance
    else:
        print("compiled kernel not built; timing the fallback only")

    print(f"frames={args.frames} repeat={args.repeat} default backend={kernels.BACKEND}")
    print(f"{'policy':<14}{'backend':<9}{'best s':>10}{'Mframes/s':>12}")
    for name, kind, level in (("constant", 0, 84.6995), ("waterfilling", 1, 0.45119)):
        best, outputs = {}, {}
        for b, fn in backends.items():
            times = []
            for _ in range(args.repeat):
                dt, out = run(fn, u, h, kind, level)
                times.append(dt)
            best[b], outputs[b] = min(times), out
            print(f"{name:<14}{b:<9}{best[b]:>10.3f}{args.frames / best[b] / 1e6:>12.2f}")
        if len(best) == 2:
            same = all(np.array_equal(a, c) for a, c in zip(outputs["python"], outputs["cython"]))
            print(f"{'':<14}speedup {best['python'] / best['cython']:.1f}x, identical={same}")


if __name__ == "__main__":
    main()
