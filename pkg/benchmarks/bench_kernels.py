"""Timing comparison of the compiled and numpy loss kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 2000,20000,200000] [--classes 10] [--repeat 20]
"""

import argparse
import time

import numpy as np

from driftcal._kernels import get_backends


def time_call(fn, *args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="2000,20000,200000")
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    backends = get_backends()
    print(f"backends: {', '.join(backends)}")
    rng = np.random.default_rng(0)
    for n in (int(s) for s in args.sizes.split(",")):
        z = np.ascontiguousarray(rng.normal(size=(n, args.classes)) * 3.0)
        y = np.ascontiguousarray(rng.integers(0, args.classes, n), dtype=np.int64)
        t = np.ascontiguousarray(0.5 + rng.random(n) * 2.5)
        for kernel in ("brier_loss_dtemp", "nll_loss_dtemp"):
            times = {
                name: time_call(getattr(mod, kernel), z, y, t, repeat=args.repeat)
                for name, mod in backends.items()
            }
            ref_loss = {name: getattr(mod, kernel)(z, y, t)[0] for name, mod in backends.items()}
            losses = list(ref_loss.values())
            agree = max(abs(a - losses[0]) for a in losses) <= 1e-9 * max(1.0, abs(losses[0]))
            row = "  ".join(f"{name}: {sec * 1e3:8.3f} ms" for name, sec in times.items())
            extra = ""
            if "cython" in times and "numpy" in times:
                extra = f"  speedup x{times['numpy'] / times['cython']:.2f}"
            print(f"n={n:>7} {kernel:<18} {row}{extra}  agree={agree}")


if __name__ == "__main__":
    main()
