"""Time the hit-and-run inner loop: compiled kernel vs. pure-Python fallback.

    python benchmarks/bench_kernel.py --dims 2 4 6 8 --steps 20000
"""

import argparse
import time

import numpy as np

from nmsteer.hermitian import traceless_structure
from nmsteer.sampler import SHRINK, get_kernel


def time_kernel(kernel, dim, steps, seed, repeats):
    m = dim * dim - 1
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((steps, m))
    unif = rng.random(steps)
    struct = traceless_structure(dim)
    out = np.empty((0, m))
    best = np.inf
    for _ in range(repeats):
        c = np.zeros(m)
        t0 = time.perf_counter()
        kernel.advance(c, gauss, unif, 0, out, dim, *struct, SHRINK)
        best = min(best, time.perf_counter() - t0)
    return best / steps


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 4, 6, 8, 9])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = [get_kernel("python")]
    try:
        backends.insert(0, get_kernel("cython"))
    except ImportError:
        print("compiled kernel not built; timing the fallback only")
    print(f"{'D':>3} " + " ".join(f"{name + ' us/step':>18}" for _, name in backends) + f" {'speedup':>9}")
    for dim in args.dims:
        t = [time_kernel(k, dim, args.steps, args.seed, args.repeats) for k, _ in backends]
        speed = f"{t[-1] / t[0]:9.1f}" if len(t) > 1 else f"{'-':>9}"
        print(f"{dim:>3} " + " ".join(f"{x * 1e6:18.2f}" for x in t) + f" {speed}")


if __name__ == "__main__":
    main()
