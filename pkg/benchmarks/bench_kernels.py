"""Time the numba loop kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel: best wall time of each variant and the speed-up.
The numba variant is called once beforehand so compilation is not timed.
"""

import argparse
import math
import time

import numpy as np

from spde_moments import kernels
from spde_moments._jit import NUMBA_ENABLED


def _cases(rng):
    m, n, steps = 512, 3, 1000
    lam = -np.array([0.0, 1.0, 1.0])
    noise = np.array([[0.0], [1.0], [1.0]])
    h_w = np.array([2 * math.pi, math.pi, math.pi])
    u0 = np.tile([0.0, 1.0, 0.0], (m, 1))
    dW = rng.normal(0.0, math.sqrt(1e-3), (m, steps, 1))
    u = rng.normal(size=(2048, 128))
    x = rng.exponential(size=10 ** 6)
    y = rng.exponential(size=10 ** 6)
    return {
        "diag_em": (lam, noise, h_w, h_w, u0, dW, 1e-3, 1, 2.0, True, 0.0),
        "burgers_skew": (u,),
        "plap_flux": (u, 1.0 / 129, 3.0),
        "plap_margin": (x, y, 3.0, 16.0 / 9.0),
    }


def best_of(fn, args, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not NUMBA_ENABLED:
        print("numba disabled (SPDE_MOMENTS_DISABLE_NUMBA set): loop variants run interpreted")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<14}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for name, (loop, vec) in kernels.IMPLEMENTATIONS.items():
        a = cases[name]
        if NUMBA_ENABLED:
            loop(*a)
            t_loop = best_of(loop, a, args.repeat)
        else:
            t_loop = math.nan
        t_vec = best_of(vec, a, args.repeat)
        print(f"{name:<14}{t_loop:>12.4f}{t_vec:>12.4f}{t_vec / t_loop:>10.1f}")


if __name__ == "__main__":
    main()
