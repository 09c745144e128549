"""Time each kernel under numba and numpy.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints microseconds per call for both variants and the speed-up.  The first
numba call is excluded (it compiles or loads the on-disk cache).
"""
import argparse
import timeit

import numpy as np

from irsnoma import kernels
from irsnoma.world import paper_world


def cases(rng):
    psi = rng.normal(size=(3, 30)) + 1j * rng.normal(size=(3, 30))
    hbar = rng.normal(size=3) + 1j * rng.normal(size=3)
    u = np.exp(1j * rng.uniform(0, 2 * np.pi, 30))
    gains = rng.uniform(size=3)
    powers = rng.uniform(size=3)
    order = np.argsort(np.argsort(gains)) + 1
    Q = rng.normal(size=(64, 5 * 3 + 4 * 10 + 4))
    starts = np.r_[0, np.cumsum([5] * 3 + [4] * 10 + [4])]
    mask = np.ones(Q.shape, dtype=bool)
    lo, hi = paper_world().box_arrays
    a, b = np.array([0.5, 0.5, 0.0]), np.array([7.5, 5.5, 2.0])
    return {
        "effective_gains (N=3, K=30)": ("effective_gains", (psi, hbar, u)),
        "noma_sinr (N=3)": ("noma_sinr", (gains, powers, order, 1e-11)),
        "phase_search (K=6, 4 levels)": ("phase_search", (psi[0, :6], hbar[0], 4)),
        "segment_argmax (64 x 59)": ("segment_argmax", (Q, starts, mask)),
        "segment_hits_boxes (6 boxes)": ("segment_hits_boxes", (a, b, lo, hi)),
        "blocked_cells (80 x 60)": ("blocked_cells", (80, 60, 0.1, lo, hi)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<32}{'numba us':>12}{'numpy us':>12}{'speed-up':>10}")
    for label, (name, a) in cases(rng).items():
        f_nb = getattr(kernels, name + "_nb")
        f_np = getattr(kernels, name + "_np")
        f_nb(*a)
        times = []
        for f in (f_nb, f_np):
            t = timeit.Timer(lambda: f(*a))
            n, _ = t.autorange()
            times.append(min(t.repeat(args.repeat, n)) / n * 1e6)
        print(f"{label:<32}{times[0]:>12.2f}{times[1]:>12.2f}{times[1] / times[0]:>9.1f}x")


if __name__ == "__main__":
    main()
