"""Compare the numba kernels with their pure-numpy fallbacks.

Times greedy thinning, Cox-de Boor evaluation and a full advancing-front
node generation with each path, checks that both give identical output,
and prints one line per kernel.

    python3 benchmarks/bench_numba.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mfquad._accel import HAVE_NUMBA, use_numba
from mfquad.geometry import make_builtin
from mfquad.kernels import bspline_basis, thin
from mfquad.nodegen import advancing_front


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if hasattr(a, "Y"):
        return np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z)
    return np.array_equal(a, b)


def cases():
    rng = np.random.default_rng(0)
    pts = rng.random((20000, 2))
    knots = np.concatenate([np.zeros(3), np.linspace(0, 1, 41), np.ones(3)])
    t = rng.random(200000)
    ellipse = make_builtin("ellipse")
    return {
        "thin 20k points (2D)": lambda: thin(pts, 0.01),
        "B-spline basis q=4, 200k sites": lambda: bspline_basis(knots, 4, t),
        "advancing front, ellipse h=0.02": lambda: advancing_front(ellipse, 0.02, 1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"{'kernel':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}  same")
    for name, fn in cases().items():
        use_numba(True)
        fn()  # compile outside the timing
        t_nb, out_nb = _best(fn, args.repeat)
        use_numba(False)
        t_np, out_np = _best(fn, args.repeat)
        use_numba(True)
        print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {_same(out_nb, out_np)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
