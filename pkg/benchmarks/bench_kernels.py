"""Compare the numba and numpy paths of the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat N] [--quick]

Micro-benchmarks call both implementations directly (JIT warm-up excluded).
The end-to-end run integrates a stream surface through a sampled grid field
and optimises it, once per setting of STRAINSURF_NUMBA.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from strainsurf import kernels

END_TO_END = r"""
import time
import numpy as np
from strainsurf.field import GridField, catalogue
from strainsurf.curves import SeedCurve
from strainsurf.surface import integrate_surface
from strainsurf.optimize import OptimizerConfig, gauss_newton
g = GridField.sample(catalogue("abc"), (33, 33, 33))
t = np.linspace(0.0, 1.0, 60)[:, None]
seed = SeedCurve.from_points(np.hstack([0.4 + 1.2 * t, 0.9 + 0 * t, 1.0 + 0.3 * t]))
g.jacobians(seed.points[:2])  # load compiled kernels outside the timed region
t0 = time.perf_counter()
mesh = integrate_surface(g, g.domain, seed, None, 150, both_directions=True)
t1 = time.perf_counter()
gauss_newton(mesh, OptimizerConfig(max_inner_iters=3))
t2 = time.perf_counter()
print(f"{mesh.m}x{mesh.n} {t1 - t0:.3f} {t2 - t1:.3f}")
"""


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def micro(repeat: int, quick: bool) -> None:
    rng = np.random.default_rng(0)
    print("kernel            size      numba [ms]  numpy [ms]  ratio")
    samples = rng.normal(size=(33, 33, 33, 3))
    lo, hi = np.zeros(3), np.ones(3)
    loop, vec = kernels.KERNELS["trilinear"]
    for n in ([100, 10_000] if quick else [100, 10_000, 200_000]):
        P = rng.random((n, 3))
        loop(samples, lo, hi, P[:2], True)
        a = _time(lambda: loop(samples, lo, hi, P, True), repeat)
        b = _time(lambda: vec(samples, lo, hi, P, True), repeat)
        print(f"trilinear+jac  {n:>9d}  {1e3 * a:10.3f}  {1e3 * b:10.3f}  {b / a:5.1f}x")
    loop, vec = kernels.KERNELS["strain_residuals"]
    for m, n in ([(20, 20), (100, 100)] if quick else [(20, 20), (100, 100), (400, 400)]):
        Q = rng.normal(size=(m, n, 3))
        index = np.arange(m * n).reshape(m, n)
        loop(Q[:2, :2], index[:2, :2])
        a = _time(lambda: loop(Q, index), repeat)
        b = _time(lambda: vec(Q, index), repeat)
        print(f"strain resid.  {m * n:>9d}  {1e3 * a:10.3f}  {1e3 * b:10.3f}  {b / a:5.1f}x")


def end_to_end() -> None:
    print("\nend to end (grid-field surface + 3 Gauss-Newton steps), seconds")
    for flag in ("1", "0"):
        env = dict(os.environ, STRAINSURF_NUMBA=flag)
        # the first run fills the on-disk numba cache; report the second
        for _ in range(2):
            out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True,
                                 check=True).stdout.split()
        print(f"STRAINSURF_NUMBA={flag}: mesh {out[0]}, integrate {out[1]}, optimise {out[2]}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args()
    micro(args.repeat, args.quick)
    if not args.no_end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
