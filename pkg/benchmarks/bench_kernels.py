"""Time the compiled and numpy kernels on identical inputs.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``. Also times one
end-to-end reduced-distance solve per backend by switching the module-level
kernel functions.
"""
import argparse
import timeit

import numpy as np

from lgeom import kernels
from lgeom.geometry import ClosedFormFlow, RoundCylinder
from lgeom.lgeometry import reduced_distance


def inputs(K, d=3, seed=0):
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 2.0, K + 1)
    X = rng.normal(size=(K + 1, d))
    a = rng.uniform(0.5, 2.0, size=(K, d))
    da = rng.normal(size=(K, d, d)) * 0.1
    R = rng.uniform(0, 1, K)
    dR = rng.normal(size=(K, d)) * 0.1
    return s, X, a, da, R, dR


def bench(fn, repeat):
    t = timeit.Timer(fn)
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def solve_once():
    geo = RoundCylinder(3)
    flow = ClosedFormFlow(geo, 4.0)
    reduced_distance(flow, geo.point(), geo.point(1.0, 0.7), 1.0, segments=128, restarts=2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = sorted(kernels.BACKENDS)
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(names)}")
    print(f"{'kernel':<22}{'K':>6}" + "".join(f"{n:>14}" for n in names) + f"{'speedup':>10}")
    for K in (32, 128, 512):
        s, X, a, da, R, dR = inputs(K)
        g = np.ones_like(X)
        for label, call in (
            ("lagrangian", lambda m: m.lagrangian(s, X, a, da, R, dR)),
            ("newton_direction", lambda m: m.newton_direction(s, a, g)),
        ):
            times = {n: bench(lambda m=kernels.BACKENDS[n]: call(m), args.repeat) for n in names}
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{label:<22}{K:>6}" + "".join(f"{times[n] * 1e6:>12.1f}us" for n in names) + f"{speed:>9.2f}x")

    saved = kernels.lagrangian, kernels.newton_direction
    try:
        times = {}
        for n in names:
            impl = kernels.BACKENDS[n]
            kernels.lagrangian, kernels.newton_direction = impl.lagrangian, impl.newton_direction
            times[n] = bench(solve_once, args.repeat)
    finally:
        kernels.lagrangian, kernels.newton_direction = saved
    print("reduced_distance solve " + "  ".join(f"{n}: {times[n] * 1e3:.2f} ms" for n in names))


if __name__ == "__main__":
    main()
