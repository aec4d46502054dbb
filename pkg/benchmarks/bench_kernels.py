"""Compiled versus pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 3]

Times one fast-marching solve on an ``n x n`` grid and one 5000-step ray
with tangent propagation, for each available backend, and checks that the
two backends agree.
"""
import argparse
import time

import numpy as np

from tunnelkit import kernels
from tunnelkit.potential import PotentialModel


def march_case(n):
    x = np.linspace(-2, 2, n)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    slow = np.sqrt(0.25 * (X1 ** 2 - 1) ** 2 + X2 ** 2 + 0.01)
    frozen = np.zeros((n, n), dtype=bool)
    frozen[n // 4, n // 2] = True
    return slow, 4.0 / (n - 1), np.where(frozen, 0.0, np.inf), frozen


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    model = PotentialModel.quartic_double_well()
    slow, d, vals, frozen = march_case(args.n)
    state = np.array([-0.7, 0.05, 0.0, 0.0])
    E = float(model.value(state[:2]))

    results = {}
    for b in backends:
        tm, fm = best_of(lambda: kernels.fast_march(slow, d, d, vals, frozen, backend=b),
                         args.repeat)
        tr, ray = best_of(lambda: kernels.integrate_ray(model, state, 1e-3, 5000, E=E,
                                                        tangent0=[0, 1, 0, 0], backend=b),
                          args.repeat)
        results[b] = (tm, tr, fm, ray[0])

    print(f"{'backend':<8} {'march ' + str(args.n) + '^2 [s]':>16} {'ray 5000 steps [s]':>20}")
    for b, (tm, tr, _, _) in results.items():
        print(f"{b:<8} {tm:>16.4f} {tr:>20.4f}")
    if "cython" in results:
        p, c = results["python"], results["cython"]
        print(f"speedup  {p[0] / c[0]:>16.1f} {p[1] / c[1]:>20.1f}")
        print(f"max |diff| march {np.max(np.abs(p[2] - c[2])):.2e}, ray {np.max(np.abs(p[3] - c[3])):.2e}")
    else:
        print("compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()
