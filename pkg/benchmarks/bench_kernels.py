"""Benchmark the compiled kernels against the pure-NumPy fallback.

Runs each hot loop on fixture-sized problems and prints per-call timings and
speedups. Usage: python benchmarks/bench_kernels.py [--repeat R]
"""

import argparse
import time

import numpy as np

from dualsmooth._kernels import _pure

try:
    from dualsmooth._kernels import _fast
except ImportError:
    _fast = None


def _time(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    d, N, n = 3, 1000, 400
    A = np.array([[-2.0, 1.0, 1.0], [1.0, -2.0, 1.0], [1.0, 1.0, -2.0]])
    h = np.array([-1.0, 0.0, 1.0])
    z = np.concatenate([[0.0], np.cumsum(rng.standard_normal(N) * 0.03)])
    y0 = np.log(np.array([0.5, 0.25, 0.25]))
    yield "ctmc_pathwise_sweep (d=3, N=1000)", "ctmc_pathwise_sweep", (A, h, z, 1e-3, 1, y0)

    u = np.exp(0.05 * rng.standard_normal((N + 1, d, d)))
    um = np.exp(0.05 * rng.standard_normal((N, d, d)))
    pi0 = np.array([0.5, 0.25, 0.25])
    yield "ctmc_transport_sweep (d=3, N=1000)", "ctmc_transport_sweep", (A, u, um, pi0, 1e-3)

    lo = np.zeros(n)
    up = np.zeros(n)
    lo[1:] = rng.uniform(0.5, 1.0, n - 1)
    up[:-1] = rng.uniform(0.5, 1.0, n - 1)
    d0 = -(lo + up)
    hg = np.linspace(-1, 1, n)
    y0g = -np.linspace(-3, 3, n) ** 2
    yield "grid_pathwise_sweep (n=400, N=1000, 3 substeps)", "grid_pathwise_sweep", (
        lo, d0, up, hg, z, 1e-3, 3, y0g,
    )

    su = 0.2 * rng.standard_normal((N + 1, n))
    p0 = np.exp(-np.linspace(-3, 3, n) ** 2)
    dx = 12.0 / n
    p0 /= p0.sum() * dx
    yield "grid_transport_sweep (n=400, N=1000, 3 substeps)", "grid_transport_sweep", (
        lo, d0, up, su, p0, 1e-3, dx, 3,
    )

    R = 100
    dz = np.repeat(np.diff(z) / R, R)
    P = np.eye(d) + A * (1e-5) + 0.5 * (A @ A) * 1e-10
    nu0 = pi0
    yield "hmm_fine_sweep (d=3, 100k steps)", "hmm_fine_sweep", (P, h, dz, 1e-5, nu0)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    print(f"{'kernel':52s} {'pure':>10s} {'fast':>10s} {'speedup':>8s}")
    for label, name, fargs in cases():
        t_pure = _time(getattr(_pure, name), *fargs, repeat=args.repeat)
        if _fast is None:
            print(f"{label:52s} {t_pure * 1e3:9.2f}ms {'n/a':>10s} {'n/a':>8s}")
            continue
        t_fast = _time(getattr(_fast, name), *fargs, repeat=args.repeat)
        print(f"{label:52s} {t_pure * 1e3:9.2f}ms {t_fast * 1e3:9.2f}ms {t_pure / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
