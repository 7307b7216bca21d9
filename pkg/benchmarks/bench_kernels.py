"""Timing comparison of the compiled kernels against their numpy twins.

Run as a script:

    python benchmarks/bench_kernels.py [--repeats N]

Times the occupancy-fold kernel (the hot path of every planar quench)
and the occupation-basis hopping assembly at a few realistic sizes,
printing a table of best-of-N wall times per backend. The first numba
call in each configuration is excluded from timing (compilation).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from symbreak import _kernels, engine


def best_of(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def fold_case(n_t: int, n_orb: int, seed: int):
    rng = np.random.default_rng(seed)
    shape = (n_t, n_orb)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    b = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    s = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    scale = np.sqrt(
        np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(s) ** 2 + rng.uniform(0.1, 1.0, shape)
    )
    a, b, s = a / scale, b / scale, s / scale
    p = 1.0 - np.abs(a) ** 2 - np.abs(b) ** 2
    return a, b, s, p


def hopping_case(n_sites: int, n_particles: int, seed: int):
    rng = np.random.default_rng(seed)
    mat = rng.normal(size=(n_sites, n_sites))
    mat = mat + mat.T
    basis = engine.FockBasis.build(n_sites, n_particles)
    return mat, basis.states, n_sites


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()

    rows = []
    for n_t, n_orb in ((1000, 32), (4001, 50)):
        a, b, s, p = fold_case(n_t, n_orb, seed=1)
        timings = {}
        for backend in ("numpy", "numba"):
            _kernels.fold_occupancy_amplitudes(a, b, s, p, backend=backend)
            timings[backend] = best_of(
                lambda be=backend: _kernels.fold_occupancy_amplitudes(
                    a, b, s, p, backend=be
                ),
                args.repeats,
            )
        rows.append((f"fold {n_t} x {n_orb}", timings))

    for n_sites, n_particles in ((12, 3), (14, 4)):
        mat, states, n = hopping_case(n_sites, n_particles, seed=2)
        timings = {}
        for backend in ("numpy", "numba"):
            _kernels.fock_hopping_matrix(mat, states, n, backend=backend)
            timings[backend] = best_of(
                lambda be=backend: _kernels.fock_hopping_matrix(
                    mat, states, n, backend=be
                ),
                args.repeats,
            )
        dim = states.size
        rows.append((f"hopping C({n_sites},{n_particles})={dim}", timings))

    print(f"active backend: {_kernels.active_backend()}")
    print(f"{'case':<28} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for name, timings in rows:
        ratio = timings["numpy"] / timings["numba"]
        print(
            f"{name:<28} {timings['numpy'] * 1e3:>12.2f} "
            f"{timings['numba'] * 1e3:>12.2f} {ratio:>8.1f}x"
        )


if __name__ == "__main__":
    main()
