#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Both backends are imported side by side, so no env flag is needed here;
at runtime the package itself selects via MATPIVOT_NO_NUMBA.
"""

import time

import numpy as np

from matpivot import _kernels_numba as knb
from matpivot import _kernels_numpy as knp
from matpivot.linalg import wedge_square_batch


def timeit(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_svd(d, count=100_000):
    rng = np.random.default_rng(0)
    stack = rng.standard_normal((count, d, d))
    knb.svd_values_batch(stack[:8])          # compile outside the clock
    t_nb = timeit(knb.svd_values_batch, stack)
    t_np = timeit(knp.svd_values_batch, stack)
    err = np.abs(knb.svd_values_batch(stack[:512])
                 - knp.svd_values_batch(stack[:512])).max()
    print(f"svd_values_batch d={d} n={count}: "
          f"numba {t_nb:.3f}s  numpy {t_np:.3f}s  "
          f"speedup x{t_np / t_nb:.1f}  max|diff|={err:.2e}")


def bench_trajectories(n_traj=64, n_steps=2000, d=2):
    rng = np.random.default_rng(1)
    atoms = np.array([[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]])
    idx = rng.integers(0, 2, size=(n_traj, n_steps))
    letters = atoms[idx]
    letlog = np.zeros((n_traj, n_steps))
    wl = wedge_square_batch(letters)
    wlog = np.zeros((n_traj, n_steps))
    x = np.array([1.0, 0.0])
    y = np.array([0.0, 1.0])
    snap = np.array([n_steps - 1])

    args = (letters, letlog, wl, wlog, x, y, x, x, snap, 1e-9)
    knb.simulate_batch(letters[:2, :64], letlog[:2, :64], wl[:2, :64],
                       wlog[:2, :64], x, y, x, x, snap * 0, 1e-9)
    t_nb = timeit(knb.simulate_batch, *args, repeat=2)
    t_np = timeit(knp.simulate_batch, *args, repeat=2)
    r_nb = knb.simulate_batch(*args)
    r_np = knp.simulate_batch(*args)
    err = np.abs(r_nb[0] - r_np[0]).max()
    print(f"simulate_batch T={n_traj} n={n_steps}: "
          f"numba {t_nb:.3f}s  numpy {t_np:.3f}s  "
          f"speedup x{t_np / t_nb:.1f}  max|dlogn|={err:.2e}")


if __name__ == "__main__":
    for d in (2, 3, 4, 8):
        bench_svd(d, count=50_000)
    bench_trajectories()
