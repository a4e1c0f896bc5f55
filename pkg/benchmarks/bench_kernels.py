"""Time the numba and numpy variants of each hot kernel, plus one full solve.

Run:  python3 benchmarks/bench_kernels.py
The full-solve timing uses whichever backend ``QDTOMO_DISABLE_NUMBA`` selects.
"""

import time
import warnings

import numpy as np

from qdtomo import kernels
from qdtomo.models import TMD_REFLECTIVITIES, bin_probabilities


def best_of(fn, *args, repeat=5, number=20):
    fn(*args)  # warm up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        times.append((time.perf_counter() - t0) / number)
    return min(times)


def main():
    rng = np.random.default_rng(0)
    cases = {
        "project_simplex_rows (61x9)": (rng.normal(size=(61, 9)),),
        "project_simplex_rows (2000x9)": (rng.normal(size=(2000, 9)),),
        "subset_power_sums (B=8, q<=200)": (bin_probabilities(TMD_REFLECTIVITIES), 200),
        "scaled_laguerre_series (k<=60, 10^4 pts)": (rng.uniform(size=61), np.linspace(0, 40, 10_000)),
    }
    pairs = {
        "project_simplex_rows": (kernels.project_simplex_rows_numba, kernels.project_simplex_rows_numpy),
        "subset_power_sums": (kernels.subset_power_sums_numba, kernels.subset_power_sums_numpy),
        "scaled_laguerre_series": (kernels.scaled_laguerre_series_numba, kernels.scaled_laguerre_series_numpy),
    }
    has_numba = hasattr(kernels.project_simplex_rows_numba, "py_func")
    print(f"active backend: {kernels.BACKEND}; numba available: {has_numba}")
    print(f"{'kernel':45s} {'numba [us]':>12s} {'numpy [us]':>12s} {'speedup':>8s}")
    for label, args in cases.items():
        nb, npy = pairs[label.split(" ")[0]]
        t_nb = best_of(nb, *args) if has_numba else float("nan")
        t_np = best_of(npy, *args)
        print(f"{label:45s} {t_nb * 1e6:12.1f} {t_np * 1e6:12.1f} {t_np / t_nb:8.2f}")

    from qdtomo import ExperimentConfig, Objective, build_probe_matrix, default_tmd_grid, simulate_counts, solve

    grid = default_tmd_grid(38084)
    data = simulate_counts(ExperimentConfig("tmd", grid, seed=1))
    obj = Objective(build_probe_matrix(grid, 60), data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        solve(obj)
        t0 = time.perf_counter()
        rep = solve(obj)
    print(f"full TMD solve (M=60, D=50, N=9): {time.perf_counter() - t0:.3f} s, "
          f"{rep.iterations} iterations, backend {kernels.BACKEND}")


if __name__ == "__main__":
    main()
