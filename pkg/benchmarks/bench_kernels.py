"""Timing comparison of the numba kernels against the pure-numpy fallbacks.

Runs each kernel in-process with the active backend and re-runs itself in a
subprocess with KRMAP_NO_NUMBA=1 to time the fallback, then prints a table.

Usage: python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, *args, repeat: int = 5) -> float:
    fn(*args)  # warm up (jit compile on the numba path)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_suite() -> dict:
    from krmap import kernels
    from krmap.problems import CsirModel, csir_true_parameters

    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, 200_000)
    xh = rng.standard_normal(200_000)
    xl = rng.exponential(size=200_000)

    model = CsirModel(2)
    theta = np.tile(csir_true_parameters(2), (50, 1))
    theta += rng.uniform(0.0, 0.5, theta.shape)

    def csir_batch():
        for row in theta:
            kernels.csir_integrate(row, 2, model.obs_times, 1e-6, 1e-6)

    results = {
        "backend": "numpy" if os.environ.get("KRMAP_NO_NUMBA") else "numba",
        "legendre_recurrence_200k_deg30":
            _time(kernels.legendre_eval, x, 30),
        "chebyshev2_recurrence_200k_deg30":
            _time(kernels.chebyshev2_rec, x, 30),
        "hermite_recurrence_200k_deg30":
            _time(kernels.hermite_eval, xh, 30),
        "laguerre_recurrence_200k_deg30":
            _time(kernels.laguerre_eval, xl, 30),
        "csir_k2_integrate_50_params":
            _time(csir_batch),
    }
    return results


def main() -> None:
    here = run_suite()
    env = dict(os.environ, KRMAP_NO_NUMBA="1")
    if here["backend"] == "numpy":
        other = None
    else:
        proc = subprocess.run([sys.executable, __file__, "--json"], env=env,
                              capture_output=True, text=True, check=True)
        other = json.loads(proc.stdout)

    print(f"{'kernel':42s} {'numba (s)':>12s} {'numpy (s)':>12s} {'speedup':>9s}")
    for key, t_numba in here.items():
        if key == "backend":
            continue
        if other is None:
            print(f"{key:42s} {'-':>12s} {t_numba:12.5f} {'-':>9s}")
        else:
            t_numpy = other[key]
            print(f"{key:42s} {t_numba:12.5f} {t_numpy:12.5f} "
                  f"{t_numpy / t_numba:8.1f}x")


if __name__ == "__main__":
    if "--json" in sys.argv:
        print(json.dumps(run_suite()))
    else:
        main()
