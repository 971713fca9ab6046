"""Benchmark the compiled kernels against the pure-numpy fallback.

Run as ``python -m antipgd.bench``. Times the two hot loops (widening-valley
recursion, linear-recursion Monte Carlo) on both backends with identical
noise, and reports the numerical agreement of the results (the backends
share the noise stream but associate reductions differently, so agreement
is to rounding error, not bitwise).
"""

from __future__ import annotations

import time

import numpy as np

from .kernels import load_backend
from .noise import NoiseSpec, NoiseStream


def _time(fn, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def bench_valley(backend, n_steps=100_000, d=100):
    spec = NoiseSpec(sigma=0.1, dim=d + 1, distribution="gaussian",
                     correlation="anticorrelated", seed=7)
    eps = NoiseStream(spec).next_perturbation_block(n_steps)  # shared, untimed
    u0 = np.full(d, np.sqrt(10.0 / d))

    def job():
        u = u0.copy()
        _, v_out, _ = backend.valley_block(u, 0.0, 0.025, eps, 1e12)
        return u, v_out

    return _time(job)


def bench_recursion(backend, n_steps=500, n_samples=2000, d=50):
    rng = np.random.Generator(np.random.Philox(key=9))
    xi = 0.1 * rng.standard_normal((n_steps, n_samples, d))  # shared, untimed
    rho = np.full((n_steps, n_samples), 0.9)

    def job():
        w = np.zeros((n_samples, d))
        xi_prev = np.zeros((n_samples, d))
        out_sum = np.empty(n_steps)
        out_sumsq = np.empty(n_steps)
        backend.recursion_block(w, xi_prev, rho, xi, True, out_sum, out_sumsq)
        return out_sum / n_samples

    return _time(job)


def main():
    backends = {}
    for name in ("compiled", "python"):
        try:
            backends[name] = load_backend(name)
        except (ImportError, ValueError):
            print(f"backend {name!r} unavailable, skipping")
    if not backends:
        return

    print(f"{'kernel':<22s} " + " ".join(f"{n:>12s}" for n in backends))
    results = {}
    for label, bench in (("valley_100k_steps", bench_valley), ("recursion_mc_500x2000", bench_recursion)):
        times = {}
        for name, mod in backends.items():
            seconds, out = bench(mod)
            times[name] = seconds
            results.setdefault(label, {})[name] = out
        row = " ".join(f"{times[n]*1e3:>10.1f}ms" for n in backends)
        print(f"{label:<22s} {row}")

    if len(backends) == 2:
        for label, outs in results.items():
            a, b = outs["compiled"], outs["python"]
            if isinstance(a, tuple):
                diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
            else:
                diff = float(np.max(np.abs(a - b)))
            print(f"{label}: max |compiled - python| = {diff:.3e}")


if __name__ == "__main__":
    main()
