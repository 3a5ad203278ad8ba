#!/usr/bin/env python3
"""Distance-kernel benchmark: compiled extension vs the numpy fallback.

Times the three kernels behind k-means and the k-d forest (full-scan squared
distances, gathered-row distances, nearest-centroid assignment) on the same
inputs for every importable backend, after checking that the backends agree.

Usage:
  python3 benchmarks/bench_kernels.py --n 20000 --dim 128 --k 150
  python3 benchmarks/bench_kernels.py --fit        # also time kmeans_fit per backend
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from imgtriage import kernels


def best_of(fn, repeats: int) -> float:
    fn()  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def check_agreement(backends, points, query, rows, centroids) -> None:
    base = None
    for name, mod in backends.items():
        got = (
            mod.sqdist_all(points, query),
            mod.sqdist_gather(points, query, rows),
            mod.assign_points(points, centroids),
        )
        if base is None:
            base = got
            continue
        np.testing.assert_allclose(got[0], base[0], rtol=1e-10)
        np.testing.assert_allclose(got[1], base[1], rtol=1e-10)
        assert np.array_equal(got[2][0], base[2][0]), f"{name}: labels disagree"
        np.testing.assert_allclose(got[2][1], base[2][1], rtol=1e-10)


def bench_fit(n: int, dim: int, k: int, seed: int) -> None:
    # kmeans picks its backend at import, so each run goes through a child
    snippet = (
        "import time, numpy as np\n"
        "from imgtriage import kernels, kmeans\n"
        f"x = np.random.default_rng({seed}).standard_normal(({n}, {dim})).astype(np.float32)\n"
        "t0 = time.perf_counter()\n"
        f"model = kmeans.kmeans_fit(x, k={k}, seed=0)\n"
        "print(f'{kernels.BACKEND}: kmeans_fit {time.perf_counter() - t0:.3f}s "
        "({model.iterations_run} iterations, inertia {model.inertia:.6g})')\n"
    )
    for backend in kernels.available_backends():
        env = dict(os.environ, IMGTRIAGE_KERNELS=backend)
        subprocess.run([sys.executable, "-c", snippet], env=env, check=True)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=20_000, help="points")
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--k", type=int, default=150, help="centroids")
    parser.add_argument("--gather", type=int, default=2_000, help="gathered rows")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--fit", action="store_true", help="also time one kmeans_fit per backend"
    )
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    points = rng.standard_normal((args.n, args.dim)).astype(np.float32)
    query = rng.standard_normal(args.dim).astype(np.float32)
    rows = rng.permutation(args.n)[: args.gather].astype(np.int64)
    centroids = rng.standard_normal((args.k, args.dim)).astype(np.float32)

    backends = kernels.available_backends()
    print(f"n={args.n} dim={args.dim} k={args.k} gather={args.gather} "
          f"(best of {args.repeats}); active backend: {kernels.BACKEND}")
    if "cython" not in backends:
        print("note: compiled extension not importable, numpy only")
    check_agreement(backends, points, query, rows, centroids)

    header = f"{'backend':<8} {'sqdist_all':>12} {'sqdist_gather':>14} {'assign_points':>14}"
    print(header)
    results = {}
    for name, mod in backends.items():
        t_all = best_of(lambda: mod.sqdist_all(points, query), args.repeats)
        t_gather = best_of(lambda: mod.sqdist_gather(points, query, rows), args.repeats)
        t_assign = best_of(lambda: mod.assign_points(points, centroids), args.repeats)
        results[name] = (t_all, t_gather, t_assign)
        print(f"{name:<8} {t_all * 1e3:>10.3f}ms {t_gather * 1e3:>12.3f}ms "
              f"{t_assign * 1e3:>12.3f}ms")
    if len(results) == 2:
        ratio = [n / c for n, c in zip(results["numpy"], results["cython"])]
        print(f"{'numpy/cython':<8} {ratio[0]:>10.2f}x {ratio[1]:>12.2f}x {ratio[2]:>12.2f}x")
    print(
        "package binding: scan kernels from the active backend, assign_points "
        "always from the BLAS path (see imgtriage/kernels/__init__.py)"
    )

    if args.fit:
        sys.stdout.flush()  # keep child output after the table when piped
        bench_fit(args.n, args.dim, args.k, args.seed)


if __name__ == "__main__":
    main()
