"""Time the compiled and pure-Python kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import timeit

import numpy as np

from ldpfactor import kernels


def _cases(rng):
    for m, n in ((64, 16), (256, 64), (512, 128)):
        eps = 1.0
        z = np.full(m, (1 + np.exp(-eps)) / (2 * m))
        R = rng.uniform(0, 2.0 / m, (m, n))
        yield f"project_columns m={m} n={n}", "project_columns", (R, z, eps)
    for N in (10_000, 100_000):
        Q = rng.dirichlet(np.ones(64), size=16).T
        cdf = np.cumsum(Q, axis=0)
        types = rng.integers(0, 16, N)
        u = rng.random(N)
        yield f"sample_per_user N={N} m=64", "sample_per_user", (cdf, types, u)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    backends = kernels.backends()
    print(f"backends: {', '.join(backends)} (active: {kernels.BACKEND})")
    rng = np.random.default_rng(0)
    results = []
    for label, fn, fargs in _cases(rng):
        row = {"case": label}
        for name, mod in backends.items():
            f = getattr(mod, fn)
            number = max(1, int(0.2 / max(timeit.timeit(lambda: f(*fargs), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: f(*fargs), number=number, repeat=args.repeat)) / number
            row[name] = best
        results.append(row)
        cols = "  ".join(f"{k} {row[k] * 1e3:9.3f} ms" for k in backends)
        speed = f"  speedup {row['python'] / row['cython']:.1f}x" if "cython" in row else ""
        print(f"{label:34s} {cols}{speed}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
