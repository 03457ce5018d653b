"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--json PATH]
"""

import argparse
import json
import math
import timeit

import numpy as np

from ebtopm import _kernels_py

try:
    from ebtopm import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _mixture_case(n, k, seed=0):
    rng = np.random.default_rng(seed)
    means = np.zeros(k)
    variances = np.concatenate([[0.0], (0.05 * math.sqrt(2) ** np.arange(k - 1)) ** 2])
    logw = np.log(rng.dirichlet(np.ones(k)))
    s2 = rng.uniform(0.25, 16, n)
    x = rng.normal(size=n) * np.sqrt(s2 + 1)
    return x, s2, means, variances, logw


def _em_case(n, k, seed=0):
    x, s2, means, variances, _ = _mixture_case(n, k, seed)
    tot = variances[None, :] + s2[:, None]
    logl = -0.5 * (np.log(2 * np.pi * tot) + (x[:, None] - means) ** 2 / tot)
    shift = logl.max(axis=1)
    return np.exp(logl - shift[:, None]), shift, np.full(k, 1.0 / k)


CASES = {
    "mixture_moments n=1e5 K=16": lambda mod: (mod.mixture_moments, _mixture_case(10**5, 16)),
    "em_weights n=4000 K=16 (200 it)": lambda mod: (
        mod.em_weights, _em_case(4000, 16) + (0.0, 200)),
    "em_weights n=4000 K=300 (50 it)": lambda mod: (
        mod.em_weights, _em_case(4000, 300) + (0.0, 50)),
}


def bench(repeat):
    mods = {"python": _kernels_py}
    if _kernels_c is not None:
        mods["cython"] = _kernels_c
    rows = []
    for name, make in CASES.items():
        row = {"case": name}
        for label, mod in mods.items():
            fn, args = make(mod)
            row[label] = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = bench(args.repeat)
    print(f"{'case':36s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for r in rows:
        cy = f"{r['cython']:11.4f}" if "cython" in r else f"{'n/a':>11s}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'':>8s}"
        print(f"{r['case']:36s} {r['python']:11.4f} {cy} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
