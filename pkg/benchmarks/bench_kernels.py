"""Time the compiled kernels against their NumPy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one row per (kernel, size) with the median wall time of each backend
and the speedup. Outputs of the two backends are compared before timing.
"""

import argparse
import statistics
import timeit

import numpy as np

from spanaug import _kernels_py

try:
    from spanaug import _kernels as _compiled
except ImportError:
    _compiled = None


def _cases(rng):
    for n in (50, 200, 800):
        m = n * (n - 1) // 2
        v = rng.normal(0.2, 0.6, m)
        # a budget small enough that the bisection branch always runs
        yield "project_upper", n, (v, 0.05 * m, 1e-10, 200)
    for n in (50, 200, 800):
        a = np.triu((rng.random((n, n)) < 0.05).astype(float), 1)
        a = a + a.T
        d = np.triu(rng.random((n, n)) * 0.1, 1)
        d = d + d.T
        u = rng.random(n * (n - 1) // 2)
        yield "flip_sample", n, (a, d, u)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; run `python setup.py build_ext --inplace` first")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<14}{'n':>6}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}")
    for name, n, call_args in _cases(rng):
        py_fn, c_fn = getattr(_kernels_py, name), getattr(_compiled, name)
        if not np.allclose(py_fn(*call_args), c_fn(*call_args), atol=1e-12, rtol=0):
            raise SystemExit(f"{name} backends disagree at n={n}")
        times = {}
        for label, fn in (("python", py_fn), ("compiled", c_fn)):
            runs = timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat)
            times[label] = statistics.median(runs) * 1e3
        print(f"{name:<14}{n:>6}{times['python']:>12.3f}{times['compiled']:>13.3f}"
              f"{times['python'] / times['compiled']:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
