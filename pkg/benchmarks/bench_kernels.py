"""Compare the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall time per kernel and the speedup. Outputs of both
backends are checked for equality before timing.
"""

import argparse
import calendar
import timeit

import numpy as np

from wikishock import _kernels_py

try:
    from wikishock import _speedups
except ImportError:  # extension not built
    _speedups = None


def cases(rng):
    stamps = [
        "%04d-%02d-%02d %02d:%02d:%02d.0" % (2018 + i % 3, 1 + i % 12, 1 + i % 28, i % 24, i % 60, (7 * i) % 60)
        for i in range(100_000)
    ]
    series = rng.normal(0, 5, 2_000) + np.where(np.arange(2_000) >= 900, -40.0, 0.0)
    long = rng.normal(size=1_000_000)
    return {
        "parse_timestamp x100k": lambda m: [m.parse_timestamp(s) for s in stamps],
        "best_split n=2000": lambda m: m.best_split(series, 0, series.shape[0], 7),
        "rolling_mean n=1e6 w=7": lambda m: np.asarray(m.rolling_mean(long, 7)),
    }


def same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _speedups is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    assert _speedups.parse_timestamp("2020-03-15 23:30:00.0") == calendar.timegm((2020, 3, 15, 23, 30, 0))

    print(f"{'kernel':<26}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        if not same(fn(_kernels_py), fn(_speedups)):
            raise SystemExit(f"{name}: backends disagree")
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        cy = min(timeit.repeat(lambda: fn(_speedups), number=1, repeat=args.repeat))
        print(f"{name:<26}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
