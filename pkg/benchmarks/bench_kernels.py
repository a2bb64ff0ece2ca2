"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the PGD inner loop on a resample-sgd schedule (T = n single-sample
steps) and the clamp-shift root finder, for every importable backend.
"""
from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from unistab import convexopt as cx
from unistab import kernels


def bench_pgd(mod, n, repeat):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(n, 1))
    sched = cx.make_schedule("with_replacement", n, n, 1, 1 / math.sqrt(n), seed=1)
    args = (kernels.QUADRATIC, X, np.zeros(1), sched.indptr, sched.indices, sched.etas, 1.0, 0.5)
    return min(timeit.repeat(lambda: mod.pgd_run(*args), number=1, repeat=repeat))


def bench_shift(mod, m, repeat, calls=200):
    rng = np.random.default_rng(2)
    probs = rng.dirichlet(np.ones(m))
    values = rng.uniform(-1, 1, m)
    values -= probs @ values
    return min(timeit.repeat(lambda: [mod.shift_root(values, probs, 0.3, 1e-12) for _ in range(calls)],
                             number=1, repeat=repeat)) / calls


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':<26}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    cases = [(f"pgd_run n=T={n}", lambda mod, n=n: bench_pgd(mod, n, args.repeat)) for n in (1_000, 10_000, 100_000)]
    cases += [(f"shift_root m={m}", lambda mod, m=m: bench_shift(mod, m, args.repeat)) for m in (5, 50, 500)]
    for label, fn in cases:
        times = {name: fn(mod) for name, mod in backends.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<26}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
