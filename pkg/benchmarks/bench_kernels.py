"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--teams 14]

Each row reports the best-of-``repeat`` mean time per call.  The first numba
call (compilation or cache load) is excluded.
"""

import argparse
import timeit

import numpy as np

from pairopt import _kernels as K


def cases(rng, teams):
    X = rng.normal(size=(100, 6))
    W = rng.normal(size=(6, 4))
    b = rng.normal(size=4)
    Z, _ = K.np_dense_forward(X, W, b, True)
    dY = rng.normal(size=(100, 4))
    s = rng.normal(size=(10, 10))
    a = rng.integers(0, 2, size=(10, 10))
    opp = rng.permutation(10)
    coefs = [rng.normal(size=2) for _ in range(4)]
    v = rng.normal(size=(teams, teams))
    v = v + v.T
    return {
        "dense_forward (100x6 @ 6x4)": (lambda f: f(X, W, b, True), "dense_forward"),
        "dense_backward (100x6 @ 6x4)": (
            lambda f: f(X, W, Z, dY, True, np.zeros((6, 4)), np.zeros(4)), "dense_backward"),
        "env_step (10x10)": (lambda f: f(s, opp, a, *coefs), "env_step"),
        f"match_dp ({teams} teams)": (lambda f: f(v, False), "match_dp"),
    }


def bench(call, fn, repeat):
    call(fn)
    timer = timeit.Timer(lambda: call(fn))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--teams", type=int, default=14)
    args = parser.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"active backend: {K.BACKEND}")
    print(f"{'kernel':<30} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    for label, (call, name) in cases(rng, args.teams).items():
        t_np = bench(call, getattr(K, "np_" + name), args.repeat)
        t_nb = bench(call, getattr(K, "nb_" + name), args.repeat)
        print(f"{label:<30} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
