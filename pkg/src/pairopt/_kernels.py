"""Hot inner loops, each with a numba ``@njit`` body and a pure-numpy twin.

The backend is chosen once at import time:

* ``PAIROPT_BACKEND=numpy`` forces the numpy path;
* ``PAIROPT_BACKEND=numba`` (default) uses numba when it imports cleanly.

Both variants are always importable under ``np_*`` / ``nb_*`` names so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKEND = os.environ.get("PAIROPT_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"PAIROPT_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
if BACKEND == "numba" and not HAVE_NUMBA:
    BACKEND = "numpy"

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# dense layer
# ---------------------------------------------------------------------------

def np_dense_forward(X, W, b, relu):
    Z = X @ W + b
    Y = np.maximum(Z, 0.0) if relu else Z
    return Z, Y


def np_dense_backward(X, W, Z, dY, relu, dW, db):
    """Accumulate into ``dW``/``db`` in place and return the input gradient."""
    dZ = dY * (Z > 0.0) if relu else dY
    dW += X.T @ dZ
    db += dZ.sum(axis=0)
    return dZ @ W.T


@njit(cache=True)
def nb_dense_forward(X, W, b, relu):
    n, d_in = X.shape
    d_out = W.shape[1]
    Z = np.empty((n, d_out))
    Y = np.empty((n, d_out))
    for r in range(n):
        for c in range(d_out):
            acc = 0.0
            for k in range(d_in):
                acc += X[r, k] * W[k, c]
            z = acc + b[c]
            Z[r, c] = z
            if relu and z < 0.0:
                Y[r, c] = 0.0
            else:
                Y[r, c] = z
    return Z, Y


@njit(cache=True)
def nb_dense_backward(X, W, Z, dY, relu, dW, db):
    n, d_in = X.shape
    d_out = W.shape[1]
    dX = np.zeros((n, d_in))
    for r in range(n):
        for c in range(d_out):
            g = dY[r, c]
            if relu and not Z[r, c] > 0.0:
                g = 0.0
            if g == 0.0:
                continue
            db[c] += g
            for k in range(d_in):
                dW[k, c] += X[r, k] * g
                dX[r, k] += g * W[k, c]
    return dX


# ---------------------------------------------------------------------------
# environment transition
# ---------------------------------------------------------------------------

def np_env_step(s, opp, a, b0, b1, b2, b3):
    team_sum = s.sum(axis=1)
    opp_sum = team_sum[opp][:, None]
    bye = (opp == np.arange(s.shape[0]))[:, None]
    return b0[a] + b1[a] * s + b2[a] * opp_sum + b3[a] * bye


@njit(cache=True)
def nb_env_step(s, opp, a, b0, b1, b2, b3):
    m, n = s.shape
    team_sum = np.zeros(m)
    for q in range(m):
        acc = 0.0
        for j in range(n):
            acc += s[q, j]
        team_sum[q] = acc
    out = np.empty((m, n))
    for q in range(m):
        o = opp[q]
        osum = team_sum[o]
        for j in range(n):
            k = a[q, j]
            v = b0[k] + b1[k] * s[q, j] + b2[k] * osum
            if o == q:
                v = v + b3[k]
            out[q, j] = v
    return out


# ---------------------------------------------------------------------------
# exact max-weight perfect matching by subset DP
# ---------------------------------------------------------------------------
# best[mask] is the optimum over the teams in ``mask``, with the lowest team of
# the mask matched first.  The pairing itself is recovered outside the kernel.

def np_match_dp(values, allow_byes):
    m = values.shape[0]
    full = (1 << m) - 1
    best = np.full(full + 1, NEG_INF)
    best[0] = 0.0
    for mask in range(1, full + 1):
        low = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << low)
        top = NEG_INF
        if allow_byes and best[rest] > NEG_INF:
            top = values[low, low] + best[rest]
        r = rest
        while r:
            bit = r & -r
            j = bit.bit_length() - 1
            sub = best[rest ^ bit]
            if sub > NEG_INF:
                cand = values[low, j] + sub
                if cand > top:
                    top = cand
            r ^= bit
        best[mask] = top
    return best


@njit(cache=True)
def nb_match_dp(values, allow_byes):
    m = values.shape[0]
    full = (1 << m) - 1
    best = np.full(full + 1, NEG_INF)
    best[0] = 0.0
    for mask in range(1, full + 1):
        low = 0
        while not (mask >> low) & 1:
            low += 1
        rest = mask ^ (1 << low)
        top = NEG_INF
        if allow_byes and best[rest] > NEG_INF:
            top = values[low, low] + best[rest]
        for j in range(low + 1, m):
            if (rest >> j) & 1:
                sub = best[rest ^ (1 << j)]
                if sub > NEG_INF:
                    cand = values[low, j] + sub
                    if cand > top:
                        top = cand
        best[mask] = top
    return best


def _select(name):
    return globals()[("nb_" if BACKEND == "numba" else "np_") + name]


dense_forward = _select("dense_forward")
dense_backward = _select("dense_backward")
env_step = _select("env_step")
match_dp = _select("match_dp")
