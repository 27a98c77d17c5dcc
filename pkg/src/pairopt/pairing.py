"""Team pairings (the option space) and exact greedy pairing selection.

A :class:`Pairing` partitions teams ``0..M-1`` into unordered pairs; a pair
``(i, i)`` is a bye week.  Pairings are always held in canonical form (smaller
index first inside each pair, pairs sorted) so equal matchings compare equal.

``solve_matching`` maximises the summed pair values over all pairings.  Up to
``DP_MAX_TEAMS`` teams it runs an exact subset DP and applies the tie rule:
among pairings scoring within ``tie_tolerance`` of the optimum, the
lexicographically smallest canonical form wins.  The tolerance keeps the rule
stable when pairings tie in exact arithmetic but differ by rounding.  Beyond
``DP_MAX_TEAMS`` it falls back to networkx's blossom matcher, which is exact
but breaks ties arbitrarily.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .errors import ContractError, EnumerationCapError, InfeasibleError

ENUMERATION_CAP = 14
DP_MAX_TEAMS = 22
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class Pairing:
    pairs: tuple[tuple[int, int], ...]

    @property
    def m(self) -> int:
        return sum(1 if i == j else 2 for i, j in self.pairs)

    @property
    def has_byes(self) -> bool:
        return any(i == j for i, j in self.pairs)

    def opponents(self) -> np.ndarray:
        """``opp[q]`` is the team matched with ``q`` (``q`` itself on a bye)."""
        opp = np.empty(self.m, dtype=np.int64)
        for i, j in self.pairs:
            opp[i] = j
            opp[j] = i
        return opp

    def score(self, values) -> float:
        """Sum of pair values, accumulated left to right in canonical order."""
        total = 0.0
        for i, j in self.pairs:
            total += float(values[i][j])
        return total

    def relabel(self, perm) -> "Pairing":
        """Pairing after team ``q`` is renamed ``perm[q]``."""
        return canonicalize((int(perm[i]), int(perm[j])) for i, j in self.pairs)

    def __str__(self) -> str:
        return ",".join(f"{i}-{j}" for i, j in self.pairs)

    @classmethod
    def parse(cls, text: str) -> "Pairing":
        try:
            raw = [tuple(int(x) for x in chunk.split("-")) for chunk in text.strip().split(",")]
        except ValueError as exc:
            raise ContractError(f"malformed pairing text {text!r}") from exc
        if any(len(p) != 2 for p in raw):
            raise ContractError(f"malformed pairing text {text!r}")
        return canonicalize(raw)


def canonicalize(raw: Iterable) -> Pairing:
    """Canonical form of a raw pair list; raises unless it partitions ``0..M-1``."""
    pairs = sorted(tuple(sorted((int(a), int(b)))) for a, b in raw)
    seen: list[int] = []
    for i, j in pairs:
        seen.extend((i,) if i == j else (i, j))
    if sorted(seen) != list(range(len(seen))):
        raise ContractError(f"pairs {pairs} do not partition 0..{len(seen) - 1}")
    return Pairing(tuple(pairs))


def _check_m(m: int, allow_byes: bool):
    if m < 2:
        raise ContractError(f"need at least 2 teams, got {m}")
    if m % 2 and not allow_byes:
        raise InfeasibleError(f"{m} teams cannot be perfectly paired without byes")


def double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def count_pairings(m: int, allow_byes: bool = False) -> int:
    """(m-1)!! without byes; the telephone number T(m) with byes."""
    if not allow_byes:
        return double_factorial(m - 1) if m % 2 == 0 else 0
    a, b = 1, 1  # T(0), T(1)
    for k in range(2, m + 1):
        a, b = b, b + (k - 1) * a
    return b if m >= 1 else 1


def enumerate_pairings(m: int, allow_byes: bool = False, cap: int = ENUMERATION_CAP) -> Iterator[Pairing]:
    """Every valid pairing exactly once, in lexicographic canonical order."""
    _check_m(m, allow_byes)
    if m > cap:
        raise EnumerationCapError(f"refusing to enumerate pairings of {m} teams (cap {cap})")

    def rec(remaining: tuple[int, ...], acc: list):
        if not remaining:
            yield Pairing(tuple(acc))
            return
        i, rest = remaining[0], remaining[1:]
        if allow_byes:
            acc.append((i, i))
            yield from rec(rest, acc)
            acc.pop()
        for k, j in enumerate(rest):
            acc.append((i, j))
            yield from rec(rest[:k] + rest[k + 1:], acc)
            acc.pop()

    yield from rec(tuple(range(m)), [])


@lru_cache(maxsize=16)
def _pairing_table(m: int, allow_byes: bool, cap: int):
    options = tuple(enumerate_pairings(m, allow_byes, cap))
    width = max(len(p.pairs) for p in options)
    # pad short pairings with a sentinel pair that scores 0
    left = np.full((len(options), width), m, dtype=np.int64)
    right = np.full((len(options), width), m, dtype=np.int64)
    for k, p in enumerate(options):
        for c, (i, j) in enumerate(p.pairs):
            left[k, c], right[k, c] = i, j
    return options, left, right


def tie_tolerance(values) -> float:
    """Score gap below which two pairings count as tied."""
    v = np.asarray(values, dtype=np.float64)
    return TIE_RTOL * (1.0 + v.shape[0] * float(np.max(np.abs(v))))


def first_within_tolerance(scores, tol: float) -> int:
    """Index of the first score within ``tol`` of the maximum."""
    scores = np.asarray(scores, dtype=np.float64)
    return int(np.flatnonzero(scores >= scores.max() - tol)[0])


def brute_force_matching(values, allow_byes: bool = False, cap: int = ENUMERATION_CAP):
    """Reference optimum by scoring every pairing, with the same tie rule as the solver.

    Scores accumulate pair by pair in canonical order, the same order as
    :meth:`Pairing.score`, so optimal scores compare exactly.
    """
    v = np.asarray(values, dtype=np.float64)
    m = v.shape[0]
    options, left, right = _pairing_table(m, allow_byes, cap)
    padded = np.zeros((m + 1, m + 1))
    padded[:m, :m] = v
    scores = np.zeros(len(options))
    for c in range(left.shape[1]):
        scores = scores + padded[left[:, c], right[:, c]]
    k = first_within_tolerance(scores, tie_tolerance(v))
    return options[k], options[k].score(v)


def _validate_values(values) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ContractError(f"pair values must be a square matrix, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError("pair values must be finite")
    return v


def _dp_matching(v: np.ndarray, allow_byes: bool) -> Pairing:
    best = _kernels.match_dp(v, allow_byes)
    m = v.shape[0]
    mask = (1 << m) - 1
    floor = best[mask] - tie_tolerance(v)
    acc = 0.0
    pairs = []
    # walk options in canonical order, keeping the first that can still reach the floor
    while mask:
        low = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << low)
        partners = ([low] if allow_byes else []) + [j for j in range(low + 1, m) if rest >> j & 1]
        for j in partners:
            sub = rest if j == low else rest ^ (1 << j)
            if best[sub] > -np.inf and acc + v[low, j] + best[sub] >= floor:
                break
        pairs.append((low, j))
        acc += v[low, j]
        mask = sub
    return Pairing(tuple(pairs))


def _blossom_matching(v: np.ndarray, allow_byes: bool) -> Pairing:
    import networkx as nx

    m = v.shape[0]
    g = nx.Graph()
    # every perfect matching of the (possibly doubled) graph has the same edge
    # count, so a uniform shift keeps the argmax and makes all weights positive
    shift = 1.0 - float(v.min())
    for i in range(m):
        for j in range(i + 1, m):
            g.add_edge(i, j, weight=v[i, j] + shift)
    if allow_byes:
        for i in range(m):
            g.add_edge(i, m + i, weight=v[i, i] + shift)
            for j in range(i + 1, m):
                g.add_edge(m + i, m + j, weight=shift)
    matched = nx.max_weight_matching(g, maxcardinality=True)
    pairs = []
    for a, b in matched:
        a, b = min(a, b), max(a, b)
        if b < m:
            pairs.append((a, b))
        elif a < m:
            pairs.append((a, a))
    return canonicalize(pairs)


def solve_matching(values, allow_byes: bool = False) -> tuple[Pairing, float]:
    """Pairing maximising the summed pair values, and that sum.

    Off-diagonal entries score pairs; the diagonal scores byes and is ignored
    unless ``allow_byes``.
    """
    v = _validate_values(values)
    _check_m(v.shape[0], allow_byes)
    if v.shape[0] <= DP_MAX_TEAMS:
        best = _dp_matching(v, allow_byes)
    else:
        best = _blossom_matching(v, allow_byes)
    return best, best.score(v)


def random_pairing(m: int, allow_byes: bool = False, seed=None, cap: int = ENUMERATION_CAP) -> Pairing:
    """Uniformly random pairing.

    Without byes a uniform permutation folded into consecutive pairs; with byes a
    uniform draw from the enumerated option set (only up to ``cap`` teams).
    """
    _check_m(m, allow_byes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if not allow_byes:
        perm = rng.permutation(m)
        return canonicalize(zip(perm[0::2].tolist(), perm[1::2].tolist()))
    if m > cap:
        raise EnumerationCapError(f"uniform pairing with byes is unsupported above {cap} teams")
    options = list(enumerate_pairings(m, True, cap))
    return options[int(rng.integers(len(options)))]
