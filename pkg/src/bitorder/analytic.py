"""Expected bit transitions under the i.i.d.-bit model and the ordering objective.

For two ``b``-bit words carrying ``x`` and ``y`` ones at uniformly random
positions the expected number of toggling wires is ``x + y - 2xy/b``. Summed
over a flit pair the only arrangement-dependent term is ``sum(x_i * y_i)``,
which the interleaved descending arrangement maximises.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

BRUTE_FORCE_LIMIT = 12


@dataclass(frozen=True)
class CountProfile:
    counts: tuple[int, ...]
    width: int

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.width <= 0:
            raise ValueError("word width must be positive")
        for c in self.counts:
            _check_count(c, self.width)

    def __len__(self):
        return len(self.counts)


@dataclass(frozen=True)
class Arrangement:
    flit1_counts: tuple[int, ...]
    flit2_counts: tuple[int, ...]

    @property
    def objective(self) -> int:
        return objective_f(self.flit1_counts, self.flit2_counts)

    def multiset(self) -> list[int]:
        return sorted(self.flit1_counts + self.flit2_counts)


def _check_count(c: int, width: int) -> None:
    if not 0 <= c <= width:
        raise ValueError(f"'1'-bit count {c} outside [0, {width}]")


def _check_pair(x: int, y: int, b: int) -> None:
    if b <= 0:
        raise ValueError("bit width must be positive")
    _check_count(x, b)
    _check_count(y, b)


def p_transition_one_link(x: int, y: int, b: int = 32):
    """Probability that one wire toggles between a word with ``x`` ones and one with ``y``.

    Returned as an exact :class:`fractions.Fraction`.
    """
    _check_pair(x, y, b)
    b2 = b * b
    return 1 - Fraction((b - x) * (b - y), b2) - Fraction(x * y, b2)


def expected_bt_pair(x: int, y: int, b: int = 32):
    _check_pair(x, y, b)
    return x + y - Fraction(2 * x * y, b)


def expected_bt_flits(xs: CountProfile | Sequence[int], ys: CountProfile | Sequence[int],
                      width: int | None = None):
    xs_c, xw = _unwrap(xs)
    ys_c, yw = _unwrap(ys)
    b = width or xw or yw
    if b is None:
        raise ValueError("word width required when plain count sequences are given")
    if xw is not None and yw is not None and xw != yw:
        raise ValueError(f"profiles use different word widths ({xw}, {yw})")
    if len(xs_c) != len(ys_c):
        raise ValueError(f"flits hold different numbers of words ({len(xs_c)}, {len(ys_c)})")
    for x, y in zip(xs_c, ys_c):
        _check_pair(x, y, b)
    return sum(xs_c) + sum(ys_c) - Fraction(2 * objective_f(xs_c, ys_c), b)


def _unwrap(p):
    if isinstance(p, CountProfile):
        return p.counts, p.width
    return tuple(int(c) for c in p), None


def objective_f(xs: Sequence[int], ys: Sequence[int]) -> int:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch ({len(xs)} vs {len(ys)})")
    return sum(int(x) * int(y) for x, y in zip(xs, ys))


def interleaved_descending(counts: Sequence[int]) -> Arrangement:
    """Sort descending (stable) and deal ranks alternately to the two flits."""
    counts = [int(c) for c in counts]
    if len(counts) % 2:
        raise ValueError(f"need an even number of counts, got {len(counts)}")
    order = sorted(range(len(counts)), key=lambda i: -counts[i])
    ranked = [counts[i] for i in order]
    return Arrangement(tuple(ranked[0::2]), tuple(ranked[1::2]))


def interleave_indices(counts: Sequence[int]) -> tuple[list[int], list[int]]:
    """Positions (into ``counts``) that land in flit 1 and flit 2."""
    if len(counts) % 2:
        raise ValueError(f"need an even number of counts, got {len(counts)}")
    order = sorted(range(len(counts)), key=lambda i: -counts[i])
    return order[0::2], order[1::2]


def brute_force_max_f(counts: Sequence[int]) -> tuple[int, Arrangement]:
    """Exhaustive maximum of the cross-product sum over every split-and-align.

    Only distinct permutations of the multiset are visited; an assignment is
    a permutation whose first half is flit 1 and second half flit 2.
    """
    counts = [int(c) for c in counts]
    n2 = len(counts)
    if n2 % 2:
        raise ValueError(f"need an even number of counts, got {n2}")
    if n2 > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} counts, got {n2}")
    if n2 == 0:
        return 0, Arrangement((), ())
    n = n2 // 2
    best = None
    best_arr = None
    for perm in _distinct_permutations(sorted(counts)):
        f = sum(perm[i] * perm[n + i] for i in range(n))
        if best is None or f > best:
            best = f
            best_arr = Arrangement(tuple(perm[:n]), tuple(perm[n:]))
    return best, best_arr


def _distinct_permutations(items: list[int]):
    # lexicographic next-permutation; items must start sorted ascending
    a = list(items)
    n = len(a)
    while True:
        yield tuple(a)
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1:] = reversed(a[i + 1:])


def exchange_lemma_holds(a: int, b: int, c: int, d: int) -> bool:
    """Four-number local step: the interleaved split beats every other split.

    With the four counts ranked ``r1 >= r2 >= r3 >= r4`` the pairing
    ``r1*r2 + r3*r4`` is at least the value of any pairing of two words per flit.
    """
    r = sorted((a, b, c, d), reverse=True)
    best = r[0] * r[1] + r[2] * r[3]
    return all(p[0] * p[2] + p[1] * p[3] <= best for p in itertools.permutations(r))


def monte_carlo_expected_bt(x: int, y: int, b: int = 32, trials: int = 10_000,
                            seed: int | None = 0) -> float:
    """Mean toggles between words whose ones sit at uniformly random positions."""
    _check_pair(x, y, b)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    keys_a = rng.random((trials, b)).argsort(axis=1)
    keys_b = rng.random((trials, b)).argsort(axis=1)
    a = keys_a < x
    bb = keys_b < y
    return float(np.mean(np.count_nonzero(a != bb, axis=1)))


def monte_carlo_std_error(x: int, y: int, b: int, trials: int) -> float:
    """Standard error of :func:`monte_carlo_expected_bt` from the exact variance.

    Toggles = x + y - 2*k where k, the overlap of the two random sets, is
    hypergeometric(b, x, y).
    """
    _check_pair(x, y, b)
    if b < 2:
        return 0.0
    var_k = y * (x / b) * ((b - x) / b) * ((b - y) / (b - 1))
    return math.sqrt(4 * var_k / trials)
