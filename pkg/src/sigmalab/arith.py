"""The multiplicative families sigma_k(n) and a_n.

    sigma_k(n) = sum_{d_1 ... d_{k-1} | n} d_1^(1/k) d_2^(2/k) ... d_{k-1}^((k-1)/k)
    a_n        = same sum with the exponents negated

Both are evaluated through their Euler factors.  At a prime power p^e the
local factor is sum_w N_k(e, w) p^(+-w/k), where N_k(e, w) counts exponent
tuples (e_1, ..., e_{k-1}) with e_1 + ... + e_{k-1} <= e and
1*e_1 + ... + (k-1)*e_{k-1} = w.  The counts are exact integers, so only the
final powers of p are inexact.  Literal tuple enumeration is kept as
``*_bruteforce`` for cross-checking.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import mpmath as mp

from .errors import DivergenceError, OverflowBudget
from .precision import PrecisionContext

DEFAULT_TRIAL_LIMIT = 10**6


def factorize(n: int, trial_limit: int = DEFAULT_TRIAL_LIMIT) -> dict[int, int]:
    """Prime factorization by trial division up to ``trial_limit``.

    A cofactor left after trial division is accepted as prime only when it is
    below trial_limit**2; otherwise the effort budget is exhausted.
    """
    if n < 1:
        raise ValueError("n must be positive")
    return dict(_factorize(n, trial_limit))


@lru_cache(maxsize=1 << 16)
def _factorize(n: int, trial_limit: int) -> tuple[tuple[int, int], ...]:
    out = []
    for p in (2, 3):
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
    d = 5
    step = 2
    while d * d <= n:
        if d > trial_limit:
            raise OverflowBudget(
                f"cofactor {n} not resolved by trial division up to {trial_limit}"
            )
        if n % d == 0:
            e = 0
            while n % d == 0:
                n //= d
                e += 1
            out.append((d, e))
        d += step
        step = 6 - step
    if n > 1:
        out.append((n, 1))
    return tuple(out)


@lru_cache(maxsize=None)
def local_counts(k: int, e: int) -> tuple[int, ...]:
    """N_k(e, w) for w = 0 .. (k-1)e, computed by dynamic programming."""
    # table[t][w]: tuples over the slots processed so far with total t, weight w
    wmax = (k - 1) * e
    table = [[0] * (wmax + 1) for _ in range(e + 1)]
    table[0][0] = 1
    for i in range(1, k):
        new = [[0] * (wmax + 1) for _ in range(e + 1)]
        for t in range(e + 1):
            for w in range(wmax + 1):
                c = table[t][w]
                if not c:
                    continue
                for ei in range(0, e - t + 1):
                    wi = w + i * ei
                    if wi > wmax:
                        break
                    new[t + ei][wi] += c
        table = new
    return tuple(sum(table[t][w] for t in range(e + 1)) for w in range(wmax + 1))


def _local_factor(p: int, e: int, k: int, sign: int):
    counts = local_counts(k, e)
    z = mp.root(p, k)
    if sign < 0:
        z = 1 / z
    return mp.polyval(list(reversed(counts)), z)


def _euler_product(n: int, k: int, sign: int, trial_limit: int):
    if k < 2:
        raise ValueError("k must be an integer > 1")
    value = mp.mpf(1)
    for p, e in factorize(n, trial_limit).items():
        value *= _local_factor(p, e, k, sign)
    return value


@lru_cache(maxsize=1 << 18)
def _cached(n: int, k: int, sign: int, prec: int, trial_limit: int):
    with mp.workprec(prec):
        return _euler_product(n, k, sign, trial_limit)


def sigma_k(ctx: PrecisionContext, n: int, k: int, trial_limit: int = DEFAULT_TRIAL_LIMIT):
    """sigma_k(n) at ctx's working precision."""
    return _cached(int(n), k, 1, ctx.working_bits + 10, trial_limit)


def a_coeff(ctx: PrecisionContext, n: int, k: int, trial_limit: int = DEFAULT_TRIAL_LIMIT):
    """a_n (negative-exponent analogue of sigma_k) at working precision."""
    return _cached(int(n), k, -1, ctx.working_bits + 10, trial_limit)


def coefficient_table(n_max: int, k: int, sign: int = 1, trial_limit: int = DEFAULT_TRIAL_LIMIT):
    """[None, f(1), ..., f(n_max)] at the ambient precision (sign=+1: sigma_k, -1: a_n)."""
    prec = mp.mp.prec + 10
    return [None] + [_cached(n, k, sign, prec, trial_limit) for n in range(1, n_max + 1)]


def sigma_k_from_factors(ctx: PrecisionContext, factors: dict[int, int], k: int):
    """sigma_k of an integer given its factorization (no trial division)."""
    with ctx.workprec(10):
        return mp.fprod(_local_factor(p, e, k, 1) for p, e in factors.items())


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def _bruteforce(n: int, k: int, sign: int):
    divs = _divisors(n)
    total = mp.mpf(0)
    for tup in itertools.product(divs, repeat=k - 1):
        if n % math.prod(tup):
            continue
        term = mp.mpf(1)
        for i, d in enumerate(tup, 1):
            term *= mp.power(d, mp.mpf(sign * i) / k)
        total += term
    return total


def sigma_k_bruteforce(ctx: PrecisionContext, n: int, k: int):
    """Literal enumeration of all (k-1)-tuples of divisors; test oracle."""
    with ctx.workprec(10):
        return _bruteforce(n, k, 1)


def a_coeff_bruteforce(ctx: PrecisionContext, n: int, k: int):
    with ctx.workprec(10):
        return _bruteforce(n, k, -1)


def rankin_tail_bound(sigma, shifts, n_cut: int, grid: int = 64):
    """Bound sum_{n > n_cut} f(n) n^-sigma for f with |f|-Dirichlet series
    prod_j zeta(s - shift_j).

    Rankin's trick: for 0 < eta < sigma - 1 - max(shift),
    tail <= n_cut^-eta * prod_j zeta(sigma - eta - shift_j).  The best eta
    on a uniform grid is returned together with the bound.
    """
    sigma = mp.mpf(sigma)
    room = sigma - 1 - max(shifts)
    if room <= 0:
        raise DivergenceError("series is not absolutely convergent")
    best = (mp.inf, None)
    for i in range(1, grid):
        eta = room * i / grid
        bound = mp.power(n_cut, -eta) * mp.fprod(mp.zeta(sigma - eta - t) for t in shifts)
        if bound < best[0]:
            best = (bound, eta)
    return best


def dirichlet_partial_sum(ctx: PrecisionContext, k: int, chi, s, n_cut: int):
    """sum_{n <= n_cut} sigma_k(n) chi(n) n^-s and a rigorous tail bound.

    The tail bound majorizes sum_{n > n_cut} sigma_k(n) n^-Re(s) by Rankin's
    trick against prod_m zeta(s - m/k).
    """
    if n_cut < 1:
        raise ValueError("n_cut must be >= 1")
    with ctx.workprec():
        s = mp.mpc(s)
        if s.real <= 2 - mp.mpf(1) / k:
            raise DivergenceError(f"Re s = {s.real} <= 2 - 1/k; series diverges")
    with ctx.workprec(10):
        total = mp.mpc(0)
        for n in range(1, n_cut + 1):
            c = chi(n)
            if c == 0:
                continue
            total += sigma_k(ctx, n, k) * c * mp.power(n, -s)
        tail, _ = rankin_tail_bound(s.real, [mp.mpf(m) / k for m in range(k)], n_cut)
    with ctx.workprec():
        return +total, +tail
