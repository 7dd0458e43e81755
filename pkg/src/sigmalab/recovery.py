"""Recovering p from an approximation of sigma_k(pq).

With s = N^(1/k), sigma_k(N) = g(p^(1/k)) for

    g(X) = (1 + X + ... + X^(k-1)) (1 + s/X + ... + (s/X)^(k-1)),

which is convex on (0, oo), symmetric under X -> s/X and increasing for
X >= sqrt(s).  Inverting g on that branch by bisection and rounding the k-th
power of the result gives the larger prime factor.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

import mpmath as mp
import sympy

from .arith import sigma_k
from .dirichlet import largest_prime_at_most, quadratic_character
from .errors import BracketError, DomainError, NotFactor, SmallC0
from .pnu import PnuParams, pnu_direct
from .precision import PrecisionContext
from .relation import RelationParams, assemble_constraints, solve_nullspace

log = logging.getLogger(__name__)

SOURCES = ("exact-oracle", "perturbed-oracle", "relation")


def recovery_bits(N: int) -> int:
    return max(192, 4 * N.bit_length() + 64)


def recovery_context(N: int, ctx: PrecisionContext | None = None) -> PrecisionContext:
    """ctx raised to at least max(192, 4 log2 N + 64) bits."""
    bits = recovery_bits(N)
    if ctx is not None and ctx.working_bits >= bits:
        return ctx
    return PrecisionContext.for_bits(bits)


def g_eval(ctx: PrecisionContext, N: int, k: int, X) -> mp.mpf:
    with ctx.workprec(16):
        X = mp.mpf(X)
        if X <= 0:
            raise DomainError("g is defined for X > 0")
        s = mp.root(N, k)
        left = mp.fsum(X**i for i in range(k))
        right = mp.fsum((s / X) ** i for i in range(k))
        value = left * right
    with ctx.workprec():
        return +value


@dataclass(frozen=True)
class RecoveryProblem:
    N: int
    k: int
    y_bar: mp.mpf
    err_budget: mp.mpf | None = None  # defaults to N^-2

    def __post_init__(self):
        if self.N < 6:
            raise DomainError("N must be >= 6")
        if self.k < 2:
            raise DomainError("k must be >= 2")

    @property
    def budget(self) -> mp.mpf:
        return self.err_budget if self.err_budget is not None else mp.mpf(self.N) ** -2

    @property
    def proved_regime(self) -> bool:
        return self.k >= 4


@dataclass(frozen=True)
class Inversion:
    x_bar: mp.mpf
    iterations: int
    clamped: bool


def _invert(ctx: PrecisionContext, problem: RecoveryProblem) -> Inversion:
    N, k = problem.N, problem.k
    with ctx.workprec():
        y = mp.mpf(problem.y_bar)
        lo = mp.sqrt(mp.root(N, k))
    g_lo = g_eval(ctx, N, k, lo)
    clamped = False
    if y < g_lo:
        if g_lo - y > problem.budget:
            raise BracketError(f"y_bar is below the branch minimum g(N^(1/2k)) = {mp.nstr(g_lo, 15)}")
        y, clamped = g_lo, True
    if y == g_lo:
        return Inversion(lo, 0, clamped)
    with ctx.workprec():
        hi = mp.root(N, k)
    while g_eval(ctx, N, k, hi) < y:
        hi *= 2
    limit = ctx.working_bits + N.bit_length() + 8
    for it in range(1, limit + 1):
        with ctx.workprec():
            mid = (lo + hi) / 2
        if mid in (lo, hi):
            break
        if g_eval(ctx, N, k, mid) < y:
            lo = mid
        else:
            hi = mid
    with ctx.workprec():
        return Inversion((lo + hi) / 2, it, clamped)


def bisect_inverse(ctx: PrecisionContext, problem: RecoveryProblem) -> mp.mpf:
    """The unique x_bar >= N^(1/2k) with g(x_bar) = y_bar, to working precision."""
    return _invert(ctx, problem).x_bar


def _check_semiprime_shape(N: int):
    if sympy.isprime(N):
        raise DomainError(f"{N} is prime")
    if sympy.perfect_power(N):
        raise DomainError(f"{N} is a perfect power")


def recover_factor(ctx: PrecisionContext, problem: RecoveryProblem) -> tuple[int, int]:
    """(p, q) with p > q from an approximation of sigma_k(pq).

    ctx is raised to the recovery precision floor when it is below it.
    """
    N, k = problem.N, problem.k
    _check_semiprime_shape(N)
    if not problem.proved_regime:
        log.warning("k = %d is outside the convexity regime k >= 4", k)
    r = math.isqrt(N)
    r += (N - r * r) > r  # nearest integer to sqrt(N)
    if 1 < r < N and N % r == 0:
        return max(r, N // r), min(r, N // r)
    ctx = recovery_context(N, ctx)
    x_bar = bisect_inverse(ctx, problem)
    with ctx.workprec():
        p = int(mp.nint(x_bar**k))
    if not 1 < p < N or N % p:
        raise NotFactor(f"candidate {p} does not divide {N}")
    return max(p, N // p), min(p, N // p)


# ---------------------------------------------------------------- demos


@dataclass(frozen=True)
class DemoReport:
    N: int
    k: int
    source: str
    success: bool
    factors: tuple | None
    sigma_error: float | None  # |y_bar - sigma_k(N)| when the true value is known
    C0: float | None = None
    error_scale: float | None = None  # estimated |y_bar - sigma_k(N) chi(N)| from rounding
    chi_sign: int | None = None
    proved_regime: bool = True
    error: str | None = None


def random_semiprimes(count: int, lo: int, hi: int, seed: int) -> list[tuple[int, int, int]]:
    """count triples (N, p, q) with distinct odd primes p, q in [lo, hi]."""
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        p = sympy.nextprime(rng.randrange(lo - 1, hi))
        q = sympy.nextprime(rng.randrange(lo - 1, hi))
        if p != q and p <= hi and q <= hi and p > 2 and q > 2:
            out.append((p * q, max(p, q), min(p, q)))
    return out


def _oracle_y(ctx: PrecisionContext, N: int, k: int, perturb: int) -> mp.mpf:
    with ctx.workprec():
        return sigma_k(ctx, N, k) + perturb * mp.mpf(N) ** -2


def default_relation_params(N: int, k: int) -> RelationParams:
    ell = largest_prime_at_most(N ** (1 / k))
    chi = quadratic_character(ell if ell > 2 else 3)
    return RelationParams(N, J=10, nu=4, k=k, chi=chi, block_len=21, mu_max=0, support_gap=2, use_blocks=False)


def _relation_estimate(ctx, N, k, params: RelationParams, seed: int):
    """sigma_k(N) chi(N) from the relation, plus |C_0| and a rounding-error estimate."""
    if params.x != N or params.k != k:
        raise DomainError("relation parameters must have x = N and the recovery k")
    sol = solve_nullspace(assemble_constraints(params), seed)
    C0 = sol.C0
    if C0 == 0:
        raise SmallC0("C_0 = 0 for this sample")
    pp = PnuParams(k, params.nu, params.chi)
    J = params.J
    with ctx.workprec():
        lhs_terms = [
            mp.mpf(sol.c[j].numerator) / sol.c[j].denominator * pnu_direct(ctx, pp, N + j)
            for j in range(-J, J + 1)
        ]
        rhs_terms = [
            mp.mpf(sol.C[j].numerator) / sol.C[j].denominator * sigma_k(ctx, N + j, k) * params.chi(N + j)
            for j in range(-J, J + 1)
            if j != 0
        ]
        c0 = mp.mpf(C0.numerator) / C0.denominator
        value = (mp.fsum(lhs_terms) - mp.fsum(rhs_terms)) / c0
        eps = mp.mpf(2) ** (-ctx.working_bits + 8)
        err = eps * (mp.fsum(abs(t) for t in lhs_terms) + mp.fsum(abs(t) for t in rhs_terms)) / abs(c0)
        value = mp.re(value)
    return value, float(abs(C0)), float(err)


def end_to_end_demo(
    ctx: PrecisionContext,
    N: int,
    k: int = 4,
    source: str = "exact-oracle",
    *,
    seed: int = 0,
    relation: RelationParams | None = None,
) -> DemoReport:
    """Feed an estimate of sigma_k(N) into recover_factor and report the outcome."""
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}")
    ctx = recovery_context(N, ctx)
    base = dict(N=N, k=k, source=source, proved_regime=k >= 4)
    if source != "relation":
        perturb = 0 if source == "exact-oracle" else random.Random(seed).choice((-1, 1))
        y = _oracle_y(ctx, N, k, perturb)
        err = float(abs(y - sigma_k(ctx, N, k)))
        try:
            f = recover_factor(ctx, RecoveryProblem(N, k, y))
            return DemoReport(**base, success=True, factors=f, sigma_error=err)
        except (NotFactor, BracketError) as e:
            return DemoReport(**base, success=False, factors=None, sigma_error=err, error=type(e).__name__)
    params = relation or default_relation_params(N, k)
    chi_N = params.chi(N)
    if chi_N == 0:
        # ell divides N: the character itself reveals a factor
        ell = params.chi.modulus
        return DemoReport(**base, success=True, factors=(max(ell, N // ell), min(ell, N // ell)), sigma_error=None)
    value, C0, err = _relation_estimate(ctx, N, k, params, seed)
    truth = sigma_k(ctx, N, k)
    if err > float(mp.mpf(N) ** -2):
        raise SmallC0(f"|C_0| = {C0:.3g} leaves an error of {err:.3g} > N^-2")
    for sign in (1, -1):
        with ctx.workprec():
            y = value * sign
        try:
            f = recover_factor(ctx, RecoveryProblem(N, k, y))
        except (NotFactor, BracketError):
            continue
        with ctx.workprec():
            serr = float(abs(y - truth))
        return DemoReport(**base, success=True, factors=f, sigma_error=serr, C0=C0, error_scale=err, chi_sign=sign)
    with ctx.workprec():
        serr = float(min(abs(value - truth), abs(value + truth)))
    return DemoReport(**base, success=False, factors=None, sigma_error=serr, C0=C0, error_scale=err, error="NotFactor")
