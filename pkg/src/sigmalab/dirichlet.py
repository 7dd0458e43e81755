"""Dirichlet characters, Gauss sums and L-functions.

Characters are explicit tables of exponents: chi(a) = exp(2 pi i e_a / order),
or 0 when gcd(a, modulus) > 1.  Real characters (order <= 2) evaluate to
exact Python integers.

L(s, chi) is evaluated everywhere through the Hurwitz decomposition
L(s, chi) = modulus^-s sum_a chi(a) zeta(s, a/modulus), with mpmath's
Euler-Maclaurin Hurwitz zeta supplying the continuation.  At s = 1 the poles
cancel and the digamma form -(1/modulus) sum_a chi(a) psi(a/modulus) is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import mpmath as mp
from sympy import isprime, primitive_root

from .errors import NotPrime, PoleError
from .precision import PrecisionContext, gamma_raw, verified


@dataclass(frozen=True)
class DirichletCharacter:
    modulus: int
    order: int
    exponents: tuple  # exponents[a] for a in 0..modulus-1, None where chi(a) = 0

    def __post_init__(self):
        if self.modulus < 2:
            raise ValueError("modulus must be > 1")
        if len(self.exponents) != self.modulus:
            raise ValueError("exponent table must cover every residue")

    def __call__(self, n: int):
        e = self.exponents[n % self.modulus]
        if e is None:
            return 0
        e %= self.order
        if self.order <= 2:
            return 1 if e == 0 else -1
        if 4 * e == self.order:
            return mp.mpc(0, 1)
        if 4 * e == 3 * self.order:
            return mp.mpc(0, -1)
        return mp.expjpi(mp.mpf(2 * e) / self.order)

    @property
    def is_real(self) -> bool:
        return all(e is None or (2 * e) % self.order == 0 for e in self.exponents)

    @property
    def parity(self) -> int:
        """chi(-1), always +1 or -1."""
        e = self.exponents[self.modulus - 1] % self.order
        return 1 if e == 0 else -1

    def conj(self) -> "DirichletCharacter":
        return DirichletCharacter(
            self.modulus,
            self.order,
            tuple(None if e is None else (-e) % self.order for e in self.exponents),
        )

    @cached_property
    def primitive(self) -> bool:
        # chi is induced from modulus d iff it is trivial on units congruent to 1 mod d
        q = self.modulus
        for d in range(1, q):
            if q % d:
                continue
            trivial = all(
                self.exponents[a] % self.order == 0
                for a in range(1, q)
                if a % d == 1 % d and math.gcd(a, q) == 1
            )
            if trivial:
                return False
        return True

    def values(self) -> tuple:
        return tuple(self(a) for a in range(self.modulus))

    def is_multiplicative(self, sample=None) -> bool:
        """Check chi(mn) = chi(m) chi(n) on all residue pairs (or a sample)."""
        q = self.modulus
        pairs = sample if sample is not None else ((m, n) for m in range(q) for n in range(q))
        for m, n in pairs:
            em, en, emn = self.exponents[m % q], self.exponents[n % q], self.exponents[m * n % q]
            if em is None or en is None:
                if emn is not None:
                    return False
            elif emn is None or (em + en - emn) % self.order:
                return False
        return self.exponents[1] is not None and self.exponents[1] % self.order == 0


def quadratic_character(ell: int) -> DirichletCharacter:
    """Legendre symbol (. / ell) as a character mod the odd prime ell."""
    if ell < 3 or ell % 2 == 0 or not isprime(ell):
        raise NotPrime(f"{ell} is not an odd prime")
    half = (ell - 1) // 2
    exps = [None] + [0 if pow(a, half, ell) == 1 else 1 for a in range(1, ell)]
    return DirichletCharacter(ell, 2, tuple(exps))


def character_mod_prime(ell: int, j: int) -> DirichletCharacter:
    """chi(g^a) = exp(2 pi i j a / (ell - 1)) for a primitive root g mod ell.

    Primitive exactly when j is not divisible by ell - 1.
    """
    if not isprime(ell):
        raise NotPrime(f"{ell} is not prime")
    g = primitive_root(ell)
    order = ell - 1
    exps = [None] * ell
    x = 1
    for a in range(order):
        exps[x] = (j * a) % order
        x = x * g % ell
    return DirichletCharacter(ell, order, tuple(exps))


def character_from_table(modulus: int, table) -> DirichletCharacter:
    """Real character from a table of values in {-1, 0, 1} indexed by residue."""
    if len(table) != modulus or any(v not in (-1, 0, 1) for v in table):
        raise ValueError("table must list chi(a) in {-1, 0, 1} for each residue")
    exps = tuple(None if v == 0 else (0 if v == 1 else 1) for v in table)
    return DirichletCharacter(modulus, 2, exps)


def chi4() -> DirichletCharacter:
    """The non-principal character mod 4."""
    return character_from_table(4, [0, 1, 0, -1])


def largest_prime_at_most(x) -> int:
    """Downward trial-division search for the largest prime <= x."""
    n = int(mp.floor(x))
    if n < 2:
        raise ValueError("no prime <= x")
    while n >= 2:
        if n < 4 or (n % 2 and all(n % d for d in range(3, math.isqrt(n) + 1, 2))):
            return n
        n -= 1
    raise ValueError("no prime <= x")


def gauss_sum_raw(chi: DirichletCharacter):
    q = chi.modulus
    return mp.fsum(chi(m) * mp.expjpi(mp.mpf(2 * m) / q) for m in range(1, q + 1))


def gauss_sum(ctx: PrecisionContext, chi: DirichletCharacter) -> mp.mpc:
    """tau(chi) = sum_{m=1..ell} chi(m) e^(2 pi i m / ell), by direct summation."""
    return verified(ctx, lambda: mp.mpc(gauss_sum_raw(chi)))


def l_value_raw(s, chi: DirichletCharacter):
    """L(s, chi) at the ambient precision (no verification)."""
    q = chi.modulus
    s = mp.mpc(s)
    if s == 1:
        return -mp.fsum(chi(a) * mp.digamma(mp.mpf(a) / q) for a in range(1, q) if chi(a) != 0) / q
    total = mp.fsum(
        chi(a) * mp.zeta(s, mp.mpf(a) / q) for a in range(1, q) if chi(a) != 0
    )
    return mp.power(q, -s) * total


@lru_cache(maxsize=1 << 16)
def _l_cached(s_key, chi: DirichletCharacter, prec: int):
    with mp.workprec(prec):
        return mp.mpc(l_value_raw(mp.mpc(*s_key), chi))


def l_value_cached(s, chi: DirichletCharacter):
    """Memoized l_value_raw keyed on (s, chi, ambient precision)."""
    s = mp.mpc(s)
    return _l_cached((s.real, s.imag), chi, mp.mp.prec)


def l_function(ctx: PrecisionContext, s, chi: DirichletCharacter) -> mp.mpc:
    """L(s, chi) for any complex s (entire for non-principal chi)."""
    return verified(ctx, lambda: mp.mpc(l_value_raw(s, chi)))


def fe_phase(s, parity: int):
    return mp.expjpi(s / 2) - parity * mp.expjpi(-s / 2)


def _fe_right_side(s, chi: DirichletCharacter, tau):
    """(1/2 pi i)(2 pi/ell)^s tau Gamma(1-s) L(1-s, conj chi)(e^{i pi s/2} - chi(-1) e^{-i pi s/2})."""
    q = chi.modulus
    return (
        (2 * mp.pi / q) ** s
        * tau
        * gamma_raw(1 - s)
        * l_value_raw(1 - s, chi.conj())
        * fe_phase(s, chi.parity)
        / (2j * mp.pi)
    )


def l_negative_raw(chi: DirichletCharacter, m: int, k: int):
    """L(-m/k, chi) at the ambient precision, via the functional equation."""
    if not 0 <= m < k:
        raise ValueError("need 0 <= m < k")
    if not chi.primitive:
        raise ValueError("functional equation requires a primitive character")
    return mp.mpc(_fe_right_side(-mp.mpf(m) / k, chi, gauss_sum_raw(chi)))


def l_special_negative(ctx: PrecisionContext, chi: DirichletCharacter, m: int, k: int) -> mp.mpc:
    """L(-m/k, chi) through the functional equation from L(1 + m/k, conj chi)."""
    return verified(ctx, lambda: l_negative_raw(chi, m, k))


def functional_equation_residual(ctx: PrecisionContext, s, chi: DirichletCharacter) -> mp.mpf:
    """|L(s, chi) - right side of the asymmetric functional equation|."""
    with ctx.workprec():
        s = mp.mpc(s)
    if s.imag == 0 and s.real >= 1 and mp.isint(s.real):
        raise PoleError(f"Gamma(1 - s) has a pole at s = {s}")
    if not chi.primitive:
        raise ValueError("functional equation requires a primitive character")
    left = l_function(ctx, s, chi)
    right = verified(ctx, lambda: mp.mpc(_fe_right_side(s, chi, gauss_sum_raw(chi))))
    with ctx.workprec():
        return abs(left - right)
