"""The smoothed sum

    P_nu(x) = sum_{n <= x} sigma_k(n) chi(n) (x - n)^(nu - 1)

computed by direct summation and, independently, through the
functional-equation expansion.  A quadrature of its Mellin integral

    P_nu(x) = x^(nu-1) (1/2 pi i) int_{(2)} prod_m L(s - m/k, chi) B(nu, s) x^s ds

serves as a third check.

Functional-equation expansion
-----------------------------
Shifting that integral to the far left and applying the functional equation
to each L(s - m/k, chi) leaves, besides the main term
x^(nu-1) prod_m L(-m/k, chi), one block per phase r = 0..k:

    Pref_r * (A_r - B_r)

    Pref_r = (-1)^nu C_r Gamma(nu) (tau/2 pi i)^k (ell/2 pi)^((k-1)/2)
             (2 pi/ell)^k e^(i pi k w_r/2) x^nu (2 pi)^((k-1)/2) sqrt(k)
    A_r    = sum_n a_n conj chi(n) e^(-k X_n) sum_{m=nu..k nu} F_m X_n^-m
    B_r    = sum_{m=2..nu} Gamma(km) / prod_{r' != m}(m - r') (k X_1)^-km
             prod_j L(m + j/k, conj chi)

with X_n = 2 pi e^(i pi w_r/2) (x n)^(1/k) / ell and F_m = sum_u b_u P_{m,u}
(see :mod:`sigmalab.kernel`).  ``convention="printed"`` drops the (-1)^nu and
adds B_r instead of subtracting it; it exists only so the calibration
report can show what those two signs do.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath as mp
import numpy as np

from .arith import coefficient_table, rankin_tail_bound
from .dirichlet import (
    DirichletCharacter,
    fe_phase,
    gauss_sum_raw,
    l_negative_raw,
    l_value_cached,
)
from .errors import DomainError, TailTooLarge, TruncationError
from .kernel import closed_form_polynomials, folded_coefficient, residue_denominator
from .precision import PrecisionContext, verified

CONVENTIONS = ("derived", "printed")
MAX_TRUNCATION = 1 << 16


@dataclass(frozen=True)
class PnuParams:
    k: int
    nu: int
    chi: DirichletCharacter
    X_trunc: int | None = None  # None: chosen from the tail bound
    delta: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.nu < 2:
            raise ValueError("nu must be >= 2")
        if self.X_trunc is not None and self.X_trunc < 1:
            raise ValueError("X_trunc must be >= 1")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def ell(self) -> int:
        return self.chi.modulus

    @property
    def c(self) -> Fraction:
        return Fraction(self.nu, self.k)

    def require_analytic(self):
        if self.nu < 6 * self.k:
            raise DomainError(f"the expansion needs nu >= 6k (nu={self.nu}, k={self.k})")

    @staticmethod
    def asymptotic_delta(x, eps: float) -> float:
        """delta = 1 / (log x)^(1 - eps)."""
        return 1 / math.log(x) ** (1 - eps)

    def asymptotic_truncation(self, x) -> float:
        """x^((1 - delta/4) nu / c): the asymptotic cut-off, for reference only."""
        if self.delta is None:
            raise ValueError("delta not set")
        return float(x) ** ((1 - self.delta / 4) * self.nu / float(self.c))


# ---------------------------------------------------------------- phase terms


def _mpf(q: Fraction) -> mp.mpf:
    return mp.mpf(q.numerator) / q.denominator


@dataclass(frozen=True)
class PhaseTerm:
    r: int
    C: mp.mpc
    omega: Fraction


def _phase_terms_raw(k: int, parity: int) -> list[PhaseTerm]:
    C = [mp.mpc(0)] * (k + 1)
    for signs in itertools.product((1, -1), repeat=k):
        coef = mp.mpc(1)
        for m, e in enumerate(signs):
            # e^{i pi (s - m/k)/2}  or  -chi(-1) e^{-i pi (s - m/k)/2}
            coef *= (1 if e == 1 else -parity) * mp.expjpi(-e * mp.mpf(m) / (2 * k))
        C[signs.count(-1)] += coef
    return [PhaseTerm(r, C[r], 1 - Fraction(2 * r, k)) for r in range(k + 1)]


def phase_terms(k: int, parity: int, ctx: PrecisionContext | None = None) -> list[PhaseTerm]:
    """Group the 2^k terms of prod_m (e^{i pi (s-m/k)/2} - parity e^{-i pi (s-m/k)/2})
    by their dependence on s, as C_r e^{i pi w_r k s / 2}, r = 0..k."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    ctx = ctx or PrecisionContext()
    with ctx.workprec():
        return _phase_terms_raw(k, parity)


def sign_product(s, k: int, parity: int):
    """The literal product prod_{m<k} (e^{i pi (s-m/k)/2} - parity e^{-i pi (s-m/k)/2})."""
    s = mp.mpc(s)
    return mp.fprod(fe_phase(s - mp.mpf(m) / k, parity) for m in range(k))


def phase_expansion(terms, s, k: int):
    s = mp.mpc(s)
    return mp.fsum(t.C * mp.expjpi(_mpf(t.omega) * k * s / 2) for t in terms)


# ---------------------------------------------------------------- direct sum


def _direct_raw(params: PnuParams, xs):
    chi, nu = params.chi, params.nu
    xs = [mp.mpf(x) for x in xs]
    n_max = max([int(mp.floor(x)) for x in xs] + [0])
    sig = coefficient_table(n_max, params.k, 1)
    weights = [(n, sig[n] * chi(n)) for n in range(1, n_max + 1) if chi(n) != 0]
    out = []
    for x in xs:
        out.append(mp.mpc(mp.fsum(w * (x - n) ** (nu - 1) for n, w in weights if n <= x)))
    return out


def pnu_direct(ctx: PrecisionContext, params: PnuParams, x) -> mp.mpc:
    """P_nu(x) by summing over n <= x."""
    if x < 0:
        raise DomainError("x must be >= 0")
    return verified(ctx, lambda: _direct_raw(params, [x])[0])


def pnu_direct_many(ctx: PrecisionContext, params: PnuParams, xs) -> list:
    """P_nu at several points, sharing one coefficient table."""
    if any(x < 0 for x in xs):
        raise DomainError("x must be >= 0")
    return verified(ctx, lambda: _direct_raw(params, xs))


# ---------------------------------------------------------------- expansion


@dataclass(frozen=True)
class TermRecord:
    kind: str  # "main", "series" or "series_L"
    r: int | None
    u: int | None
    m: int | None
    n_block: tuple[int, int] | None
    value: mp.mpc


@dataclass(frozen=True)
class SeriesBlock:
    r: int
    C: mp.mpc
    omega: Fraction
    prefactor: mp.mpc
    series: mp.mpc  # Pref_r * A_r
    series_L: mp.mpc  # -Pref_r * B_r (printed convention: +)
    n_cut: int
    partial: dict = field(repr=False)  # (m, n_block) -> sum over the block of w_n e^{-kX_n} X_n^-m
    L_terms: dict = field(repr=False)  # m -> signed addend of series_L


@dataclass(frozen=True)
class PnuAnalytic:
    x: mp.mpf
    k: int
    nu: int
    value: mp.mpc
    main: mp.mpc
    blocks: tuple[SeriesBlock, ...]
    X_trunc: int  # largest per-block cut
    tail_bound: mp.mpf
    scale: mp.mpf
    convention: str

    @property
    def series_total(self) -> mp.mpc:
        return mp.fsum(b.series + b.series_L for b in self.blocks)

    def term_records(self, ctx: PrecisionContext | None = None) -> list[TermRecord]:
        """One record per addend: the main term, each (r, u, m, n-block) piece of
        the singular series and each (r, m) piece of the L-value block.

        The (u, m) split is a diagnostic view; the blocks themselves sum the
        u-folded coefficients, so these records add up to ``value`` only up to
        the cancellation across u.
        """
        ctx = ctx or PrecisionContext()
        kcf = closed_form_polynomials(self.k, self.nu)
        recs = [TermRecord("main", None, None, None, None, self.main)]
        with ctx.workprec():
            for blk in self.blocks:
                for (m, nb), part in sorted(blk.partial.items()):
                    for u in range(1, self.nu + 1):
                        if self.k * u < m:
                            continue
                        val = blk.prefactor * _mpf(kcf.b[u - 1] * kcf.P[(m, u)]) * part
                        recs.append(TermRecord("series", blk.r, u, m, nb, val))
                for m, val in sorted(blk.L_terms.items()):
                    recs.append(TermRecord("series_L", blk.r, None, m, None, val))
        return recs


def _block_of(n: int) -> tuple[int, int]:
    d = len(str(n)) - 1
    return (10**d, 10 ** (d + 1) - 1)


def _gamma_nu_tau(params: PnuParams):
    k, ell = params.k, params.ell
    tau = gauss_sum_raw(params.chi)
    two_pi = 2 * mp.pi
    return (
        mp.gamma(params.nu)
        * (tau / (2j * mp.pi)) ** k
        * (ell / two_pi) ** (mp.mpf(k - 1) / 2)
        * (two_pi / ell) ** k
        * two_pi ** (mp.mpf(k - 1) / 2)
        * mp.sqrt(k)
    )


def _prefactor(params: PnuParams, term: PhaseTerm, x, sign_nu: int, common=None):
    common = _gamma_nu_tau(params) if common is None else common
    k = params.k
    return sign_nu * term.C * common * mp.expjpi(_mpf(term.omega) * k / 2) * x**params.nu


def _first_X(params: PnuParams, term: PhaseTerm, x):
    """X_1 = 2 pi e^{i pi w/2} x^(1/k) / ell."""
    return 2 * mp.pi * mp.expjpi(_mpf(term.omega) / 2) * mp.root(x, params.k) / params.ell


def _mirror(r: int, k: int, chi: DirichletCharacter) -> int | None:
    """For real chi, block k - r is the complex conjugate of block r."""
    if chi.is_real and r > k - r:
        return k - r
    return None


def _analytic_raw(params: PnuParams, x, cuts, convention: str):
    k, nu, chi = params.k, params.nu, params.chi
    chib = chi.conj()
    sign_nu, sign_L = ((-1) ** nu, -1) if convention == "derived" else (1, 1)
    x = mp.mpf(x)
    main = x ** (nu - 1) * mp.fprod(l_negative_raw(chi, m, k) for m in range(k))
    common = _gamma_nu_tau(params)
    a = coefficient_table(max(cuts), k, -1)
    weights = [(n, a[n] * chib(n), mp.root(n, k)) for n in range(1, max(cuts) + 1) if chib(n) != 0]
    F = {m: folded_coefficient(k, nu, m) for m in range(nu, k * nu + 1)}
    F = {m: _mpf(f) for m, f in F.items() if f}
    Lprod = {
        m: mp.fprod(l_value_cached(m + mp.mpf(j) / k, chib) for j in range(k))
        for m in range(2, nu + 1)
    }
    blocks = []
    for term in _phase_terms_raw(k, chi.parity):
        r = term.r
        src = _mirror(r, k, chi)
        if src is not None:
            _, pref, ser, serL, partial, L_terms = blocks[src]
            blocks.append(
                (
                    r,
                    mp.conj(pref),
                    mp.conj(ser),
                    mp.conj(serL),
                    {key: mp.conj(v) for key, v in partial.items()},
                    {m: mp.conj(v) for m, v in L_terms.items()},
                )
            )
            continue
        X1 = _first_X(params, term, x)
        pref = _prefactor(params, term, x, sign_nu, common)
        sums = {}  # n_block -> per-m running sums, m = nu .. k nu
        for n, w, root in weights:
            if n > cuts[r]:
                break
            Xn = X1 * root
            inv = 1 / Xn
            t = w * mp.exp(-k * Xn) * inv**nu
            acc = sums.setdefault(_block_of(n), [0] * (k * nu - nu + 1))
            for i in range(len(acc)):
                acc[i] += t
                t *= inv
        partial = {(nu + i, nb): v for nb, acc in sums.items() for i, v in enumerate(acc)}
        A = mp.fsum(F[m] * v for (m, _), v in partial.items() if m in F)
        L_terms = {
            m: sign_L
            * pref
            * mp.factorial(k * m - 1)
            / residue_denominator(nu, m)
            * (k * X1) ** (-k * m)
            * Lprod[m]
            for m in range(2, nu + 1)
        }
        blocks.append((r, pref, pref * A, mp.fsum(L_terms.values()), partial, L_terms))
    value = main + mp.fsum(s + sl for _, _, s, sl, _, _ in blocks)
    return value, main, blocks


@lru_cache(maxsize=None)
def _rankin(k: int, m: int, n_cut: int) -> mp.mpf:
    with mp.workprec(64):
        return rankin_tail_bound(mp.mpf(m) / k, [-mp.mpf(j) / k for j in range(k)], n_cut)[0]


class _TailModel:
    """Per-block sizes and tail majorants at modest precision.

    For n > n_cut, |w_n e^{-kX_n} X_n^-m| <= a_n n^(-m/k) |X_1|^-m
    e^{-k Re X_1 (n_cut+1)^(1/k)}, and sum_{n > n_cut} a_n n^-sigma is bounded
    by Rankin's trick against prod_j zeta(s + j/k).
    """

    def __init__(self, params: PnuParams, x, convention: str):
        k, nu = params.k, params.nu
        self.k = k
        with mp.workprec(64):
            x = mp.mpf(x)
            sign_nu = (-1) ** nu if convention == "derived" else 1
            F = {m: abs(folded_coefficient(k, nu, m)) for m in range(nu, k * nu + 1)}
            common = _gamma_nu_tau(params)
            self.scale = abs(x ** (nu - 1) * mp.fprod(l_negative_raw(params.chi, m, k) for m in range(k)))
            self.blocks = []
            for term in _phase_terms_raw(k, params.chi.parity):
                X1 = _first_X(params, term, x)
                pref = abs(_prefactor(params, term, x, sign_nu, common))
                sizes = {m: pref * _mpf(f) * abs(X1) ** (-m) for m, f in F.items() if f}
                self.scale += sum(sizes.values()) * mp.exp(-k * mp.re(X1))
                self.blocks.append((sizes, k * mp.re(X1)))

    def tail(self, r: int, n_cut: int) -> mp.mpf:
        sizes, rate = self.blocks[r]
        with mp.workprec(64):
            damp = mp.exp(-rate * mp.root(n_cut + 1, self.k))
            return damp * mp.fsum(size * _rankin(self.k, m, n_cut) for m, size in sizes.items())


def pnu_analytic(
    ctx: PrecisionContext,
    params: PnuParams,
    x,
    *,
    tol: float = 1e-10,
    abs_tol: float = 0.0,
    convention: str = "derived",
) -> PnuAnalytic:
    """P_nu(x) from the functional-equation expansion, with its breakdown.

    Each singular series r is cut at its own power of two (or at
    ``params.X_trunc`` for all r), chosen so that the summed tail bound is
    below max(tol |value|, abs_tol).  The blocks cancel one another heavily
    (|value| can sit many orders of magnitude below ``scale``, the size of
    the leading addends); precision escalation absorbs that cancellation.
    Where P_nu(x) vanishes (x < 1) only ``abs_tol`` can stop the search.
    """
    params.require_analytic()
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if x <= 0:
        raise DomainError("x must be positive")
    k = params.k
    model = _TailModel(params, x, convention)
    fixed = params.X_trunc is not None
    cuts = [params.X_trunc if fixed else 16] * (k + 1)
    while True:
        value, main, raw_blocks = verified(
            ctx, lambda: _analytic_raw(params, x, tuple(cuts), convention)
        )
        with ctx.workprec():
            share = max(tol * abs(value), abs_tol) / (k + 1)
        tails = [model.tail(r, cuts[r]) for r in range(k + 1)]
        if all(t <= share for t in tails):
            break
        if fixed:
            raise TruncationError(
                f"tail bound {mp.nstr(sum(tails), 5)} exceeds target "
                f"{mp.nstr(share * (k + 1), 5)} at X_trunc = {params.X_trunc}"
            )
        for r in range(k + 1):
            while model.tail(r, cuts[r]) > share:
                cuts[r] *= 2
                if cuts[r] > MAX_TRUNCATION:
                    raise TruncationError(f"no truncation below {MAX_TRUNCATION} meets the target")
    phases = _phase_terms_raw(k, params.chi.parity)
    blocks = tuple(
        SeriesBlock(r, phases[r].C, phases[r].omega, pref, s, sl, cuts[r], partial, lt)
        for r, pref, s, sl, partial, lt in raw_blocks
    )
    with ctx.workprec():
        return PnuAnalytic(
            +mp.mpf(x), k, params.nu, value, main, blocks, max(cuts),
            +mp.fsum(tails), +model.scale, convention,
        )


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibrationReport:
    xs: tuple
    convention: str
    ratios: tuple  # (direct - main) / series, one per x
    ratio: mp.mpc  # the global constant (mean of ratios)
    spread: mp.mpf  # max relative deviation of a ratio from the constant
    constant: bool
    rel_errors: tuple  # |direct - (main + ratio * series)| / |direct| per x
    uncalibrated_rel_errors: tuple


def calibrate(
    ctx: PrecisionContext,
    params: PnuParams,
    xs,
    *,
    tol: float = 1e-8,
    convention: str = "derived",
) -> CalibrationReport:
    """Fit one global constant in front of the series blocks against the direct sum.

    The constant is accepted when the per-x ratios agree to ``tol``.
    """
    ratios, parts = [], []
    for x in xs:
        d = pnu_direct(ctx, params, x)
        an = pnu_analytic(ctx, params, x, convention=convention)
        with ctx.workprec():
            ratios.append((d - an.main) / an.series_total)
        parts.append((d, an))
    with ctx.workprec():
        ratio = mp.fsum(ratios) / len(ratios)
        spread = max(abs(q - ratio) for q in ratios) / abs(ratio)
        rel = tuple(abs(d - (an.main + ratio * an.series_total)) / abs(d) for d, an in parts)
        raw = tuple(abs(d - an.value) / abs(d) for d, an in parts)
        return CalibrationReport(
            tuple(xs), convention, tuple(ratios), ratio, spread, spread <= tol, rel, raw
        )


# ---------------------------------------------------------------- Mellin oracle

_GL_POINTS = 20


@lru_cache(maxsize=None)
def _gl_unit():
    t, w = np.polynomial.legendre.leggauss(_GL_POINTS)
    return tuple((t + 1) / 2), tuple(w / 2)


@lru_cache(maxsize=1 << 20)
def _l_product_fp(chi: DirichletCharacter, k: int, t: float) -> complex:
    fp = mp.fp
    vals = [complex(chi(a)) for a in range(chi.modulus)]
    out = 1
    for m in range(k):
        s = complex(2 - m / k, t)
        h = sum(vals[a] * fp.zeta(s, a / chi.modulus) for a in range(1, chi.modulus) if vals[a])
        out *= chi.modulus ** (-s) * h
    return out


def _beta_fp(nu: int, s: complex) -> float:
    den = 1
    for j in range(nu):
        den *= s + j
    return math.gamma(nu) / den


def mellin_tail_bound(params: PnuParams, x, T) -> float:
    """Bound on the part |Im s| > T of x^(nu-1)(1/2 pi i) int_{(2)} ..., at P_nu scale.

    On Re s = 2, |L(s - m/k, chi)| <= zeta(2 - m/k) and |B(nu, s)| <= Gamma(nu) |t|^-nu.
    """
    k, nu = params.k, params.nu
    zetas = math.prod(float(mp.zeta(2 - mp.mpf(m) / k)) for m in range(k))
    x = float(x)
    return x ** (nu + 1) * math.gamma(nu) * zetas * T ** (1 - nu) / ((nu - 1) * math.pi)


@dataclass(frozen=True)
class OracleResult:
    value: mp.mpc
    tail_bound: float
    T: int
    nodes: int


def mellin_identity_oracle(
    ctx: PrecisionContext, params: PnuParams, x, T: int | None = None, *, tol: float = 1e-13
) -> OracleResult:
    """P_nu(x) by Gauss-Legendre quadrature of its Mellin integral on Re s = 2.

    Runs in double precision (mpmath.fp); it is a check on the other two
    routes at about 1e-13 relative, not a high-precision evaluator.  Unit
    panels with 20 nodes each; L-products are cached per node, so calls at
    several x share most of the work.  With T omitted, T grows until the
    tail bound is below ``tol`` times the result (or the integrand size at
    t = 0, whichever is larger).
    """
    if x <= 0:
        raise DomainError("x must be positive")
    k, nu, chi = params.k, params.nu, params.chi
    xf = float(x)
    logx = math.log(xf)
    nodes, weights = _gl_unit()
    symmetric = chi.is_real

    def g(t):
        s = complex(2, t)
        return _l_product_fp(chi, k, t) * _beta_fp(nu, s) * np.exp(s * logx)

    g0 = abs(g(0.0)) * xf ** (nu - 1)

    def integrate(T):
        total = 0j
        panels = range(0, T) if symmetric else range(-T, T)
        for j in panels:
            total += sum(w * g(j + t) for t, w in zip(nodes, weights))
        total = total.real / math.pi if symmetric else total / (2 * math.pi)
        return total * xf ** (nu - 1)

    if T is not None:
        value = integrate(T)
        tail = mellin_tail_bound(params, xf, T)
        if tail > tol * max(abs(value), g0):
            raise TailTooLarge(f"tail bound {tail:.3g} too large at T = {T}")
    else:
        T = 8
        while True:
            value = integrate(T)
            tail = mellin_tail_bound(params, xf, T)
            if tail <= tol * max(abs(value), g0):
                break
            T *= 2
            if T > 1 << 14:
                raise TailTooLarge("no truncation height below 2^14 meets the tolerance")
    panels = T if symmetric else 2 * T
    with ctx.workprec():
        return OracleResult(mp.mpc(value), tail, T, panels * _GL_POINTS)
