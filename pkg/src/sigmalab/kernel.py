"""Closed form of the Gamma-product kernel

    I(y) = (1/2 pi i) int_{(3/2)} Gamma(k s) (k^k y)^-s / ((s-nu)...(s-1)) ds

and an independent contour-quadrature oracle for it.

Shifting the contour to Re s = nu + 1 crosses the poles s = 2..nu.  The part
left on the far line integrates to p(X) e^{-kX} / (kX)^{k nu} with X = y^(1/k),
and the residues assemble into q(y) / (k^k y)^nu, so that

    I = (kX)^(-k nu) * (p(X) e^{-kX} - q(X^k)).

The residues enter with a minus sign (they are crossed moving right).  q is
kept as the plain residue polynomial, i.e. with the sign in the display
above.

All coefficient arithmetic is exact (fractions.Fraction); floating point
appears only when the kernel is evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import mpmath as mp

from .errors import DomainError, TailTooLarge
from .precision import PrecisionContext, gamma_raw, verified


def smoothing_weight(t, nu: int):
    """f_nu(t) = (1 - t)^(nu-1) on [0, 1], zero beyond."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t >= 1:
        return 0 if nu > 1 else (1 if t == 1 else 0)
    return (1 - t) ** (nu - 1)


def beta_transform(ctx: PrecisionContext, nu: int, s):
    """B(nu, s) = Gamma(nu) Gamma(s) / Gamma(nu + s), the Mellin transform of f_nu."""
    with ctx.workprec():
        if mp.re(s) <= 0:
            raise DomainError("beta_transform needs Re s > 0")
    return verified(ctx, lambda: mp.mpc(gamma_raw(nu) * gamma_raw(s) / gamma_raw(nu + mp.mpc(s))))


@lru_cache(maxsize=None)
def partial_fractions(nu: int) -> tuple[Fraction, ...]:
    """b_1..b_nu with 1/((s-nu)...(s-1)) = sum_u b_u / (s - u)."""
    if nu < 1:
        raise ValueError("nu must be >= 1")
    return tuple(
        Fraction((-1) ** (nu - u), factorial(u - 1) * factorial(nu - u)) for u in range(1, nu + 1)
    )


@lru_cache(maxsize=None)
def p_matrix(k: int, nu: int) -> dict[tuple[int, int], Fraction]:
    """P[(m, u)] = (ku-1)(ku-2)...(ku-(m-1)) / k^m for 1 <= u <= nu, 1 <= m <= ku."""
    out = {}
    for u in range(1, nu + 1):
        value = Fraction(1, k)
        out[(1, u)] = value
        for m in range(2, k * u + 1):
            value = value * (k * u - (m - 1)) / k
            out[(m, u)] = value
    return out


def folded_coefficient(k: int, nu: int, m: int) -> Fraction:
    """sum_u b_u P[(m, u)] over the u with ku >= m."""
    b = partial_fractions(nu)
    P = p_matrix(k, nu)
    return sum((b[u - 1] * P[(m, u)] for u in range(1, nu + 1) if k * u >= m), Fraction(0))


def residue_denominator(nu: int, m: int) -> int:
    """prod_{r=1..nu, r != m} (m - r)."""
    out = 1
    for r in range(1, nu + 1):
        if r != m:
            out *= m - r
    return out


@dataclass(frozen=True)
class KernelClosedForm:
    k: int
    nu: int
    b: tuple[Fraction, ...]
    P: dict
    p_coeffs: tuple[Fraction, ...]  # ascending: p_coeffs[j] multiplies X^j
    q_coeffs: tuple[Fraction, ...]  # ascending in y

    def __hash__(self):
        return hash((self.k, self.nu))

    def p_descending(self):
        return tuple(reversed(self.p_coeffs))

    def q_descending(self):
        return tuple(reversed(self.q_coeffs))


@lru_cache(maxsize=None)
def closed_form_polynomials(k: int, nu: int) -> KernelClosedForm:
    if k < 2 or nu < 2:
        raise ValueError("need k >= 2 and nu >= 2")
    scale = k ** (k * nu)
    deg_p = k * nu - 1
    p = [Fraction(0)] * (deg_p + 1)
    for m in range(1, k * nu + 1):
        p[k * nu - m] = scale * folded_coefficient(k, nu, m)
    q = [Fraction(0)] * (nu - 1)
    for m in range(2, nu + 1):
        # (k^k)^nu * Gamma(km)/prod' * (k^k y)^-m * y^nu
        q[nu - m] = Fraction(
            factorial(k * m - 1) * k ** (k * (nu - m)), residue_denominator(nu, m)
        )
    return KernelClosedForm(k, nu, partial_fractions(nu), p_matrix(k, nu), tuple(p), tuple(q))


def _poly(coeffs, z):
    acc = mp.mpf(0)
    for c in reversed(coeffs):
        acc = acc * z + mp.mpf(c.numerator) / c.denominator
    return acc


def _kernel_raw(kcf: KernelClosedForm, X):
    k, nu = kcf.k, kcf.nu
    return (_poly(kcf.p_coeffs, X) * mp.exp(-k * X) - _poly(kcf.q_coeffs, X**k)) / (k * X) ** (k * nu)


def _cancellation_bits(kcf: KernelClosedForm, X) -> int:
    # bits lost when p e^{-kX} and q nearly cancel: log2(|q(|y|)| / |I|) roughly
    with mp.workprec(64):
        X = mp.mpc(X)
        absq = abs(_poly([abs(c) for c in kcf.q_coeffs], abs(X) ** kcf.k))
        absp = abs(_poly([abs(c) for c in kcf.p_coeffs], abs(X)))
        big = max(absq, absp, mp.mpf(1))
        return int(mp.log(big, 2)) + 8


def kernel_eval(ctx: PrecisionContext, kcf: KernelClosedForm, X=None, *, y=None) -> mp.mpc:
    """I at X = y^(1/k) from the closed form, for Re X >= 0, X != 0.

    A real ``y > 0`` may be given instead of X; its k-th root is then taken
    at working precision.
    """
    with ctx.workprec(16):
        if y is not None:
            if X is not None or mp.mpf(y) <= 0:
                raise DomainError("give either X or a positive y")
            X = mp.root(mp.mpf(y), kcf.k)
        X = mp.mpc(X)
    if X.real < 0:
        raise DomainError("kernel_eval requires Re X >= 0")
    if X == 0:
        raise DomainError("kernel_eval is undefined at X = 0")
    return verified(ctx, lambda: mp.mpc(_kernel_raw(kcf, X)), _cancellation_bits(kcf, X))


def tilde_kernel(ctx: PrecisionContext, kcf: KernelClosedForm, y):
    """(k^k y)^nu times the far-line part of I, i.e. p(y^(1/k)) e^{-k y^(1/k)}."""

    def compute():
        X = mp.root(mp.mpf(y), kcf.k)
        return _poly(kcf.p_coeffs, X) * mp.exp(-kcf.k * X)

    return verified(ctx, compute)


def tilde_derivative_fd(ctx: PrecisionContext, kcf: KernelClosedForm, y, h):
    """Central nu-th difference of y -> p(y^(1/k)) e^{-k y^(1/k)} with step h.

    Returns ``(difference, exact)`` where ``exact`` is (-1)^nu k^(k nu - 1)
    e^{-k y^(1/k)}, the nu-th derivative obtained by differentiating the
    contour integral under the integral sign (q has degree nu - 2 and drops
    out).  The difference is O(h^2) away from it.
    """
    k, nu = kcf.k, kcf.nu
    bits = ctx.working_bits + 4 * nu + int(mp.log(1 / mp.mpf(h), 2)) * nu

    def f(t):
        X = mp.root(t, k)
        return _poly(kcf.p_coeffs, X) * mp.exp(-k * X)

    with mp.workprec(bits):
        y, h = mp.mpf(y), mp.mpf(h)
        if y - nu * h / 2 <= 0:
            raise DomainError("stencil reaches y <= 0")
        diff = mp.fsum(
            (-1) ** j * mp.binomial(nu, j) * f(y + (mp.mpf(nu) / 2 - j) * h) for j in range(nu + 1)
        ) / h**nu
        exact = (-1) ** nu * mp.mpf(k) ** (k * nu - 1) * mp.exp(-k * mp.root(y, k))
    with ctx.workprec():
        return +diff, +exact


def _log_y(k: int, y=None, X=None):
    if X is not None:
        return k * mp.log(mp.mpc(X))
    y = mp.mpf(y)
    if y <= 0:
        raise DomainError("oracle needs y > 0 (or a complex X with |arg X| < pi/2)")
    return mp.mpc(mp.log(y))


def gamma_line_tail_bound(k: int, nu: int, log_y, T):
    """Majorant of (1/2 pi) int_{|t| > T} |integrand| dt on Re s = 3/2.

    Uses |Gamma(w)| <= sqrt(2 pi) |w|^(Re w - 1/2) exp(-pi |Im w| / 2 + 1/(6|w|))
    for Re w > 0, |k^k y|^-s <= |k^k y|^(-3/2) e^(|t| |arg y|) and
    |prod (s - u)| >= |t|^nu.
    """
    T = mp.mpf(T)
    theta = abs(mp.im(log_y))
    rate = k * mp.pi / 2 - theta
    if rate <= 0:
        raise DomainError("integrand does not decay along the line")
    base = mp.exp(-mp.mpf(3) / 2 * (k * mp.log(k) + mp.re(log_y)))
    a = mp.mpf(3 * k - 1) / 2

    def bound(t):
        w = k * mp.sqrt(mp.mpf(9) / 4 + t * t)
        return mp.sqrt(2 * mp.pi) * w**a * mp.exp(-rate * t + 1 / (6 * k * t)) * base / t**nu

    return mp.quad(bound, [T, T + 10, T + 100, mp.inf]) / mp.pi


def kernel_quadrature_oracle(
    ctx: PrecisionContext, k: int, nu: int, y=None, T=None, *, X=None, tol=None
):
    """Integrate the defining contour integral of I numerically.

    Returns ``(value, tail_bound)``.  Pass a real ``y > 0`` or a complex
    ``X`` (then y = X^k with log y = k log X).  When ``T`` is omitted it is
    the smallest even height whose tail bound is below ``tol`` (default
    ctx.target_tol / 10).
    """
    tol = ctx.target_tol / 10 if tol is None else tol
    with ctx.workprec(16):
        log_y = _log_y(k, y, X)
        if T is None:
            T = 4
            while gamma_line_tail_bound(k, nu, log_y, T) > tol:
                T += 2
                if T > 10**4:
                    raise TailTooLarge("no truncation height found below 10^4")
        tail = gamma_line_tail_bound(k, nu, log_y, T)
        if tail > tol:
            raise TailTooLarge(f"tail bound {mp.nstr(tail, 5)} exceeds {tol:g} at T = {T}")
        c = mp.mpf(3) / 2
        logky = k * mp.log(k) + log_y

        def integrand(t):
            s = mp.mpc(c, t)
            den = mp.fprod(s - u for u in range(1, nu + 1))
            return mp.gamma(k * s) * mp.exp(-s * logky) / den

        nodes = [mp.mpf(t) for t in range(0, int(mp.ceil(T)) + 1)]
        if mp.im(log_y) == 0:
            value = mp.re(mp.quad(integrand, nodes, method="gauss-legendre")) / mp.pi
        else:
            both = [-t for t in reversed(nodes[1:])] + nodes
            value = mp.quad(integrand, both, method="gauss-legendre") / (2 * mp.pi)
    with ctx.workprec():
        return +mp.mpc(value), +tail


def export_polynomials(kcf: KernelClosedForm) -> str:
    """Plain-text export: one 'numerator/denominator' per line, degree-descending."""
    lines = [f"# p_{{{kcf.k},{kcf.nu}}}(X) degree {len(kcf.p_coeffs) - 1}"]
    lines += [f"{c.numerator}/{c.denominator}" for c in kcf.p_descending()]
    lines.append(f"# q_{{{kcf.k},{kcf.nu}}}(y) degree {len(kcf.q_coeffs) - 1}")
    lines += [f"{c.numerator}/{c.denominator}" for c in kcf.q_descending()]
    return "\n".join(lines) + "\n"


def parse_polynomials(text: str) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Inverse of export_polynomials; returns (p, q) ascending."""
    sections = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            sections.append([])
        else:
            sections[-1].append(Fraction(line))
    p, q = sections
    return tuple(reversed(p)), tuple(reversed(q))
