"""Working-precision context and the Gamma-function layer.

Every transcendental value in the package is produced under a
:class:`PrecisionContext`.  Accuracy is enforced by recomputation: a value is
computed at ``working_bits`` and again at twice that, and accepted only when
the two agree to ``target_tol``.  On disagreement the precision is doubled up
to ``max_escalations`` times before giving up with :class:`PrecisionError`.

mpmath keeps its precision in process-global state, so a context must not be
used to evaluate concurrently from several threads; use processes instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, TypeVar

import mpmath as mp

from .errors import PoleError, PrecisionError

T = TypeVar("T")

APComplex = mp.mpc
APReal = mp.mpf


@dataclass(frozen=True)
class PrecisionContext:
    working_bits: int = 128
    target_tol: float = 1e-25
    max_escalations: int = 3

    def __post_init__(self):
        if self.working_bits < 64:
            raise ValueError("working_bits must be >= 64")
        if self.target_tol <= 0:
            raise ValueError("target_tol must be positive")
        if self.target_tol < 2.0 ** (-self.working_bits + 16):
            raise ValueError(
                f"target_tol {self.target_tol:g} is below the guard margin "
                f"2^-{self.working_bits - 16} for {self.working_bits}-bit working precision"
            )
        if self.max_escalations < 0:
            raise ValueError("max_escalations must be >= 0")

    @classmethod
    def for_bits(cls, bits: int, max_escalations: int = 3) -> "PrecisionContext":
        """Context whose tolerance sits 24 bits above the precision floor."""
        return cls(bits, float(mp.mpf(2) ** (-bits + 24)), max_escalations)

    def workprec(self, extra_bits: int = 0):
        return mp.workprec(self.working_bits + extra_bits)

    def doubled(self) -> "PrecisionContext":
        return replace(self, working_bits=2 * self.working_bits)

    def close(self, a, b, scale=None) -> bool:
        """``|a - b| <= target_tol * max(1, |scale|)`` (scale defaults to b)."""
        ref = abs(b) if scale is None else abs(scale)
        return abs(a - b) <= self.target_tol * max(1, ref)


def verified(ctx: PrecisionContext, fn: Callable[[], T], extra_bits: int = 0) -> T:
    """Evaluate ``fn`` under ``ctx`` with verify-by-escalation.

    ``fn`` takes no arguments and computes at the ambient mpmath precision.
    ``extra_bits`` raises the starting precision when the caller can predict
    cancellation.  The accepted value is the higher-precision one rounded to
    working precision.
    """
    bits = ctx.working_bits + max(0, int(extra_bits))
    with mp.workprec(bits):
        low = fn()
    for _ in range(ctx.max_escalations + 1):
        with mp.workprec(2 * bits):
            high = fn()
        with mp.workprec(2 * bits):
            ok = _agree(low, high, ctx.target_tol)
        if ok:
            with mp.workprec(ctx.working_bits):
                return _round(high)
        bits *= 2
        low = high
    raise PrecisionError(
        f"no agreement to {ctx.target_tol:g} after {ctx.max_escalations} escalations "
        f"(last precision {2 * bits} bits)"
    )


def _agree(a, b, tol) -> bool:
    if isinstance(a, (tuple, list)):
        return all(_agree(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, dict):
        return all(_agree(a[key], b[key], tol) for key in a)
    return abs(a - b) <= tol * max(1, abs(b))


def _round(v):
    if isinstance(v, tuple):
        return tuple(_round(x) for x in v)
    if isinstance(v, list):
        return [_round(x) for x in v]
    if isinstance(v, dict):
        return {key: _round(x) for key, x in v.items()}
    if isinstance(v, (mp.mpf, mp.mpc)):
        return +v
    return v


def to_complex(s) -> mp.mpc:
    return mp.mpc(s)


def is_nonpositive_integer(s) -> bool:
    s = mp.mpc(s)
    return s.imag == 0 and s.real <= 0 and mp.isint(s.real)


def gamma_raw(s):
    """Gamma at the ambient precision; poles raise PoleError."""
    if is_nonpositive_integer(s):
        raise PoleError(f"Gamma has a pole at {s}")
    return mp.gamma(s)


def eval_gamma(ctx: PrecisionContext, s) -> mp.mpc:
    if is_nonpositive_integer(s):
        raise PoleError(f"Gamma has a pole at {s}")
    return verified(ctx, lambda: mp.mpc(gamma_raw(mp.mpc(s))))


def gauss_multiplication_residual(ctx: PrecisionContext, s, k: int) -> mp.mpf:
    """Absolute gap between the two sides of Gauss' multiplication formula.

    Left side ``prod_{j<k} Gamma(s + j/k)``; right side
    ``(2 pi)^((k-1)/2) k^(1/2 - k s) Gamma(k s)``.  Each side is computed
    independently at twice the working precision.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    with ctx.workprec():
        s = mp.mpc(s)
    if k == 1:
        gamma_raw(s)
        return mp.mpf(0)
    with mp.workprec(2 * ctx.working_bits):
        left = mp.fprod(gamma_raw(s + mp.mpf(j) / k) for j in range(k))
        right = (
            (2 * mp.pi) ** (mp.mpf(k - 1) / 2)
            * mp.power(k, mp.mpf(1) / 2 - k * s)
            * gamma_raw(k * s)
        )
        residual = abs(left - right)
    with ctx.workprec():
        return +residual
