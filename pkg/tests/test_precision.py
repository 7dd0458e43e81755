import random

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigmalab.errors import PoleError, PrecisionError
from sigmalab.precision import (
    PrecisionContext,
    eval_gamma,
    gauss_multiplication_residual,
    verified,
)


def test_context_validation():
    with pytest.raises(ValueError):
        PrecisionContext(working_bits=32)
    with pytest.raises(ValueError):
        PrecisionContext(working_bits=64, target_tol=1e-40)
    ctx = PrecisionContext.for_bits(96)
    assert ctx.target_tol == pytest.approx(2.0 ** -72)
    assert ctx.doubled().working_bits == 192


def test_gamma_examples(ctx):
    assert eval_gamma(ctx, 1) == 1
    assert abs(eval_gamma(ctx, 6) - 120) < 1e-30
    with mp.workprec(200):
        assert abs(eval_gamma(ctx, mp.mpf(1) / 2) - mp.sqrt(mp.pi)) < 1e-30


@pytest.mark.parametrize("s", [0, -1, -7])
def test_gamma_poles(ctx, s):
    with pytest.raises(PoleError):
        eval_gamma(ctx, s)


def test_multiplication_formula(ctx):
    assert gauss_multiplication_residual(ctx, 2, 1) == 0
    assert gauss_multiplication_residual(ctx, 1, 2) <= ctx.target_tol
    assert gauss_multiplication_residual(ctx, mp.mpc(1.5, 5), 3) <= ctx.target_tol
    with pytest.raises(PoleError):
        gauss_multiplication_residual(ctx, -1, 3)


def test_gamma_recurrence_on_random_grid(ctx):
    rng = random.Random(7)
    for _ in range(100):
        s = mp.mpc(rng.uniform(-20, 20), rng.uniform(-20, 20))
        if abs(s) > 20:
            s = s * 19 / abs(s)
        with ctx.workprec():
            s1 = s + 1
        g1 = eval_gamma(ctx, s1)
        with ctx.workprec():
            assert abs(g1 - s * eval_gamma(ctx, s)) <= ctx.target_tol * abs(g1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 15), st.floats(-15, 15))
def test_gamma_conjugation(re, im):
    ctx = PrecisionContext()
    s = mp.mpc(re, im)
    a = eval_gamma(ctx, mp.conj(s))
    with ctx.workprec():
        b = mp.conj(eval_gamma(ctx, s))
        assert abs(a - b) <= ctx.target_tol * abs(b)


def test_recomputation_stability(ctx):
    rng = random.Random(3)
    hi = ctx.doubled()
    for _ in range(20):
        s = mp.mpc(rng.uniform(0.2, 10), rng.uniform(-10, 10))
        a, b = eval_gamma(ctx, s), eval_gamma(hi, s)
        with hi.workprec():
            assert abs(a - b) < ctx.target_tol * abs(b)


def test_escalation_exhaustion():
    # a "function" whose value depends on the precision at the 2^-20 level never settles
    ctx = PrecisionContext(working_bits=64, target_tol=1e-12, max_escalations=1)
    with pytest.raises(PrecisionError):
        verified(ctx, lambda: mp.mpf(mp.mp.prec) * 2**-20)
