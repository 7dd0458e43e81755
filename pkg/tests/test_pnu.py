import random
from fractions import Fraction

import mpmath as mp
import pytest

from sigmalab.dirichlet import character_mod_prime, quadratic_character
from sigmalab.errors import DomainError, TailTooLarge, TruncationError
from sigmalab.pnu import (
    PnuParams,
    calibrate,
    mellin_identity_oracle,
    mellin_tail_bound,
    phase_expansion,
    phase_terms,
    pnu_analytic,
    pnu_direct,
    pnu_direct_many,
    sign_product,
)

K2 = PnuParams(2, 12, quadratic_character(7))
K3 = PnuParams(3, 18, quadratic_character(3))


def rel(a, b):
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------- direct


def test_direct_examples(ctx):
    p = PnuParams(2, 2, quadratic_character(3))
    assert pnu_direct(ctx, p, 0.5) == 0
    assert pnu_direct(ctx, p, 2) == 1
    with pytest.raises(DomainError):
        pnu_direct(ctx, p, -1)


def test_direct_continuity(ctx):
    for n in (5, 17):
        gaps = []
        for h in (1e-2, 1e-4, 1e-6):
            lo, hi = pnu_direct_many(ctx, K2, [n - h, n + h])
            gaps.append(abs(hi - lo))
        assert gaps[0] > gaps[1] > gaps[2]


def test_direct_many_matches_single(ctx):
    xs = [3.5, 10.25, 40.5]
    many = pnu_direct_many(ctx, K2, xs)
    for x, v in zip(xs, many):
        assert v == pnu_direct(ctx, K2, x)


# ---------------------------------------------------------------- phase terms


@pytest.mark.parametrize("k", range(2, 7))
@pytest.mark.parametrize("parity", [1, -1])
def test_extremal_phase_terms(ctx, k, parity):
    terms = phase_terms(k, parity, ctx)
    assert len(terms) == k + 1
    with ctx.workprec():
        c0 = mp.expjpi(-mp.mpf(k - 1) / 4)
        ck = (-parity) ** k * mp.expjpi(mp.mpf(k - 1) / 4)
        assert abs(terms[0].C - c0) < 1e-30 and terms[0].omega == 1
        assert abs(terms[k].C - ck) < 1e-30 and terms[k].omega == -1
        if k % 2:
            # the closed form -chi(-1)^k e^{i pi (k-1)/4} agrees for odd k
            assert abs(terms[k].C + parity**k * mp.expjpi(mp.mpf(k - 1) / 4)) < 1e-30
        for t in terms[1:-1]:
            assert abs(t.omega) <= 1 - Fraction(2, k)
            assert abs(t.C) <= 2**k


@pytest.mark.parametrize("k", range(2, 7))
def test_phase_expansion_completeness(ctx, k):
    rng = random.Random(k)
    for parity in (1, -1):
        terms = phase_terms(k, parity, ctx)
        for _ in range(100):
            with ctx.workprec():
                s = mp.mpc(rng.uniform(-5, 5), rng.uniform(-5, 5))
                if abs(s) > 5:
                    s *= 5 / abs(s)
                a, b = phase_expansion(terms, s, k), sign_product(s, k, parity)
                assert abs(a - b) <= ctx.target_tol * max(1, abs(b))


def test_phase_k2_even_three_terms(ctx):
    terms = phase_terms(2, 1, ctx)
    assert [t.r for t in terms] == [0, 1, 2]


# ---------------------------------------------------------------- analytic vs direct vs oracle


@pytest.mark.parametrize("x", [30.5, 50.5, 100.5])
def test_analytic_matches_direct_k2(ctx, x):
    d = pnu_direct(ctx, K2, x)
    a = pnu_analytic(ctx, K2, x)
    assert rel(a.value, d) < 1e-8


def test_oracle_examples(ctx):
    p5 = PnuParams(2, 12, quadratic_character(5))
    assert rel(mellin_identity_oracle(ctx, p5, 30.5).value, pnu_direct(ctx, p5, 30.5)) < 1e-10
    assert rel(mellin_identity_oracle(ctx, K3, 50.5).value, pnu_direct(ctx, K3, 50.5)) < 1e-10


def test_oracle_near_zero(ctx):
    big = abs(mellin_identity_oracle(ctx, K2, 5.5).value)
    for x in (0.5, 0.1):
        assert abs(mellin_identity_oracle(ctx, K2, x).value) < 1e-12 * big


def test_oracle_complex_character(ctx):
    p = PnuParams(2, 12, character_mod_prime(5, 1))
    d = pnu_direct(ctx, p, 40.5)
    assert rel(mellin_identity_oracle(ctx, p, 40.5).value, d) < 1e-10
    assert rel(pnu_analytic(ctx, p, 40.5).value, d) < 1e-8


def test_oracle_tail_checks(ctx):
    assert mellin_tail_bound(K2, 50.5, 64) > mellin_tail_bound(K2, 50.5, 128)
    with pytest.raises(TailTooLarge):
        mellin_identity_oracle(ctx, K2, 50.5, T=4)


@pytest.mark.parametrize(
    "params,xs",
    [(K2, [23.5, 47.5, 88.5, 141.5, 199.5]), (K3, [24.5, 50.5, 90.5, 150.5, 195.5])],
)
def test_three_way_grid(ctx, params, xs):
    for x in xs:
        d = pnu_direct(ctx, params, x)
        assert rel(mellin_identity_oracle(ctx, params, x).value, d) < 1e-10
        assert rel(pnu_analytic(ctx, params, x).value, d) < 1e-8


def test_small_x_cancels(ctx):
    a = pnu_analytic(ctx, K2, 0.9, abs_tol=1e-3)
    assert abs(a.value) <= 1e-15 * a.scale


def test_tail_bound_soundness(ctx):
    a = pnu_analytic(ctx, K2, 50.5)
    wider = PnuParams(K2.k, K2.nu, K2.chi, X_trunc=4 * a.X_trunc)
    b = pnu_analytic(ctx, wider, 50.5)
    assert abs(a.value - b.value) < a.tail_bound


def test_truncation_error(ctx):
    p = PnuParams(2, 12, quadratic_character(7), X_trunc=2)
    with pytest.raises(TruncationError):
        pnu_analytic(ctx, p, 50.5)


def test_domain_nu_small(ctx):
    with pytest.raises(DomainError):
        pnu_analytic(ctx, PnuParams(2, 11, quadratic_character(7)), 50.5)


def test_term_records_add_up(ctx):
    a = pnu_analytic(ctx, K2, 50.5)
    recs = a.term_records(ctx)
    kinds = {r.kind for r in recs}
    assert kinds == {"main", "series", "series_L"}
    assert all(r.m >= K2.nu for r in recs if r.kind == "series")
    with ctx.workprec():
        total = mp.fsum(r.value for r in recs)
        biggest = max(abs(r.value) for r in recs)
        # the u-split reintroduces cancellation, so only roundoff on the largest addend is owed
        assert abs(total - a.value) < len(recs) * 2.0**-120 * biggest


def test_conjugate_blocks_for_real_character(ctx):
    a = pnu_analytic(ctx, K2, 30.5)
    with ctx.workprec():
        assert abs(a.blocks[0].series - mp.conj(a.blocks[2].series)) == 0
        assert abs(mp.im(a.value)) < 1e-20 * abs(a.value)


def test_calibration_derived_and_printed(ctx):
    xs = [30.5, 50.5, 100.5]
    rep = calibrate(ctx, K2, xs)
    assert rep.constant
    assert abs(rep.ratio - 1) < 1e-8
    assert max(rep.rel_errors) < 1e-8
    printed = calibrate(ctx, K2, xs, convention="printed")
    # the printed signs do not differ from the derived ones by a single constant
    assert not printed.constant


def test_params_validation():
    chi = quadratic_character(7)
    with pytest.raises(ValueError):
        PnuParams(1, 12, chi)
    with pytest.raises(ValueError):
        PnuParams(2, 12, chi, X_trunc=0)
    with pytest.raises(ValueError):
        PnuParams(2, 12, chi, delta=1.5)
    p = PnuParams(2, 12, chi, delta=PnuParams.asymptotic_delta(1e4, 0.1))
    assert p.c == 6
    assert p.asymptotic_truncation(1e4) > 1e4
