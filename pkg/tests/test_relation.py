import math
from dataclasses import replace
from fractions import Fraction

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigmalab.dirichlet import quadratic_character
from sigmalab.errors import InfeasibleSystem
from sigmalab.pnu import PnuParams, pnu_direct_many
from sigmalab.relation import (
    RANDOM_MODEL,
    RelationParams,
    RelationSolution,
    assemble_constraints,
    block_moments,
    build_partition,
    capital_coefficients,
    conjecture_scan,
    count_rows,
    exact_residuals,
    null_space,
    nullity,
    c0_bound,
    solve_nullspace,
    verify_relation_identity,
    analytic_residual,
)

CHI7 = quadratic_character(7)


def small(**kw):
    base = dict(x=500, J=10, nu=4, k=2, chi=CHI7, block_len=10, mu_max=0, support_gap=2)
    base.update(kw)
    return RelationParams(**base)


# ---------------------------------------------------------------- partition


def test_partition_single_block_at_default_length():
    p = RelationParams.asymptotic_defaults(10**4, J=100)
    assert p.block_len == 781
    part = build_partition(p)
    assert part.blocks == [(10**4 - 100, 10**4 + 101)]


def test_partition_blocks_of_thirty():
    p = replace(RelationParams.asymptotic_defaults(10**4, J=100), block_len=30)
    blocks = build_partition(p).blocks
    assert all(hi - lo == 30 for lo, hi in blocks[:-1])
    assert 30 <= blocks[-1][1] - blocks[-1][0] <= 60
    assert build_partition(p).merged


@settings(max_examples=60, deadline=None)
@given(J=st.integers(1, 300), L=st.integers(1, 700))
def test_partition_invariants(J, L):
    p = RelationParams(x=10**5, J=J, nu=2, k=2, chi=CHI7, block_len=L, mu_max=0, support_gap=0)
    b = build_partition(p).boundaries
    assert b[0] == p.x - J and b[-1] == p.x + J + 1
    assert all(u < v for u, v in zip(b, b[1:]))
    gaps = [v - u for u, v in zip(b, b[1:])]
    assert all(g == L for g in gaps[:-1])
    if 2 * J + 1 >= L:
        assert L <= gaps[-1] <= 2 * L
    assert len(gaps) <= 2 * J / L + 1


# ---------------------------------------------------------------- constraints


def test_two_moment_rows_and_hand_solution():
    p = small(J=2, nu=2, support_gap=0, use_blocks=False)
    sys_ = assemble_constraints(p)
    assert [r.coeffs for r in sys_.rows] == [(1, 1, 1, 1, 1), (-2, -1, 0, 1, 2)]
    c = dict(zip(range(-2, 3), map(Fraction, (1, -1, 0, -1, 1))))
    assert exact_residuals(sys_, c) == [0, 0]


def test_asymptotic_defaults_are_infeasible_at_ten_thousand():
    # The count formula gives far more rows than the 2J + 1 unknowns.
    for rule in ("log2", "log3"):
        p = RelationParams.asymptotic_defaults(10**4, J=100, mu_rule=rule)
        assert sum(count_rows(p).values()) >= 2 * p.J + 1
        with pytest.raises(InfeasibleSystem):
            assemble_constraints(p)


def test_row_counts_match_formula():
    p = small()
    sys_ = assemble_constraints(p)
    assert sys_.counts() == count_rows(p) == {"moment": 4, "support": 3, "block": 2 * 5}


def test_support_rows_force_zeros():
    p = small(support_gap=3)
    sol = solve_nullspace(assemble_constraints(p), 11)
    assert all(sol.c[j] == 0 for j in range(-2, 3))
    assert any(sol.c[j] != 0 for j in (-3, 3, -4, 4))


# ---------------------------------------------------------------- null space


def test_solution_exact_and_normalized():
    sys_ = assemble_constraints(small(J=2, nu=2, support_gap=0, use_blocks=False))
    for seed in range(5):
        sol = solve_nullspace(sys_, seed)
        assert sol.exact_residual_zero
        assert all(r == 0 for r in exact_residuals(sys_, sol.c))
        assert max(abs(v) for v in sol.c.values()) == 1
        assert sol.random_model == RANDOM_MODEL


def test_seeds_are_deterministic_and_independent():
    sys_ = assemble_constraints(small(J=2, nu=2, support_gap=0, use_blocks=False))
    a, a2, b = solve_nullspace(sys_, 1), solve_nullspace(sys_, 1), solve_nullspace(sys_, 2)
    assert a.c == a2.c
    va, vb = [a.c[j] for j in range(-2, 3)], [b.c[j] for j in range(-2, 3)]
    minors = [va[i] * vb[j] - va[j] * vb[i] for i in range(5) for j in range(i + 1, 5)]
    assert any(m != 0 for m in minors)


def test_block_rows_hold_to_declared_precision():
    p = small()
    sys_ = assemble_constraints(p)
    for seed in range(3):
        sol = solve_nullspace(sys_, seed)
        assert sol.exact_residual_zero
        assert sol.block_residual <= mp.mpf(2) ** (-p.bits + 24)


def test_leibniz_moments_on_single_block():
    # mu = 0 and m = nu .. k nu on one block imply sum_h c_h h^m = 0 for m <= nu - nu/k.
    p = small(block_len=21, support_gap=0)
    sys_ = assemble_constraints(p)
    sol = solve_nullspace(sys_, 4)
    m_top = p.nu - p.nu // p.k
    (per,) = block_moments(sys_, sol.c, m_top)
    for val, mag in per:
        assert abs(val) <= Fraction(1, 10**50) * mag


def test_nullity_grows_with_J():
    for blocks in (False, True):
        a = nullity(assemble_constraints(small(J=10, block_len=10, use_blocks=blocks)))
        b = nullity(assemble_constraints(small(J=20, block_len=10, use_blocks=blocks)))
        assert b > a


def test_nullity_without_blocks_is_unknowns_minus_rows():
    p = small(use_blocks=False)
    assert nullity(assemble_constraints(p)) == 21 - 4 - 3


# ---------------------------------------------------------------- C_j


def test_capital_coefficients_example():
    c = {-2: Fraction(1), -1: Fraction(-1), 1: Fraction(-1), 2: Fraction(1)}
    C = capital_coefficients(c, 2, 2)
    assert C[0] == 1
    assert C[2] == 0


def test_capital_coefficients_brute_force():
    c = {j: Fraction((3 * j * j - 7 * j + 2) % 11 - 5, 3) for j in range(-4, 5)}
    for nu in (1, 2, 3, 5):
        C = capital_coefficients(c, nu, 4)
        for j in range(-4, 5):
            direct = sum(c[i] * (i - j) ** (nu - 1) for i in range(j, 5) if nu == 1 or i > j)
            assert C[j] == direct


# ---------------------------------------------------------------- identity


@pytest.fixture(scope="module")
def identity_setup():
    p = small()
    return p, assemble_constraints(p)


def test_relation_identity_holds(ctx, identity_setup):
    p, sys_ = identity_setup
    space = null_space(sys_)
    for seed in range(3):
        sol = solve_nullspace(sys_, seed, space)
        chk = verify_relation_identity(ctx, p, sol)
        assert chk.ok
        assert chk.abs_diff <= 1e-10 * max(1, abs(chk.lhs))


def test_relation_identity_zero_vector(ctx, identity_setup):
    p, _ = identity_setup
    zero = {j: Fraction(0) for j in range(-p.J, p.J + 1)}
    sol = RelationSolution(zero, capital_coefficients(zero, p.nu, p.J), True, None, 0, None)
    chk = verify_relation_identity(ctx, p, sol)
    assert chk.lhs == 0 and chk.rhs == 0


def test_relation_identity_fails_off_moment_rows(ctx, identity_setup):
    p, sys_ = identity_setup
    sol = solve_nullspace(sys_, 0)
    c = dict(sol.c)
    c[p.J] += Fraction(1, 3)
    bad = RelationSolution(c, capital_coefficients(c, p.nu, p.J), False, None, 0, None)
    assert not verify_relation_identity(ctx, p, bad).ok


def test_chi_zero_positions_logged(ctx, identity_setup):
    p, sys_ = identity_setup
    chk = verify_relation_identity(ctx, p, solve_nullspace(sys_, 0))
    assert chk.chi_zero == tuple(j for j in range(-p.J, p.J + 1) if (p.x + j) % 7 == 0)


# ---------------------------------------------------------------- analytic residual


@pytest.fixture(scope="module")
def analytic_case(ctx):
    p = small(nu=12, support_gap=0, use_blocks=False)
    sol = solve_nullspace(assemble_constraints(p), 5)
    return p, sol, analytic_residual(ctx, p, sol)


def test_main_term_cancels(analytic_case):
    _, _, r = analytic_case
    assert abs(r.main) <= 1e-25 * r.main_scale


def test_series_L_cancels_per_m(analytic_case):
    p, _, r = analytic_case
    assert sorted(r.series_L) == list(range(2, p.nu + 1))
    for m, v in r.series_L.items():
        assert abs(v) <= 1e-25 * r.series_L_scale, m


def test_analytic_combination_matches_direct(ctx, analytic_case):
    p, sol, r = analytic_case
    vals = pnu_direct_many(ctx, PnuParams(p.k, p.nu, p.chi), [p.x + j for j in range(-p.J, p.J + 1)])
    with ctx.workprec():
        direct = mp.fsum(mp.mpf(sol.c[j].numerator) / sol.c[j].denominator * v for j, v in zip(range(-p.J, p.J + 1), vals))
        total = r.main + r.series + mp.fsum(r.series_L.values())
        assert abs(total - direct) <= r.noise_floor + 1e-25 * r.reference_scale
    assert mp.isfinite(r.suppression) and r.suppression < 1


def test_analytic_residual_needs_large_nu(ctx):
    from sigmalab.errors import DomainError

    p = small(use_blocks=False)
    with pytest.raises(DomainError):
        analytic_residual(ctx, p, solve_nullspace(assemble_constraints(p), 0))


# ---------------------------------------------------------------- scan


def test_scan_single_trial_finite():
    rep = conjecture_scan(small(), 1, 0)
    assert len(rep.trials) == 1 and math.isfinite(rep.trials[0].ratio)
    assert set(rep.fraction_above) == {0.1, 0.25, 0.5}


def test_scan_deterministic():
    a, b = conjecture_scan(small(), 3, 7), conjecture_scan(small(), 3, 7)
    assert a == b


def test_scan_below_c0_bound():
    p = small(block_len=21, support_gap=0)
    rep = conjecture_scan(p, 5, 1)
    assert rep.c0_bound == pytest.approx(c0_bound(p))
    assert all(t.C0 <= rep.c0_bound for t in rep.trials)
    assert all(t.below_c0_bound for t in rep.trials)
