"""Short linear relations among sigma_k(N + j) chi(N + j).

For coefficients c_j on j = -J..J annihilated by the moment rows

    sum_j j^h c_j = 0,   h = 0 .. nu - 1,

the combination sum_j c_j P_nu(x + j) collapses onto the window:

    sum_j c_j P_nu(x + j) = sum_j C_j sigma_k(x + j) chi(x + j),
    C_j = sum_{i >= j} c_i (i - j)^(nu - 1).

Block rows (per block alpha of the window, mu = 0..mu_max, m = nu..k nu)

    sum_h c_{alpha,h} ((x_alpha + h)^(1/k) - x_alpha^(1/k))^mu (x_alpha + h)^(nu - m/k) = 0

additionally kill the singular-series part of the combination, and support
rows c_j = 0 for |j| < support_gap keep the weight away from the centre.

Moment and support rows are exact integers.  Block rows are irrational; they
are evaluated at a declared precision (``bits``), scaled to unit maximum,
and the null space is computed in that precision.  Solutions are always
exact rationals inside the null space of the integer rows, so those rows are
satisfied exactly.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from fractions import Fraction

import mpmath as mp
import numpy as np
import sympy

from .arith import sigma_k
from .dirichlet import DirichletCharacter, largest_prime_at_most, quadratic_character
from .errors import InfeasibleSystem, RankError
from .pnu import PnuParams, pnu_analytic, pnu_direct_many
from .precision import PrecisionContext

RANDOM_MODEL = "gaussian coefficients on an orthonormalized null-space basis, max-normalized"


@dataclass(frozen=True)
class RelationParams:
    x: int
    J: int
    nu: int
    k: int
    chi: DirichletCharacter
    block_len: int
    mu_max: int
    support_gap: int
    use_blocks: bool = True
    use_support: bool = True
    bits: int = 256

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")
        if self.mu_max < 0:
            raise ValueError("mu_max must be >= 0")
        if not 0 <= self.support_gap < self.J:
            raise ValueError("need 0 <= support_gap < J")
        if self.x - self.J < 1:
            raise ValueError("window must stay in n >= 1")
        if self.nu < 1 or self.k < 2:
            raise ValueError("need nu >= 1 and k >= 2")

    @property
    def ell(self) -> int:
        return self.chi.modulus

    @property
    def c(self) -> Fraction:
        return Fraction(self.nu, self.k)

    @classmethod
    def asymptotic_defaults(
        cls,
        x: int,
        *,
        eps: float = 0.5,
        k: int = 2,
        J: int | None = None,
        nu: int | None = None,
        mu_rule: str = "log2",
        **overrides,
    ) -> "RelationParams":
        """Asymptotic parameter choices evaluated at x.

        J = x^delta with delta = 1/(log x)^(1-eps), nu = [(log x)^(1-eps/2)],
        block_len = [log^3 x], mu_max = [log^2 x] (``mu_rule="log3"``:
        [log^3 x]), support_gap = ceil(J / log x), ell the largest prime
        <= x^(1/k).
        """
        L = math.log(x)
        if J is None:
            J = max(1, int(x ** (1 / L ** (1 - eps))))
        if nu is None:
            nu = max(1, int(L ** (1 - eps / 2)))
        if mu_rule not in ("log2", "log3"):
            raise ValueError("mu_rule must be 'log2' or 'log3'")
        mu_max = int(L**2) if mu_rule == "log2" else int(L**3)
        ell = largest_prime_at_most(x ** (1 / k))
        chi = quadratic_character(ell) if ell > 2 else quadratic_character(3)
        values = dict(
            x=x,
            J=J,
            nu=nu,
            k=k,
            chi=chi,
            block_len=max(1, int(L**3)),
            mu_max=mu_max,
            support_gap=min(J - 1, math.ceil(J / L)),
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def scaled_defaults(cls, x: int, J: int, nu: int, k: int = 2, **overrides) -> "RelationParams":
        """Desk-scale analogue: two blocks of about J each, mu_max = 1."""
        L = math.log(x)
        ell = largest_prime_at_most(x ** (1 / k))
        values = dict(
            x=x,
            J=J,
            nu=nu,
            k=k,
            chi=quadratic_character(ell),
            block_len=max(1, J // 2),
            mu_max=1,
            support_gap=min(J - 1, math.ceil(J / L)),
        )
        values.update(overrides)
        return cls(**values)


# ---------------------------------------------------------------- partition


@dataclass(frozen=True)
class Partition:
    boundaries: tuple[int, ...]  # x_1 < x_2 < ... < end (exclusive), absolute positions
    merged: bool  # True when the last block absorbed a short remainder

    @property
    def blocks(self) -> list[tuple[int, int]]:
        return list(zip(self.boundaries, self.boundaries[1:]))


def build_partition(params: RelationParams) -> Partition:
    """Split [x - J, x + J] into runs of block_len; the last run takes the remainder."""
    start, stop = params.x - params.J, params.x + params.J + 1
    L = params.block_len
    count = max(1, (stop - start) // L)
    bounds = [start + i * L for i in range(count)] + [stop]
    merged = (stop - start) % L != 0 and count >= 1 and (stop - start) >= L
    return Partition(tuple(bounds), merged)


# ---------------------------------------------------------------- constraints


@dataclass(frozen=True)
class Row:
    kind: str  # "moment", "support" or "block"
    coeffs: tuple  # over j = -J..J; ints for exact rows, mpf for block rows
    label: tuple = ()


@dataclass(frozen=True)
class ConstraintSystem:
    params: RelationParams
    partition: Partition
    rows: tuple[Row, ...]

    @property
    def index(self) -> range:
        return range(-self.params.J, self.params.J + 1)

    @property
    def unknowns(self) -> int:
        return 2 * self.params.J + 1

    def counts(self) -> dict[str, int]:
        out = {"moment": 0, "support": 0, "block": 0}
        for row in self.rows:
            out[row.kind] += 1
        return out

    def exact_rows(self) -> list[Row]:
        return [r for r in self.rows if r.kind != "block"]

    def block_rows(self) -> list[Row]:
        return [r for r in self.rows if r.kind == "block"]

    def replace_row(self, i: int, row: Row) -> "ConstraintSystem":
        rows = list(self.rows)
        rows[i] = row
        return ConstraintSystem(self.params, self.partition, tuple(rows))


def count_rows(params: RelationParams, partition: Partition | None = None) -> dict[str, int]:
    """Row counts without building any row."""
    partition = partition or build_partition(params)
    blocks = len(partition.blocks) if params.use_blocks else 0
    support = (2 * params.support_gap - 1) if params.use_support and params.support_gap > 0 else 0
    per_block = (params.mu_max + 1) * (params.k * params.nu - params.nu + 1)
    return {"moment": params.nu, "support": support, "block": blocks * per_block}


def _block_rows(params: RelationParams, partition: Partition) -> list[Row]:
    J, k, nu = params.J, params.k, params.nu
    rows = []
    with mp.workprec(params.bits):
        for alpha, (lo, hi) in enumerate(partition.blocks):
            base = mp.root(lo, k)
            for mu in range(params.mu_max + 1):
                for m in range(nu, k * nu + 1):
                    vals = [mp.mpf(0)] * (2 * J + 1)
                    for pos in range(lo, hi):
                        diff = mp.root(pos, k) - base
                        vals[pos - params.x + J] = diff**mu * mp.power(pos, nu - mp.mpf(m) / k)
                    scale = max(abs(v) for v in vals)
                    if scale == 0:
                        continue  # mu >= 1 on a one-point block
                    rows.append(Row("block", tuple(v / scale for v in vals), (alpha, mu, m)))
    return rows


def assemble_constraints(params: RelationParams, partition: Partition | None = None) -> ConstraintSystem:
    partition = partition or build_partition(params)
    counts = count_rows(params, partition)
    total = sum(counts.values())
    if total >= 2 * params.J + 1:
        raise InfeasibleSystem(
            f"{total} rows ({counts}) for {2 * params.J + 1} unknowns; parameters too aggressive"
        )
    J = params.J
    rows = [
        Row("moment", tuple(j**h if (j or h) else 1 for j in range(-J, J + 1)), (h,))
        for h in range(params.nu)
    ]
    if params.use_support:
        for j0 in range(-params.support_gap + 1, params.support_gap):
            rows.append(Row("support", tuple(int(j == j0) for j in range(-J, J + 1)), (j0,)))
    if params.use_blocks:
        rows += _block_rows(params, partition)
    return ConstraintSystem(params, partition, tuple(rows))


# ---------------------------------------------------------------- null space


@dataclass(frozen=True)
class RelationSolution:
    c: dict  # j -> Fraction, max |c_j| = 1
    C: dict  # j -> Fraction
    exact_residual_zero: bool
    block_residual: mp.mpf | None
    nullity: int
    seed: int | None
    random_model: str = RANDOM_MODEL
    singular_values: tuple = field(default=(), repr=False)

    @property
    def C0(self) -> Fraction:
        return self.C.get(0, Fraction(0))

    def conjecture_stat(self, J: int) -> tuple[float, float]:
        """(|C_0|, log|C_0| / log J)."""
        c0 = abs(float(self.C0))
        ratio = math.log(c0) / math.log(J) if c0 > 0 and J > 1 else float("-inf")
        return c0, ratio


def _to_fraction(v) -> Fraction:
    sign, man, exp, _ = mp.mpf(v)._mpf_
    man, exp = (-1) ** sign * int(man), int(exp)
    return Fraction(man) * Fraction(2) ** exp if exp >= 0 else Fraction(man, 2**-exp)


def _exact_basis(system: ConstraintSystem) -> list[list[Fraction]]:
    rows = [list(r.coeffs) for r in system.exact_rows()]
    n = system.unknowns
    if not rows:
        return [[Fraction(int(i == j)) for i in range(n)] for j in range(n)]
    basis = sympy.Matrix(rows).nullspace()
    return [[Fraction(int(v.p), int(v.q)) for v in vec] for vec in basis]


def _basis_matrix(basis, n: int) -> mp.matrix:
    B = mp.matrix(n, len(basis))
    for j, vec in enumerate(basis):
        for i, v in enumerate(vec):
            if v:
                B[i, j] = mp.mpf(v.numerator) / v.denominator
    return B


def _block_matrix(system: ConstraintSystem, B: mp.matrix) -> mp.matrix:
    blocks = system.block_rows()
    rows = mp.matrix(len(blocks), system.unknowns)
    for i, row in enumerate(blocks):
        for j, a in enumerate(row.coeffs):
            if a:
                rows[i, j] = a
    return rows * B


def null_directions(system: ConstraintSystem, basis=None, bits: int | None = None):
    """Columns V (d x d0) with span(B V) = numerical null space, and the singular values.

    Rounding in (block rows) * B is about eps = 2^-bits * |B|_F * sqrt(n)
    in absolute terms.  Singular values below 2^24 eps count as zero; one in
    the band (2^24 eps, 2^44 eps] is ambiguous and raises RankError.
    """
    basis = basis if basis is not None else _exact_basis(system)
    d = len(basis)
    bits = bits or system.params.bits
    if not system.block_rows():
        with mp.workprec(bits):
            return mp.eye(d), ()
    with mp.workprec(bits):
        B = _basis_matrix(basis, system.unknowns)
        M = _block_matrix(system, B)
        U, S, V = mp.svd_r(M, full_matrices=True)
        svals = [S[i] for i in range(len(S))]
        eps = mp.mpf(2) ** (-bits) * mp.mnorm(B, "f") * mp.sqrt(system.unknowns)
        thr = mp.mpf(2) ** 24 * eps
        band = mp.mpf(2) ** 44 * eps
        if any(thr < s <= band for s in svals):
            raise RankError("singular value in the ambiguous band; raise the precision")
        # mpmath does not sort singular values; rows of V past len(S) are null too
        null = [i for i in range(d) if i >= len(svals) or svals[i] <= thr]
        Vn = mp.matrix(d, len(null))
        for col, i in enumerate(null):
            for r in range(d):
                Vn[r, col] = V[i, r]  # rows of V^T are right singular vectors
        return Vn, tuple(svals)


@dataclass(frozen=True)
class NullSpace:
    """Null space of a system: exact basis of the integer rows plus the numerical directions."""

    system: ConstraintSystem
    basis: tuple  # exact rational vectors
    directions: mp.matrix  # d x d0
    R: mp.matrix  # upper factor of (basis * directions)
    singular_values: tuple
    bits: int

    @property
    def dim(self) -> int:
        return self.directions.cols


def null_space(system: ConstraintSystem, max_escalations: int = 2) -> NullSpace:
    """Null space of the system; block rows are rebuilt at doubled precision when rank is ambiguous."""
    basis = _exact_basis(system)
    if not basis:
        raise InfeasibleSystem("integer rows alone already force c = 0")
    work = system
    for attempt in range(max_escalations + 1):
        try:
            Vn, svals = null_directions(work, basis)
            break
        except RankError:
            if attempt == max_escalations:
                raise
            work = assemble_constraints(replace(work.params, bits=2 * work.params.bits), work.partition)
    bits = work.params.bits
    if Vn.cols == 0:
        raise InfeasibleSystem("numerical null space is trivial")
    with mp.workprec(bits):
        _, R = mp.qr(_basis_matrix(basis, system.unknowns) * Vn, mode="skinny")
    return NullSpace(work, tuple(basis), Vn, R, svals, bits)


def _back_substitute(R: mp.matrix, g: list) -> mp.matrix:
    """Solve R w = g for upper-triangular R."""
    n = R.cols
    w = [mp.mpf(0)] * n
    for i in range(n - 1, -1, -1):
        w[i] = (g[i] - mp.fsum(R[i, j] * w[j] for j in range(i + 1, n))) / R[i, i]
    return mp.matrix(w)


def nullity(system: ConstraintSystem) -> int:
    return null_space(system).dim


def solve_nullspace(system: ConstraintSystem, seed: int, space: NullSpace | None = None) -> RelationSolution:
    """A seeded pseudorandom element of the null space, normalized to max |c_j| = 1.

    The draw is g ~ N(0, I) in coordinates of an orthonormal basis Q of the
    null space; Q g is expressed through the exact basis and rationalized, so
    the integer rows hold exactly.
    """
    space = space or null_space(system)
    system = space.system
    params = system.params
    basis = space.basis
    g = np.random.default_rng(seed).standard_normal(space.dim)
    n = system.unknowns
    with mp.workprec(space.bits):
        w = _back_substitute(space.R, [mp.mpf(float(t)) for t in g])
        z = space.directions * w
        zq = [_to_fraction(z[i]) for i in range(z.rows)]
    c = [sum((vec[i] * zq[j] for j, vec in enumerate(basis) if vec[i]), Fraction(0)) for i in range(n)]
    top = max(abs(v) for v in c)
    if top == 0:
        raise RankError("sampled combination vanished")
    c = {j: v / top for j, v in zip(system.index, c)}
    exact_ok = all(r == 0 for r in exact_residuals(system, c))
    block_res = block_residual(system, c) if system.block_rows() else None
    C = capital_coefficients(c, params.nu, params.J)
    return RelationSolution(c, C, exact_ok, block_res, space.dim, seed, RANDOM_MODEL, space.singular_values)


def block_residual(system: ConstraintSystem, c: dict) -> mp.mpf:
    with mp.workprec(system.params.bits):
        vec = [mp.mpf(c[j].numerator) / c[j].denominator for j in system.index]
        return max(
            (abs(mp.fsum(a * v for a, v in zip(row.coeffs, vec))) for row in system.block_rows()),
            default=mp.mpf(0),
        )


def exact_residuals(system: ConstraintSystem, c: dict) -> list[Fraction]:
    return [sum((a * c[j] for a, j in zip(row.coeffs, system.index)), Fraction(0)) for row in system.exact_rows()]


# ---------------------------------------------------------------- C_j and the identity


def capital_coefficients(c: dict, nu: int, J: int) -> dict:
    """C_j = sum_{i >= j} c_i (i - j)^(nu - 1) for j = -J..J (c_i = 0 off [-J, J])."""
    out = {}
    for j in range(-J, J + 1):
        out[j] = sum(
            (c.get(i, 0) * (i - j) ** (nu - 1) for i in range(j, J + 1) if i > j or nu == 1),
            Fraction(0),
        )
    return out


@dataclass(frozen=True)
class IdentityCheck:
    lhs: mp.mpc
    rhs: mp.mpc
    abs_diff: mp.mpf
    tol: float
    ok: bool
    chi_zero: tuple  # j with chi(x + j) = 0 (their RHS terms vanish)


def verify_relation_identity(
    ctx: PrecisionContext, params: RelationParams, solution: RelationSolution, tol: float = 1e-10
) -> IdentityCheck:
    """Both sides of sum_j c_j P_nu(x + j) = sum_j C_j sigma_k(x + j) chi(x + j)."""
    J, x = params.J, params.x
    pp = PnuParams(params.k, params.nu, params.chi)
    js = list(range(-J, J + 1))
    values = pnu_direct_many(ctx, pp, [x + j for j in js])
    with ctx.workprec(20):
        lhs = mp.fsum(_mp(solution.c[j]) * v for j, v in zip(js, values))
        rhs = mp.fsum(
            _mp(solution.C[j]) * sigma_k(ctx, x + j, params.k) * params.chi(x + j)
            for j in js
            if params.chi(x + j) != 0
        )
        diff = abs(lhs - rhs)
    chi_zero = tuple(j for j in js if params.chi(x + j) == 0)
    with ctx.workprec():
        lhs, rhs, diff = mp.mpc(lhs), mp.mpc(rhs), +diff
        return IdentityCheck(lhs, rhs, diff, tol, bool(diff <= tol * max(1, abs(lhs))), chi_zero)


def _mp(q: Fraction) -> mp.mpf:
    return mp.mpf(q.numerator) / q.denominator


@dataclass(frozen=True)
class AnalyticResidual:
    main: mp.mpc  # sum_j c_j * main term at x + j
    main_scale: mp.mpf
    series_L: dict  # m -> sum_j c_j (L-value block addend with index m, all r)
    series_L_scale: mp.mpf
    series: mp.mpc  # surviving singular-series part
    reference_scale: mp.mpf  # max_j |P_nu(x + j)|
    suppression: mp.mpf  # |series| / reference_scale
    noise_floor: mp.mpf  # tol * sum_j |c_j P_nu(x + j)|, the truncation budget of the sum
    target_third: float  # x^(delta nu / 3)
    target_half: float  # x^(delta nu / 2)


def analytic_residual(
    ctx: PrecisionContext,
    params: RelationParams,
    solution: RelationSolution,
    delta: float | None = None,
    tol: float = 1e-20,
) -> AnalyticResidual:
    """Evaluate sum_j c_j P_nu(x + j) block by block through the expansion.

    ``tol`` is the relative truncation target of each P_nu(x + j); it must sit
    well below the cancellation the relation achieves, or the surviving
    series is truncation noise.  ``delta`` defaults to log J / log x.
    """
    pp = PnuParams(params.k, params.nu, params.chi)
    pp.require_analytic()
    J, x = params.J, params.x
    main, seriesL, series, ref, budget = [], {}, [], mp.mpf(0), []
    main_scale = seriesL_scale = mp.mpf(0)
    for j in range(-J, J + 1):
        cj = solution.c[j]
        a = pnu_analytic(ctx, pp, x + j, tol=tol)
        with ctx.workprec():
            w = _mp(cj)
            ref = max(ref, abs(a.value))
            budget.append(abs(w * a.value))
            main.append(w * a.main)
            main_scale = max(main_scale, abs(a.main))
            for blk in a.blocks:
                series.append(w * blk.series)
                for m, v in blk.L_terms.items():
                    seriesL.setdefault(m, []).append(w * v)
                    seriesL_scale = max(seriesL_scale, abs(v))
    delta = delta if delta is not None else math.log(J) / math.log(x)
    with ctx.workprec():
        s = mp.fsum(series)
        return AnalyticResidual(
            mp.fsum(main),
            main_scale,
            {m: mp.fsum(v) for m, v in seriesL.items()},
            seriesL_scale,
            s,
            ref,
            abs(s) / ref,
            tol * mp.fsum(budget),
            float(x) ** (delta * params.nu / 3),
            float(x) ** (delta * params.nu / 2),
        )


# ---------------------------------------------------------------- structure checks


def block_moments(system: ConstraintSystem, c: dict, m_max: int) -> list[list[tuple[Fraction, Fraction]]]:
    """Per block: (sum_h c_{alpha,h} h^m, sum_h |c_{alpha,h}| h^m) for m = 0..m_max."""
    x = system.params.x
    out = []
    for lo, hi in system.partition.blocks:
        per = []
        for m in range(m_max + 1):
            hs = range(hi - lo)
            val = sum((c[lo + h - x] * (h**m if (h or m) else 1) for h in hs), Fraction(0))
            mag = sum((abs(c[lo + h - x]) * (h**m if (h or m) else 1) for h in hs), Fraction(0))
            per.append((val, mag))
        out.append(per)
    return out


def c0_bound(params: RelationParams) -> float:
    """c 4^nu log^3 x J^c (log x)^(3 nu) with c = nu / k."""
    L = math.log(params.x)
    c = params.nu / params.k
    return c * 4**params.nu * L**3 * params.J**c * L ** (3 * params.nu)


# ---------------------------------------------------------------- scan


@dataclass(frozen=True)
class ScanTrial:
    seed: int
    C0: float
    ratio: float  # log|C_0| / log J
    below_c0_bound: bool
    digest: str


@dataclass(frozen=True)
class ScanReport:
    trials: tuple[ScanTrial, ...]
    nullity: int
    ratio_min: float
    ratio_median: float
    ratio_max: float
    fraction_above: dict  # theta -> fraction of trials with |C_0| > J^(theta nu)
    c0_bound: float
    random_model: str = RANDOM_MODEL


def digest(c: dict) -> str:
    import hashlib

    text = ";".join(f"{j}:{v.numerator}/{v.denominator}" for j, v in sorted(c.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def conjecture_scan(
    params: RelationParams, trials: int, seed: int, thetas=(0.1, 0.25, 0.5)
) -> ScanReport:
    """Sample the null space ``trials`` times and summarize |C_0| against powers of J."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    space = null_space(assemble_constraints(params))
    bound = c0_bound(params)
    rows = []
    for t in range(trials):
        s = seed * 100003 + t
        sol = solve_nullspace(space.system, s, space)
        c0, ratio = sol.conjecture_stat(params.J)
        rows.append(ScanTrial(s, c0, ratio, c0 <= bound, digest(sol.c)))
    ratios = [r.ratio for r in rows]
    fractions = {
        th: sum(1 for r in rows if r.ratio > th * params.nu) / trials for th in sorted(set(thetas) | {0.5})
    }
    return ScanReport(
        tuple(rows),
        space.dim,
        min(ratios),
        statistics.median(ratios),
        max(ratios),
        fractions,
        bound,
    )
