"""Command-line interface: ``python -m sigmalab <command> [flags]``.

Commands: sigma, kernel, verify, relation, recover, demo.  Shared flags may
also come from a ``key = value`` file given by ``--config``; flags win.
Records are appended to ``--out`` (default ``$SIGMALAB_OUT_DIR/records.jsonl``).
Exit status: 0 on success, 2 on usage errors, 1 on computation errors.
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
from dataclasses import dataclass, fields, replace

import mpmath as mp
import sympy

from . import records
from .arith import sigma_k
from .dirichlet import largest_prime_at_most, quadratic_character
from .errors import SigmaLabError
from .kernel import closed_form_polynomials, kernel_eval, kernel_quadrature_oracle
from .pnu import PnuParams, mellin_identity_oracle, pnu_analytic, pnu_direct
from .precision import PrecisionContext
from .recovery import SOURCES, RecoveryProblem, end_to_end_demo, random_semiprimes, recover_factor, recovery_context
from .relation import (
    RANDOM_MODEL,
    RelationParams,
    assemble_constraints,
    digest,
    null_space,
    c0_bound,
    solve_nullspace,
    verify_relation_identity,
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    precision_bits: int = 128
    k: int = 2
    nu: int = 12
    ell: int = 0  # 0: largest prime <= x^(1/k)
    x: str | None = None
    J: int | None = None
    block_len: int | None = None
    mu_max: int | None = None
    support_gap: int | None = None
    x_trunc: int | None = None  # None: automatic truncation
    seed: int = 0
    trials: int = 1
    out: str | None = None

    def context(self) -> PrecisionContext:
        return PrecisionContext.for_bits(self.precision_bits)

    def x_value(self) -> mp.mpf:
        if self.x is None:
            raise UsageError("--x is required")
        with mp.workprec(self.precision_bits):
            return mp.mpf(self.x)

    def x_int(self) -> int:
        if self.x is None:
            raise UsageError("--x is required")
        try:
            return int(self.x)
        except ValueError:
            raise UsageError("--x must be an integer for this command") from None

    def character(self, x=None):
        ell = self.ell
        if ell == 0:
            if x is None:
                raise UsageError("--ell 0 needs --x to pick the largest prime <= x^(1/k)")
            ell = largest_prime_at_most(mp.root(mp.mpf(x), self.k))
        if ell < 3 or not sympy.isprime(ell):
            raise UsageError(f"ell = {ell} must be an odd prime")
        return quadratic_character(ell)


_INT_KEYS = {f.name for f in fields(RunConfig)} - {"x", "out"}


def _coerce(key: str, value: str):
    if key not in {f.name for f in fields(RunConfig)}:
        raise UsageError(f"unknown config key {key!r}")
    if key in _INT_KEYS:
        try:
            return int(value)
        except ValueError:
            raise UsageError(f"config key {key!r} needs an integer") from None
    return value


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; '#' starts a comment; keys use underscores or dashes."""
    out = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.precision_bits < 64:
        raise UsageError("--precision-bits must be >= 64")
    if cfg.k < 2:
        raise UsageError("--k must be >= 2")
    if cfg.nu < 1:
        raise UsageError("--nu must be >= 1")
    if cfg.ell < 0 or (cfg.ell and (cfg.ell < 3 or not sympy.isprime(cfg.ell))):
        raise UsageError("--ell must be 0 or an odd prime")
    for name in ("J", "block_len", "trials"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")
    for name in ("mu_max", "support_gap"):
        v = getattr(cfg, name)
        if v is not None and v < 0:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 0")
    if cfg.J is not None and cfg.support_gap is not None and cfg.support_gap >= cfg.J:
        raise UsageError("--support-gap must be < J")
    if cfg.x_trunc is not None and cfg.x_trunc < 1:
        raise UsageError("--x-trunc must be >= 1")
    if cfg.x is not None:
        try:
            mp.mpf(cfg.x)
        except (ValueError, TypeError):
            raise UsageError("--x must be a number") from None
    return cfg


# ---------------------------------------------------------------- commands


def _emit(writer, kind, **fields):
    writer.write(records.make_record(kind, **fields))


def cmd_sigma(cfg, args, writer):
    ctx = cfg.context()
    v = sigma_k(ctx, args.n, cfg.k)
    print(f"sigma_{cfg.k}({args.n}) = {mp.nstr(v, 20)}")
    _emit(writer, "sigma", n=args.n, k=cfg.k, bits=cfg.precision_bits, value=v)


def cmd_kernel(cfg, args, writer):
    ctx = cfg.context()
    if cfg.nu < 2:
        raise UsageError("kernel needs --nu >= 2")
    with ctx.workprec():
        y = mp.mpf(args.y)
    if y <= 0:
        raise UsageError("--y must be positive")
    kcf = closed_form_polynomials(cfg.k, cfg.nu)
    value = kernel_eval(ctx, kcf, y=y)
    print(f"closed form  I = {mp.nstr(value, 25)}")
    fields_ = dict(k=cfg.k, nu=cfg.nu, y=y, closed_form=value)
    if args.oracle:
        quad, tail = kernel_quadrature_oracle(ctx, cfg.k, cfg.nu, y)
        with ctx.workprec():
            diff = abs(value - quad)
        print(f"quadrature   I = {mp.nstr(quad, 25)}  (tail bound {mp.nstr(tail, 3)})")
        print(f"difference     = {mp.nstr(diff, 3)}  tolerance {ctx.target_tol:.3g}  {'ok' if diff <= ctx.target_tol else 'MISMATCH'}")
        fields_.update(quadrature=quad, tail_bound=tail, difference=diff, ok=bool(diff <= ctx.target_tol))
    _emit(writer, "kernel", **fields_)


def cmd_verify(cfg, args, writer):
    ctx = cfg.context()
    x = cfg.x_value()
    chi = cfg.character(x)
    params = PnuParams(cfg.k, cfg.nu, chi, X_trunc=cfg.x_trunc)
    direct = pnu_direct(ctx, params, x)
    oracle = mellin_identity_oracle(ctx, params, x)
    out = dict(x=x, k=cfg.k, nu=cfg.nu, ell=chi.modulus, direct=direct, oracle=oracle.value, oracle_T=oracle.T)
    with ctx.workprec():
        rel_oracle = abs(oracle.value - direct) / abs(direct)
    print(f"P_{cfg.nu}({mp.nstr(x, 10)}), k={cfg.k}, ell={chi.modulus}")
    print(f"  direct     {mp.nstr(direct, 20)}")
    print(f"  mellin     {mp.nstr(oracle.value, 20)}   rel diff {mp.nstr(rel_oracle, 3)}")
    out.update(oracle_rel_diff=rel_oracle)
    if cfg.nu >= 6 * cfg.k:
        an = pnu_analytic(ctx, params, x)
        with ctx.workprec():
            rel = abs(an.value - direct) / abs(direct)
            ratio = (direct - an.main) / an.series_total
        print(f"  expansion  {mp.nstr(an.value, 20)}   rel diff {mp.nstr(rel, 3)}   calibration ratio {mp.nstr(ratio, 12)}")
        out.update(analytic=an.value, analytic_rel_diff=rel, calibration_ratio=ratio, X_trunc=an.X_trunc)
        ok = rel_oracle <= 1e-10 and rel <= 1e-8
    else:
        print(f"  expansion  skipped (needs nu >= 6k = {6 * cfg.k})")
        ok = rel_oracle <= 1e-10
    print(f"  agreement  {'ok' if ok else 'FAILED'}")
    out["ok"] = bool(ok)
    _emit(writer, "verify", **out)


def relation_params(cfg: RunConfig, args) -> RelationParams:
    x = cfg.x_int()
    if cfg.J is None:
        raise UsageError("--J is required")
    L = math.log(x)
    J = cfg.J
    chi = cfg.character(x)
    block_len = cfg.block_len if cfg.block_len is not None else max(1, J // 2)
    mu_max = cfg.mu_max if cfg.mu_max is not None else 1
    gap = cfg.support_gap if cfg.support_gap is not None else min(J - 1, math.ceil(J / L))
    try:
        return RelationParams(
            x, J, cfg.nu, cfg.k, chi, block_len, mu_max, gap,
            use_blocks=not args.no_blocks, use_support=not args.no_support,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_relation(cfg, args, writer):
    ctx = cfg.context()
    params = relation_params(cfg, args)
    space = null_space(assemble_constraints(params))
    bound = c0_bound(params)
    ratios = []
    print(f"relation x={params.x} J={params.J} nu={params.nu} k={params.k} ell={params.ell} "
          f"block_len={params.block_len} mu_max={params.mu_max} support_gap={params.support_gap} "
          f"nullity={space.dim}")
    for t in range(cfg.trials):
        seed = cfg.seed * 100003 + t
        sol = solve_nullspace(space.system, seed, space)
        chk = verify_relation_identity(ctx, params, sol)
        c0, ratio = sol.conjecture_stat(params.J)
        ratios.append(ratio)
        print(f"  seed {seed}: |C_0| = {c0:.6g}  log|C_0|/log J = {ratio:.4f}  identity {'ok' if chk.ok else 'FAILED'}")
        _emit(
            writer, "relation_solution",
            params=params, seed=seed, digest=digest(sol.c), C0=c0, ratio=ratio,
            exact_residual_zero=sol.exact_residual_zero, block_residual=sol.block_residual,
            identity_abs_diff=chk.abs_diff, identity_ok=chk.ok, chi_zero=chk.chi_zero,
            nullity=space.dim, random_model=RANDOM_MODEL,
        )
    frac = {th: sum(r > th * params.nu for r in ratios) / len(ratios) for th in (0.1, 0.25, 0.5)}
    summary = dict(params=params, seed=cfg.seed, trials=cfg.trials, nullity=space.dim,
                   ratio_min=min(ratios), ratio_max=max(ratios),
                   ratio_median=statistics.median(ratios),
                   fraction_above=frac, c0_bound=bound, random_model=RANDOM_MODEL)
    print("  fraction with |C_0| > J^(theta nu): " + ", ".join(f"theta={k}: {v:.2f}" for k, v in frac.items()))
    _emit(writer, "relation_summary", **summary)


def cmd_recover(cfg, args, writer):
    N = args.N
    ctx = recovery_context(N, cfg.context())
    if args.y is not None:
        with ctx.workprec():
            y = mp.mpf(args.y)
        p, q = recover_factor(ctx, RecoveryProblem(N, cfg.k, y))
        print(f"{N} = {p} * {q}")
        _emit(writer, "recover", N=N, k=cfg.k, source="given", y_bar=y, factors=[p, q])
        return
    rep = end_to_end_demo(ctx, N, cfg.k, args.source, seed=cfg.seed)
    print(f"{N}: {'= ' + ' * '.join(map(str, rep.factors)) if rep.success else 'not factored'} ({args.source})")
    _emit(writer, "recover", report=rep)
    if not rep.success:
        raise SigmaLabError(rep.error or "recovery failed")


def cmd_demo(cfg, args, writer):
    ctx = cfg.context()
    cases = random_semiprimes(args.count, args.lo, args.hi, cfg.seed)
    ok = 0
    for N, p, q in cases:
        rep = end_to_end_demo(ctx, N, cfg.k, args.source, seed=cfg.seed)
        ok += rep.success and rep.factors == (p, q)
        _emit(writer, "demo", report=rep)
    print(f"{args.source}, k={cfg.k}: {ok}/{len(cases)} factored")
    _emit(writer, "demo_summary", source=args.source, k=cfg.k, seed=cfg.seed, count=len(cases), factored=ok)


# ---------------------------------------------------------------- parser


def _shared() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared")
    g.add_argument("--precision-bits", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--nu", type=int)
    g.add_argument("--ell", type=int, help="odd prime modulus; 0 picks the largest prime <= x^(1/k)")
    g.add_argument("--x")
    g.add_argument("--J", type=int)
    g.add_argument("--block-len", type=int)
    g.add_argument("--mu-max", type=int)
    g.add_argument("--support-gap", type=int)
    g.add_argument("--x-trunc", type=int, help="fixed series truncation (default: automatic)")
    g.add_argument("--seed", type=int)
    g.add_argument("--trials", type=int)
    g.add_argument("--out", help=f"record file (default ${records.OUT_DIR_ENV}/{records.DEFAULT_FILE})")
    g.add_argument("--config", help="key = value file; flags override it")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared()
    parser = argparse.ArgumentParser(prog="sigmalab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("sigma", parents=[shared], help="sigma_k(n)")
    s.add_argument("--n", type=int, required=True)
    s = sub.add_parser("kernel", parents=[shared], help="closed-form kernel, optionally against quadrature")
    s.add_argument("--y", required=True)
    s.add_argument("--oracle", action="store_true")
    sub.add_parser("verify", parents=[shared], help="three-way check of P_nu(x)")
    s = sub.add_parser("relation", parents=[shared], help="sample relations and check the identity")
    s.add_argument("--no-blocks", action="store_true")
    s.add_argument("--no-support", action="store_true")
    s = sub.add_parser("recover", parents=[shared], help="factor N from sigma_k(N)")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--source", choices=SOURCES, default="exact-oracle")
    s.add_argument("--y", help="use this approximation of sigma_k(N) instead of a source")
    s = sub.add_parser("demo", parents=[shared], help="batch recovery on random semiprimes")
    s.add_argument("--count", type=int, default=20)
    s.add_argument("--lo", type=int, default=10**3)
    s.add_argument("--hi", type=int, default=10**5)
    s.add_argument("--source", choices=SOURCES, default="exact-oracle")
    return parser


COMMANDS = {
    "sigma": cmd_sigma,
    "kernel": cmd_kernel,
    "verify": cmd_verify,
    "relation": cmd_relation,
    "recover": cmd_recover,
    "demo": cmd_demo,
}

# k defaults to 4 where recovery is involved
_COMMAND_DEFAULTS = {"recover": {"k": 4}, "demo": {"k": 4}}


def resolve_config(args) -> RunConfig:
    values = dict(_COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        values.update(read_config(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if "x" in values and values["x"] is not None:
        values["x"] = str(values["x"])
    return validate(replace(RunConfig(), **values))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on malformed flags
    try:
        cfg = resolve_config(args)
        writer = records.RecordWriter(cfg.out, args.command)
        COMMANDS[args.command](cfg, args, writer)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"sigmalab: error: {e}", file=sys.stderr)
        return 2
    except SigmaLabError as e:
        print(f"sigmalab: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


def main_exit():
    sys.exit(main())
