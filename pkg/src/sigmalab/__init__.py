"""Arbitrary-precision experiments on divisor-type sums sigma_k(n) chi(n)."""

from .arith import a_coeff, factorize, sigma_k
from .dirichlet import DirichletCharacter, gauss_sum, l_function, quadratic_character
from .errors import SigmaLabError
from .kernel import closed_form_polynomials, kernel_eval, kernel_quadrature_oracle
from .pnu import PnuParams, mellin_identity_oracle, pnu_analytic, pnu_direct
from .precision import PrecisionContext
from .recovery import RecoveryProblem, end_to_end_demo, recover_factor
from .relation import (
    RelationParams,
    assemble_constraints,
    build_partition,
    capital_coefficients,
    conjecture_scan,
    solve_nullspace,
    verify_relation_identity,
)

__version__ = "0.1.0"
