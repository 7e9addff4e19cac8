"""Regularized softmax regression: exact calculus, spectral certificates,
leverage-score Hessian sketching and (approximate) Newton solvers."""

from .errors import (
    DivergenceError,
    IterationCapError,
    NonFiniteError,
    NotPositiveDefiniteError,
    OracleFailure,
    RankDeficientError,
    SoftmaxNewtonError,
)
from .problem import (
    AssumptionReport,
    ProblemInstance,
    generate_oracle,
    generate_trivial,
    validate,
)
from .sketch import SketchConfig, SparseDiagonal, certify_sandwich, leverage_scores, subsample
from .softmax_core import (
    HessianDecomposition,
    SoftmaxState,
    alpha,
    gradient_exp,
    gradient_total,
    hessian_apply,
    hessian_decomposed,
    hessian_materialize,
    loss_exp,
    loss_reg,
    loss_total,
    softmax_f,
)
from .solver import (
    SolverConfig,
    SolverTrace,
    choose_T,
    newton_step_exact,
    newton_step_sketched,
    solve,
)

__version__ = "0.1.0"
