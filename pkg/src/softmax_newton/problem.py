"""Problem instances, assumption checks and synthetic generators.

An instance is the triple ``(A, b, w)`` of the regularized objective

    L(x) = 0.5 * || softmax(A x) - b ||^2 + 0.5 * || diag(w) A x ||^2

together with optional metadata (``l``, ``R``, ``seed``) carried through the
on-disk bundle format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InstanceError, NonFiniteError, OracleFailure, RankDeficientError
from .linalg import LOG_FLOAT_MAX, singular_values, unit_sphere

# floor on R assumed by the convergence guarantee; reported, never enforced
R_FLOOR = 10.0
RANK_RTOL = 1e-12
# roundoff allowance on ||b||_1 <= 1 (a softmax output sums to 1 only up to ulps)
B_L1_TOL = 1e-12

CONVEXITY_W_BASE = 4.0
SKETCH_W_BASE = 100.0

Mode = Literal["convexity", "sketch"]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    A: np.ndarray
    b: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).ravel()
        w = np.array(self.w, dtype=float).ravel()
        if A.ndim != 2:
            raise InstanceError(f"A must be 2-D, got shape {A.shape}")
        n, d = A.shape
        if n < 1 or d < 1:
            raise InstanceError("A must have at least one row and one column")
        if n < d:
            raise InstanceError(f"need n >= d for full column rank, got n={n}, d={d}")
        if b.shape != (n,) or w.shape != (n,):
            raise InstanceError(
                f"b and w must have length n={n}, got {b.shape} and {w.shape}"
            )
        for name, arr in (("A", A), ("b", b), ("w", w)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def w2(self) -> np.ndarray:
        return self.w * self.w

    @property
    def R(self) -> float | None:
        R = self.meta.get("R")
        return None if R is None else float(R)

    @property
    def l(self) -> float | None:
        l = self.meta.get("l")
        return None if l is None else float(l)


@dataclass(frozen=True)
class AssumptionReport:
    mode: str
    l: float
    R: float
    A_norm: float
    sigma_min: float
    min_w2: float
    w_threshold: float
    log_beta_lower: float
    log_M_upper: float
    b_nonneg: bool
    b_l1_ok: bool
    w_ok: bool
    A_norm_ok: bool
    # informational flags; not part of ``passed``
    R_floor_ok: bool
    b_l2_le_R: bool

    @property
    def beta_lower(self) -> float:
        return math.exp(self.log_beta_lower)

    @property
    def M_upper(self) -> float:
        return math.exp(self.log_M_upper) if self.log_M_upper < LOG_FLOAT_MAX else math.inf

    @property
    def M_overflow(self) -> bool:
        return self.log_M_upper >= LOG_FLOAT_MAX

    @property
    def passed(self) -> bool:
        return self.b_nonneg and self.b_l1_ok and self.w_ok and self.A_norm_ok

    def failures(self) -> list[str]:
        names = {
            "b_nonneg": self.b_nonneg,
            "b_l1_le_1": self.b_l1_ok,
            "w_threshold": self.w_ok,
            "A_norm_le_R": self.A_norm_ok,
        }
        return [k for k, ok in names.items() if not ok]

    def lines(self) -> list[str]:
        return [
            f"mode={self.mode}",
            f"l={self.l:.17g}",
            f"R={self.R:.17g}",
            f"A_norm={self.A_norm:.17g}",
            f"sigma_min={self.sigma_min:.17g}",
            f"min_w2={self.min_w2:.17g}",
            f"w2_threshold={self.w_threshold:.17g}",
            f"beta_lower={self.beta_lower:.17g}",
            f"log_M_upper={self.log_M_upper:.17g}",
            f"M_upper={'overflow' if self.M_overflow else format(self.M_upper, '.17g')}",
            f"b_nonneg={self.b_nonneg}",
            f"b_l1_le_1={self.b_l1_ok}",
            f"w_threshold={self.w_ok}",
            f"A_norm_le_R={self.A_norm_ok}",
            f"R_floor_10={self.R_floor_ok}",
            f"b_l2_le_R={self.b_l2_le_R}",
        ]


def log_bounds(n: int, R: float) -> tuple[float, float]:
    """``(log beta_lower, log M_upper)`` with beta >= exp(-R^2), M <= n^1.5 exp(30 R^2)."""
    return -R * R, 1.5 * math.log(n) + 30.0 * R * R


def column_rank_check(A: np.ndarray) -> np.ndarray:
    s = singular_values(A)
    if s[-1] <= RANK_RTOL * s[0] or s[0] == 0.0:
        raise RankDeficientError(float(s[-1]), float(s[0]))
    return s


def validate(
    inst: ProblemInstance, l: float, mode: Mode = "convexity", R: float | None = None
) -> AssumptionReport:
    """Check the hypotheses of the convexity/sketching results for ``inst``.

    ``R`` defaults to the value stored in the instance metadata and otherwise to
    ``max(10, ||A||)``.
    """
    if not l > 0:
        raise ValueError(f"l must be positive, got {l}")
    if mode not in ("convexity", "sketch"):
        raise ValueError(f"unknown mode {mode!r}")
    for name, arr in (("A", inst.A), ("b", inst.b), ("w", inst.w)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{name} contains non-finite entries")
    s = column_rank_check(inst.A)
    A_norm, sigma_min = float(s[0]), float(s[-1])
    if R is None:
        R = inst.R if inst.R is not None else max(R_FLOOR, A_norm)
    base = CONVEXITY_W_BASE if mode == "convexity" else SKETCH_W_BASE
    threshold = base + l / sigma_min**2
    w2 = inst.w2
    log_beta, log_M = log_bounds(inst.n, R)
    return AssumptionReport(
        mode=mode,
        l=float(l),
        R=float(R),
        A_norm=A_norm,
        sigma_min=sigma_min,
        min_w2=float(w2.min()),
        w_threshold=threshold,
        log_beta_lower=log_beta,
        log_M_upper=log_M,
        b_nonneg=bool(np.all(inst.b >= 0)),
        b_l1_ok=bool(math.fsum(np.abs(inst.b)) <= 1.0 + B_L1_TOL),
        w_ok=bool(np.all(w2 >= threshold)),
        A_norm_ok=bool(A_norm <= R),
        R_floor_ok=bool(R >= R_FLOOR),
        b_l2_le_R=bool(np.linalg.norm(inst.b) <= R),
    )


def _draw_A_w(n, d, R, l, margin, rng):
    if not n >= d >= 1:
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    if not R > 0 or not l > 0:
        raise ValueError("R and l must be positive")
    A = rng.standard_normal((n, d))
    A *= R / singular_values(A)[0]
    s = singular_values(A)
    # guard against one-ulp overshoot of the norm after rescaling
    if s[0] > R:
        A *= R / s[0] * (1 - 1e-15)
        s = singular_values(A)
    sigma_min = float(s[-1])
    w2 = SKETCH_W_BASE + l / sigma_min**2 + margin * (1.0 + rng.random(n))
    return A, np.sqrt(w2)


def generate_trivial(
    n: int, d: int, R: float, l: float, seed: int, margin: float = 1.0
) -> tuple[ProblemInstance, np.ndarray]:
    """Instance whose optimum is ``x* = 0`` by construction.

    ``b`` is the uniform distribution ``f(0)``, so both gradient terms vanish
    at the origin. Weights satisfy ``w_i^2 = 100 + l/sigma_min^2 + margin_i``
    with ``margin_i`` drawn from ``[margin, 2*margin)``.
    """
    rng = np.random.default_rng(seed)
    A, w = _draw_A_w(n, d, R, l, margin, rng)
    b = np.full(n, 1.0 / n)
    meta = {"l": float(l), "R": float(R), "seed": int(seed), "kind": "trivial"}
    return ProblemInstance(A, b, w, meta), np.zeros(d)


def generate_oracle(
    n: int,
    d: int,
    R: float,
    l: float,
    target_radius: float,
    seed: int,
    margin: float = 1.0,
    grad_tol: float = 1e-11,
    max_iter: int = 200_000,
) -> tuple[ProblemInstance, np.ndarray]:
    """Instance with ``b = f(x_ref)`` and an optimum found by gradient descent.

    ``A`` and ``w`` are the ones ``generate_trivial`` draws for the same seed.
    The optimum comes from plain gradient descent with backtracking, which is
    independent of the Newton machinery it is used to check. The achieved
    gradient norm is stored in ``inst.meta["oracle_grad_norm"]``.
    """
    from .softmax_core import softmax_f

    if target_radius < 0:
        raise ValueError("target_radius must be nonnegative")
    rng = np.random.default_rng(seed)
    A, w = _draw_A_w(n, d, R, l, margin, rng)
    x_ref = target_radius * unit_sphere(rng, d)
    meta = {"l": float(l), "R": float(R), "seed": int(seed), "kind": "oracle",
            "target_radius": float(target_radius)}
    probe = ProblemInstance(A, np.zeros(n), w, meta)
    b = softmax_f(probe, x_ref).f
    inst = ProblemInstance(A, b, w, meta)

    x, gnorm, iters = descent_oracle(inst, np.zeros(d), grad_tol, max_iter)
    inst.meta["oracle_grad_norm"] = gnorm
    inst.meta["oracle_iters"] = iters
    return inst, x


def descent_oracle(
    inst: ProblemInstance, x0: np.ndarray, grad_tol: float = 1e-11, max_iter: int = 200_000
) -> tuple[np.ndarray, float, int]:
    """Gradient descent with Armijo backtracking down to ``||g|| <= grad_tol``."""
    from .softmax_core import gradient_total, loss_total, softmax_f

    A_norm = singular_values(inst.A)[0]
    # curvature bound: B(x) <= 8 I, so H <= ||A||^2 (max w^2 + 8)
    step0 = 1.0 / (A_norm**2 * (inst.w2.max() + 8.0))
    x = np.array(x0, dtype=float)
    st = softmax_f(inst, x)
    loss = loss_total(st, inst)
    g = gradient_total(st, inst)
    gnorm = float(np.linalg.norm(g))
    step = step0
    for it in range(max_iter):
        if gnorm <= grad_tol:
            return x, gnorm, it
        step = min(2.0 * step, 64.0 * step0)
        while True:
            x_new = x - step * g
            st_new = softmax_f(inst, x_new)
            loss_new = loss_total(st_new, inst)
            # step0 is a guaranteed descent step; larger ones must pass Armijo
            if step <= step0 or loss_new <= loss - 0.5 * step * gnorm**2:
                break
            step *= 0.5
        x, st, loss = x_new, st_new, loss_new
        g = gradient_total(st, inst)
        gnorm = float(np.linalg.norm(g))
    if gnorm <= grad_tol:
        return x, gnorm, max_iter
    raise OracleFailure(gnorm, max_iter)
