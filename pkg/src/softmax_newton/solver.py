"""Exact and sketched Newton iterations for the regularized softmax loss."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import (
    DivergenceError,
    IterationCapError,
    NonPositiveDiagonalError,
    NotPositiveDefiniteError,
    SingularSketchError,
)
from .linalg import generalized_eig_range, singular_values, spd_solve
from .problem import R_FLOOR, ProblemInstance, log_bounds
from .sketch import SketchConfig, SparseDiagonal, subsample
from .softmax_core import (
    SoftmaxState,
    gradient_total,
    hessian_decomposed,
    hessian_materialize,
    loss_total,
    softmax_f,
)

log = logging.getLogger(__name__)

CONTRACTION = 0.4
# below this distance exp(Ax) rounds to 1 and the softmax term vanishes in
# floating point, so the one-step shrink bound is not recorded
SHRINK_FLOOR = 1e-10
TRACE_HEADER = ["iter", "loss", "grad_norm", "step_norm", "r", "contraction", "nnz", "ms"]

Mode = Literal["exact_full", "exact_diag", "sketched_diag"]
StopRule = Literal["fixed_T", "grad_norm"]


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-8
    delta: float = 0.05
    l: float = 1.0
    mode: Mode = "sketched_diag"
    max_iters: int = 100
    stop_rule: StopRule = "grad_norm"
    # None -> 1e-10 * (1 + |loss|) at the current iterate
    grad_tol: float | None = None
    sketch: SketchConfig = field(default_factory=SketchConfig)
    # replace a non-positive B_diag + W^2 by W^2 alone instead of raising
    d_fallback: bool = True
    # measure eps0 of the Hessian used at every step (costs a dense eigensolve)
    track_certificates: bool = False
    divergence_factor: float = 5.0
    R: float | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 0.1:
            raise ValueError(f"epsilon must lie in (0, 0.1), got {self.epsilon}")
        if not 0 < self.delta < 0.1:
            raise ValueError(f"delta must lie in (0, 0.1), got {self.delta}")
        if not self.l > 0:
            raise ValueError("l must be positive")
        if self.mode not in ("exact_full", "exact_diag", "sketched_diag"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.stop_rule not in ("fixed_T", "grad_norm"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")


@dataclass
class IterRecord:
    iter: int
    loss: float
    grad_norm: float
    step_norm: float = math.nan
    r: float = math.nan
    contraction: float = math.nan
    nnz: int | None = None
    ms: float = 0.0
    fallback: bool = False
    eps0_measured: float = math.nan
    # one-step bound 2 (eps0 + rbar/(l - rbar)) r_{t-1}; NaN when not applicable
    shrink_bound: float = math.nan
    M_r: float = math.nan


@dataclass
class SolverTrace:
    records: list[IterRecord] = field(default_factory=list)
    status: str = "running"
    planned_T: int | None = None
    log_M_upper: float = math.nan
    good_init: bool | None = None

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def contractions(self) -> np.ndarray:
        c = self.column("contraction")
        return c[~np.isnan(c)]

    def to_csv(self, fh=None) -> str | None:
        """Write ``iter,loss,grad_norm,step_norm,r,contraction,nnz,ms``; NaN fields are blank."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for rec in self.records:
            row = []
            for k in TRACE_HEADER:
                v = getattr(rec, k)
                if v is None or (isinstance(v, float) and math.isnan(v)):
                    row.append("")
                elif isinstance(v, float):
                    row.append(f"{v:.3f}" if k == "ms" else f"{v:.17g}")
                else:
                    row.append(str(v))
            w.writerow(row)
        return out.getvalue() if fh is None else None


def choose_T(r0: float, epsilon: float) -> int:
    """Smallest ``T`` with ``0.4^T r0 <= epsilon`` (0 when already within epsilon)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if r0 < 0:
        raise ValueError("r0 must be nonnegative")
    if r0 <= epsilon:
        return 0
    T = max(0, math.ceil(math.log(r0 / epsilon) / math.log(1 / CONTRACTION)))
    while CONTRACTION**T * r0 > epsilon:
        T += 1
    while T > 0 and CONTRACTION ** (T - 1) * r0 <= epsilon:
        T -= 1
    return T


def newton_step_exact(
    inst: ProblemInstance,
    state: SoftmaxState,
    mode: Literal["full", "diag_only"] = "full",
) -> np.ndarray:
    """``x - H^{-1} g`` with the full Hessian or its ``B_diag + W^2`` part."""
    g = gradient_total(state, inst)
    H = hessian_materialize(hessian_decomposed(state, inst), inst, mode)
    return state.x - spd_solve(H, g)


def sketch_diagonal(D: np.ndarray, W2: np.ndarray, fallback: bool = True) -> tuple[np.ndarray, bool]:
    """Return the diagonal to sparsify, replacing it by ``W2`` if any entry is <= 0."""
    bad = np.flatnonzero(D <= 0)
    if bad.size == 0:
        return D, False
    if not fallback:
        raise NonPositiveDiagonalError(int(bad[0]), float(D[bad[0]]))
    log.warning("B_diag + W^2 has %d non-positive entries; sketching W^2 alone", bad.size)
    return W2, True


def newton_step_sketched(
    inst: ProblemInstance,
    state: SoftmaxState,
    cfg: SketchConfig,
    fallback: bool = True,
) -> tuple[np.ndarray, SparseDiagonal]:
    """One approximate Newton step with ``H~ = A^T Dtilde A``.

    ``Dtilde`` sparsifies ``D = B_diag(x) + diag(w o w)``. The step is taken
    with a minus sign (descent).
    """
    g = gradient_total(state, inst)
    decomp = hessian_decomposed(state, inst)
    D, _ = sketch_diagonal(decomp.diag_with_reg(), decomp.W2, fallback)
    Dt = subsample(inst.A, D, cfg)
    if Dt.nnz < inst.d:
        raise SingularSketchError(Dt.nnz, inst.d)
    Ht = Dt.gram(inst.A)
    try:
        step = spd_solve(Ht, g, "sketched Hessian")
    except NotPositiveDefiniteError:
        raise SingularSketchError(Dt.nnz, inst.d) from None
    return state.x - step, Dt


def _resolve_R(inst: ProblemInstance, cfg: SolverConfig) -> float:
    if cfg.R is not None:
        return cfg.R
    if inst.R is not None:
        return inst.R
    return max(R_FLOOR, float(singular_values(inst.A)[0]))


def _iter_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, t]).generate_state(1)[0])


def solve(
    inst: ProblemInstance,
    x0,
    cfg: SolverConfig,
    x_star=None,
) -> tuple[np.ndarray, SolverTrace]:
    """Run the configured Newton iteration from ``x0``.

    ``fixed_T`` (reproduction mode) needs ``x_star`` and runs
    ``choose_T(||x0 - x*||, epsilon)`` iterations. ``grad_norm`` stops once
    ``||g|| <= grad_tol``. Raises DivergenceError when the loss grows by
    ``divergence_factor`` over its starting value and IterationCapError when
    ``max_iters`` is exhausted; both carry the partial trace.
    """
    x = np.asarray(x0, dtype=float).copy()
    xs = None if x_star is None else np.asarray(x_star, dtype=float)
    trace = SolverTrace()
    R = _resolve_R(inst, cfg)
    _, log_M = log_bounds(inst.n, R)
    trace.log_M_upper = log_M
    l = cfg.l

    def M_times(r: float) -> float:
        if r == 0:
            return 0.0
        v = log_M + math.log(r)
        return math.exp(v) if v < 700 else math.inf

    st = softmax_f(inst, x)
    loss0 = loss_total(st, inst)
    g = gradient_total(st, inst)
    r = math.nan if xs is None else float(np.linalg.norm(x - xs))
    trace.records.append(IterRecord(0, loss0, float(np.linalg.norm(g)), r=r, M_r=M_times(r) if xs is not None else math.nan))
    if xs is not None:
        trace.good_init = bool(M_times(r) <= 0.1 * l)

    if cfg.stop_rule == "fixed_T":
        if xs is None:
            raise ValueError("fixed_T stopping needs x_star")
        T = choose_T(r, cfg.epsilon)
        trace.planned_T = T
        if T > cfg.max_iters:
            trace.status = "iteration_cap"
            raise IterationCapError(f"choose_T gives {T} > max_iters={cfg.max_iters}", trace)
        delta1 = cfg.delta / max(T, 1)
    else:
        T = None
        delta1 = cfg.delta / cfg.max_iters
    sk = dataclasses.replace(cfg.sketch, delta=delta1)
    loss_cap = cfg.divergence_factor * max(loss0, np.finfo(float).tiny)

    t = 0
    while True:
        rec = trace.records[-1]
        if T is not None:
            if t >= T:
                break
        else:
            tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-10 * (1 + abs(rec.loss))
            if rec.grad_norm <= tol:
                break
            if t >= cfg.max_iters:
                trace.status = "iteration_cap"
                raise IterationCapError(
                    f"|g|={rec.grad_norm:.3e} > tol={tol:.3e} after {t} iterations", trace
                )

        t0 = time.perf_counter()
        nnz = None
        fallback = False
        decomp = hessian_decomposed(st, inst)
        if cfg.mode == "exact_full":
            H_used = hessian_materialize(decomp, inst, "full")
        elif cfg.mode == "exact_diag":
            H_used = hessian_materialize(decomp, inst, "diag_only")
        else:
            D, fallback = sketch_diagonal(decomp.diag_with_reg(), decomp.W2, cfg.d_fallback)
            Dt = subsample(inst.A, D, dataclasses.replace(sk, seed=_iter_seed(sk.seed, t)))
            nnz = Dt.nnz
            if nnz < inst.d:
                trace.status = "numerical_failure"
                raise SingularSketchError(nnz, inst.d)
            H_used = Dt.gram(inst.A)
        try:
            step = spd_solve(H_used, g)
        except NotPositiveDefiniteError:
            trace.status = "numerical_failure"
            if cfg.mode == "sketched_diag":
                raise SingularSketchError(nnz or 0, inst.d) from None
            raise
        x_new = x - step
        ms = (time.perf_counter() - t0) * 1e3

        eps0 = math.nan
        if cfg.track_certificates:
            H_true = hessian_materialize(decomp, inst, "full")
            lo, hi = generalized_eig_range(H_used, H_true)
            eps0 = max(abs(lo - 1), abs(hi - 1))

        st = softmax_f(inst, x_new)
        loss = loss_total(st, inst)
        g = gradient_total(st, inst)
        new = IterRecord(
            t + 1,
            loss,
            float(np.linalg.norm(g)),
            step_norm=float(np.linalg.norm(step)),
            nnz=nnz,
            ms=ms,
            fallback=fallback,
            eps0_measured=eps0,
        )
        if xs is not None:
            r_prev = rec.r
            new.r = float(np.linalg.norm(x_new - xs))
            new.M_r = M_times(new.r)
            if r_prev > 0:
                new.contraction = new.r / r_prev
            rbar = rec.M_r
            if not math.isnan(eps0) and rbar < l and r_prev >= SHRINK_FLOOR:
                new.shrink_bound = 2 * (eps0 + rbar / (l - rbar)) * r_prev
        trace.records.append(new)
        x = x_new
        t += 1
        if not loss <= loss_cap:
            trace.status = "diverged"
            raise DivergenceError(f"loss {loss:.3e} exceeded {loss_cap:.3e}", trace)

    if T is not None:
        trace.status = "converged" if trace.records[-1].r <= cfg.epsilon else "tolerance_not_met"
    else:
        trace.status = "converged"
    return x, trace
