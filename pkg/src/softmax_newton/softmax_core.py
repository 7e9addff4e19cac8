"""Softmax regression calculus: alpha, f, c, the losses, gradient and Hessian.

All quantities at a point ``x`` are derived from a single ``SoftmaxState`` so
the loss, gradient and Hessian of one Newton iteration share one evaluation of
``exp(Ax)``.

The Hessian of ``L_exp`` is ``A^T B(x) A`` with

    B(x) = s1 f f^T + u2 f^T + f u2^T + diag(d1) + diag(d2)

    s1 = <3f - 2b, f>
    u2 = -(2f - b) o f
    d1 = -<f - b, f> f
    d2 = (2f - b) o f

i.e. three rank-1 terms and two diagonal terms. The regularizer adds
``A^T diag(w o w) A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import NonFiniteError
from .linalg import LOG_FLOAT_MAX, weighted_gram
from .problem import ProblemInstance


@dataclass(frozen=True, eq=False)
class SoftmaxState:
    x: np.ndarray
    Ax: np.ndarray
    log_alpha: float
    f: np.ndarray
    c: np.ndarray

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha) if self.log_alpha < LOG_FLOAT_MAX else math.inf


def _check_x(inst: ProblemInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (inst.d,):
        raise ValueError(f"x must have length d={inst.d}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("x contains non-finite entries")
    return x


def alpha(inst: ProblemInstance, x) -> tuple[float, float]:
    """Return ``(alpha, log alpha)`` where ``alpha = <exp(Ax), 1>``.

    ``alpha`` is ``inf`` when it is not representable; ``log alpha`` is always
    finite.
    """
    st = softmax_f(inst, x)
    return st.alpha, st.log_alpha


def softmax_f(inst: ProblemInstance, x) -> SoftmaxState:
    x = _check_x(inst, x)
    Ax = inst.A @ x
    m = float(Ax.max())
    e = np.exp(Ax - m)
    s = float(e.sum())
    f = e / s
    return SoftmaxState(x=x, Ax=Ax, log_alpha=m + math.log(s), f=f, c=f - inst.b)


def loss_exp(state: SoftmaxState) -> float:
    return 0.5 * float(state.c @ state.c)


def loss_reg(inst: ProblemInstance, x) -> float:
    x = _check_x(inst, x)
    r = inst.w * (inst.A @ x)
    return 0.5 * float(r @ r)


def loss_total(state: SoftmaxState, inst: ProblemInstance) -> float:
    r = inst.w * state.Ax
    return loss_exp(state) + 0.5 * float(r @ r)


def gradient_exp(state: SoftmaxState, inst: ProblemInstance) -> np.ndarray:
    """Analytic gradient of ``L_exp``: ``A^T (f o c - <c, f> f)``."""
    f, c = state.f, state.c
    return inst.A.T @ (f * c - float(c @ f) * f)


def gradient_total(state: SoftmaxState, inst: ProblemInstance) -> np.ndarray:
    return gradient_exp(state, inst) + inst.A.T @ (inst.w2 * state.Ax)


@dataclass(frozen=True, eq=False)
class HessianDecomposition:
    """Structured ``B(x)`` plus the regularizer diagonal ``W2 = w o w``."""

    u1: np.ndarray
    s1: float
    u2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    W2: np.ndarray

    @property
    def f(self) -> np.ndarray:
        return self.u1

    def diag_part(self) -> np.ndarray:
        """Diagonal of ``B_diag(x) = diag(d1) + diag(d2)``."""
        return self.d1 + self.d2

    def diag_with_reg(self) -> np.ndarray:
        """``B_diag(x) + diag(w o w)`` as a vector (the ``D`` fed to the sketch)."""
        return self.d1 + self.d2 + self.W2

    def rank_part(self) -> np.ndarray:
        f, u2 = self.u1, self.u2
        return self.s1 * np.outer(f, f) + np.outer(u2, f) + np.outer(f, u2)

    def materialize(self) -> np.ndarray:
        """Dense ``n x n`` matrix ``B(x)`` (without ``W2``)."""
        return self.rank_part() + np.diag(self.diag_part())


def hessian_decomposed(state: SoftmaxState, inst: ProblemInstance) -> HessianDecomposition:
    f, b, c = state.f, inst.b, state.c
    v = (2.0 * f - b) * f
    return HessianDecomposition(
        u1=f,
        s1=float((3.0 * f - 2.0 * b) @ f),
        u2=-v,
        d1=-float(c @ f) * f,
        d2=v,
        W2=inst.w2,
    )


def hessian_materialize(
    decomp: HessianDecomposition,
    inst: ProblemInstance,
    mode: Literal["full", "diag_only"] = "full",
) -> np.ndarray:
    """``A^T (B + W2) A`` (full) or ``A^T (B_diag + W2) A`` (diag_only).

    The rank-1 terms are applied through ``A^T f`` and ``A^T u2`` so no
    ``n x n`` matrix is formed.
    """
    H = weighted_gram(inst.A, decomp.diag_with_reg())
    if mode == "diag_only":
        return H
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    p = inst.A.T @ decomp.u1
    q = inst.A.T @ decomp.u2
    return H + decomp.s1 * np.outer(p, p) + (np.outer(q, p) + np.outer(p, q))


def hessian_apply(decomp: HessianDecomposition, inst: ProblemInstance, v) -> np.ndarray:
    """Matrix-free product ``A^T (B + W2) A v``."""
    Av = inst.A @ np.asarray(v, dtype=float)
    f, u2 = decomp.u1, decomp.u2
    fAv = float(f @ Av)
    y = (decomp.s1 * fAv) * f + fAv * u2 + float(u2 @ Av) * f + decomp.diag_with_reg() * Av
    return inst.A.T @ y


def hessian_total(state: SoftmaxState, inst: ProblemInstance) -> np.ndarray:
    return hessian_materialize(hessian_decomposed(state, inst), inst, "full")
