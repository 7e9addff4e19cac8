"""Central finite-difference oracles for the gradient and Hessian checks.

These evaluate only ``loss_total`` (or any scalar function); they never touch
the analytic gradient or Hessian code they are used to check.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .problem import ProblemInstance
from .softmax_core import loss_exp, loss_total, softmax_f

GRAD_STEP = 1e-6
HESS_STEP = 1e-4


def _scale(x: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(x)))


def fd_gradient(fun: Callable[[np.ndarray], float], x, h: float | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = GRAD_STEP * _scale(x) if h is None else h
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def fd_hessian(fun: Callable[[np.ndarray], float], x, h: float | None = None) -> np.ndarray:
    """Second-order central differences of ``fun`` (function values only)."""
    x = np.asarray(x, dtype=float)
    h = HESS_STEP * _scale(x) if h is None else h
    d = x.size
    H = np.empty((d, d))
    f0 = fun(x)
    E = np.eye(d) * h
    for i in range(d):
        H[i, i] = (fun(x + E[i]) - 2 * f0 + fun(x - E[i])) / h**2
        for j in range(i):
            v = (
                fun(x + E[i] + E[j])
                - fun(x + E[i] - E[j])
                - fun(x - E[i] + E[j])
                + fun(x - E[i] - E[j])
            ) / (4 * h * h)
            H[i, j] = H[j, i] = v
    return H


def total_loss_fn(inst: ProblemInstance) -> Callable[[np.ndarray], float]:
    return lambda x: loss_total(softmax_f(inst, x), inst)


def exp_loss_fn(inst: ProblemInstance) -> Callable[[np.ndarray], float]:
    return lambda x: loss_exp(softmax_f(inst, x))


def rel_error(approx, exact, floor: float = 1e-12) -> float:
    """``||approx - exact|| / max(||exact||, floor)`` (2-norm, Frobenius for matrices)."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), floor))
