"""Dense linear-algebra helpers used across modules."""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefiniteError

# log of the largest finite double; bounds above this are reported as overflowed
LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def singular_values(A: np.ndarray) -> np.ndarray:
    """Singular values of ``A`` in descending order (full SVD, desk scale)."""
    return np.linalg.svd(A, compute_uv=False)


def weighted_gram(A: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Return ``A.T @ diag(weights) @ A`` symmetrized."""
    G = A.T @ (weights[:, None] * A)
    return 0.5 * (G + G.T)


def spd_solve(H: np.ndarray, g: np.ndarray, what: str = "Hessian") -> np.ndarray:
    """Solve ``H x = g`` by Cholesky with one pass of iterative refinement.

    Raises NotPositiveDefiniteError (carrying lambda_min) when the factorization
    fails.
    """
    try:
        factor = sla.cho_factor(H, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
        raise NotPositiveDefiniteError(lam, what) from None
    x = sla.cho_solve(factor, g)
    x = x + sla.cho_solve(factor, g - H @ x)
    return x


def generalized_eig_range(M: np.ndarray, N: np.ndarray) -> tuple[float, float]:
    """Extreme eigenvalues of the pencil ``M v = lambda N v`` with N positive definite."""
    ev = sla.eigh(0.5 * (M + M.T), 0.5 * (N + N.T), eigvals_only=True)
    return float(ev[0]), float(ev[-1])


def log_norm_exp(z: np.ndarray) -> float:
    """``log ||exp(z)||_2`` computed without overflow."""
    m = float(np.max(z))
    return m + 0.5 * math.log(float(np.sum(np.exp(2.0 * (z - m)))))


def safe_exp(logv: float) -> float:
    return math.exp(logv) if logv < LOG_FLOAT_MAX else math.inf


def unit_sphere(rng: np.random.Generator, d: int) -> np.ndarray:
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)
