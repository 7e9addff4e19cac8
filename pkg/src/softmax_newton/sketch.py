"""Leverage-score row sampling for ``A^T D A`` with a positive diagonal ``D``.

Rows of ``D^{1/2} A`` are drawn with replacement with probability proportional
to their leverage scores; each draw contributes ``D_ii / (m p_i)`` to the
sampled diagonal, so ``E[A^T Dtilde A] = A^T D A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientError
from .linalg import generalized_eig_range, weighted_gram
from .problem import RANK_RTOL


@dataclass(frozen=True)
class SketchConfig:
    epsilon0: float = 0.1
    delta: float = 0.05
    oversample_c: float = 8.0
    seed: int = 0
    # when False the sketch returns D unchanged (all rows, original weights)
    enabled: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon0 < 0.5:
            raise ValueError(f"epsilon0 must lie in (0, 0.5), got {self.epsilon0}")
        if not 0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 0.5), got {self.delta}")
        if not self.oversample_c > 0:
            raise ValueError("oversample_c must be positive")

    def budget(self, n: int, d: int) -> int:
        """Number of draws ``m = ceil(c d log(n/delta) / eps0^2)``, at least ``d``."""
        m = math.ceil(self.oversample_c * d * math.log(n / self.delta) / self.epsilon0**2)
        return max(m, d)


@dataclass(frozen=True, eq=False)
class SparseDiagonal:
    indices: np.ndarray
    weights: np.ndarray
    n: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        wts = np.asarray(self.weights, dtype=float)
        if idx.shape != wts.shape or idx.ndim != 1:
            raise ValueError("indices and weights must be 1-D arrays of equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.n):
            raise ValueError("indices must be strictly increasing and inside [0, n)")
        if np.any(wts <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", wts)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @classmethod
    def from_dense(cls, D: np.ndarray) -> "SparseDiagonal":
        D = np.asarray(D, dtype=float)
        idx = np.flatnonzero(D)
        return cls(idx, D[idx], D.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.indices] = self.weights
        return out

    def gram(self, A: np.ndarray) -> np.ndarray:
        """``A^T Dtilde A`` touching only the sampled rows."""
        if self.nnz == self.n:
            return weighted_gram(A, self.weights)
        return weighted_gram(A[self.indices], self.weights)


def leverage_scores(A: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Leverage scores of the rows of ``D^{1/2} A``; they sum to ``d``."""
    D = np.asarray(D, dtype=float)
    if np.any(D <= 0):
        raise ValueError("D must be entrywise positive")
    U, s, _ = np.linalg.svd(np.sqrt(D)[:, None] * A, full_matrices=False)
    if s[-1] <= RANK_RTOL * s[0] or s[0] == 0.0:
        raise RankDeficientError(float(s[-1]), float(s[0]))
    return np.einsum("ij,ij->i", U, U)


def subsample(A: np.ndarray, D: np.ndarray, cfg: SketchConfig) -> SparseDiagonal:
    D = np.asarray(D, dtype=float)
    n, d = A.shape
    if not cfg.enabled:
        return SparseDiagonal(np.arange(n), D.copy(), n)
    tau = leverage_scores(A, D)
    p = tau / tau.sum()
    m = cfg.budget(n, d)
    rng = np.random.default_rng(cfg.seed)
    draws = rng.choice(n, size=m, replace=True, p=p)
    counts = np.bincount(draws, minlength=n)
    idx = np.flatnonzero(counts)
    weights = counts[idx] * D[idx] / (m * p[idx])
    return SparseDiagonal(idx, weights, n)


def certify_sandwich(
    A: np.ndarray, D: np.ndarray, Dtilde: SparseDiagonal | np.ndarray, epsilon0: float
) -> tuple[float, float, bool]:
    """Generalized eigenvalue range of ``(A^T Dtilde A, A^T D A)`` against ``1 +- eps0``."""
    H = weighted_gram(A, np.asarray(D, dtype=float))
    if isinstance(Dtilde, SparseDiagonal):
        Ht = Dtilde.gram(A)
    else:
        Ht = weighted_gram(A, np.asarray(Dtilde, dtype=float))
    lo, hi = generalized_eig_range(Ht, H)
    return lo, hi, bool(lo >= 1 - epsilon0 and hi <= 1 + epsilon0)
