"""Spectral certificates and empirical bound probes.

Every probe compares a measured quantity against a closed-form bound. Bounds of
the form ``exp(c R^2)`` are compared in log-domain; a bound too large to be a
finite double is reported as ``vacuous`` (it holds, but says nothing).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SingularPencilError
from .linalg import LOG_FLOAT_MAX, generalized_eig_range, log_norm_exp, singular_values, unit_sphere
from .problem import ProblemInstance, log_bounds
from .softmax_core import (
    HessianDecomposition,
    gradient_exp,
    hessian_decomposed,
    hessian_materialize,
    softmax_f,
)

B_LOWER, B_UPPER = -4.0, 8.0
B_TOL = 1e-9
SANDWICH_LO, SANDWICH_HI = 0.9, 1.1
# cap on ||A(x - y)||_inf in the Lipschitz hypotheses, and the probe spacing
PAIR_CAP = 0.01
PAIR_SPACING = 0.005
# slack for log-domain comparisons (relative 1e-9)
LOG_TOL = 1e-9

Pair = tuple[np.ndarray, np.ndarray]


def check_B_bounds(decomp: HessianDecomposition, tol: float = B_TOL) -> tuple[float, float, bool]:
    ev = np.linalg.eigvalsh(decomp.materialize())
    lo, hi = float(ev[0]), float(ev[-1])
    return lo, hi, bool(lo >= B_LOWER - tol and hi <= B_UPPER + tol)


def check_hessian_pd(inst: ProblemInstance, x, l: float) -> tuple[float, bool]:
    st = softmax_f(inst, x)
    H = hessian_materialize(hessian_decomposed(st, inst), inst, "full")
    lam = float(np.linalg.eigvalsh(H)[0])
    return lam, bool(lam >= l - 1e-9 * l)


def w2_sandwich_range(B: np.ndarray, W2: np.ndarray) -> tuple[float, float]:
    """Generalized eigenvalue range of ``(diag(W2), B + diag(W2))``."""
    N = B + np.diag(W2)
    lam = float(np.linalg.eigvalsh(0.5 * (N + N.T))[0])
    if lam <= 0:
        raise SingularPencilError(lam)
    return generalized_eig_range(np.diag(W2), N)


def check_w2_sandwich(inst: ProblemInstance, x, l: float) -> tuple[tuple[float, float], bool]:
    st = softmax_f(inst, x)
    B = hessian_decomposed(st, inst).materialize()
    lo, hi = w2_sandwich_range(B, inst.w2)
    return (lo, hi), bool(lo >= SANDWICH_LO and hi <= SANDWICH_HI)


# --------------------------------------------------------------------------
# bound bookkeeping


@dataclass
class BoundCheck:
    """Running max of ``log(lhs) - log(rhs)`` over probes."""

    name: str
    worst_margin: float = -math.inf
    log_bound_max: float = -math.inf
    count: int = 0

    def add(self, log_lhs: float, log_rhs: float) -> None:
        self.count += 1
        self.log_bound_max = max(self.log_bound_max, log_rhs)
        if log_lhs == -math.inf:
            return
        self.worst_margin = max(self.worst_margin, log_lhs - log_rhs)

    @property
    def holds(self) -> bool:
        return self.worst_margin <= LOG_TOL

    @property
    def vacuous(self) -> bool:
        return self.log_bound_max >= LOG_FLOAT_MAX

    @property
    def status(self) -> str:
        if not self.holds:
            return "fail"
        return "vacuous" if self.vacuous else "pass"

    @property
    def ratio(self) -> float:
        """Largest ``lhs / rhs`` observed (0 when every lhs vanished)."""
        return math.exp(self.worst_margin) if self.worst_margin > -745 else 0.0

    def line(self) -> str:
        return f"{self.name}={self.status} ratio_max={self.ratio:.6e} probes={self.count}"


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def make_probe_pairs(
    inst: ProblemInstance, R: float, count: int, seed: int, spacing: float = PAIR_SPACING
) -> list[Pair]:
    """Pairs with ``||x|| <= R`` and ``y = x + delta u`` where ``||A(x-y)||_inf = spacing``."""
    rng = np.random.default_rng(seed)
    pairs = []
    d = inst.d
    while len(pairs) < count:
        x = unit_sphere(rng, d) * R * rng.random() ** (1.0 / d)
        u = unit_sphere(rng, d)
        delta = spacing / float(np.max(np.abs(inst.A @ u)))
        y = x + delta * u
        if np.linalg.norm(y) <= R:
            pairs.append((x, y))
    return pairs


def _pair_admissible(inst: ProblemInstance, x, y, R: float) -> bool:
    if np.array_equal(x, y):
        return False
    if np.linalg.norm(x) > R or np.linalg.norm(y) > R:
        return False
    return float(np.max(np.abs(inst.A @ (x - y)))) < PAIR_CAP


@dataclass
class LipschitzProbe:
    used: int
    skipped: int
    hessian: BoundCheck
    g_sum: BoundCheck
    hessian_ratio_max: float
    g_sum_ratio_max: float
    g_plain_ratio_max: float

    @property
    def passed(self) -> bool:
        return self.hessian.holds and self.g_sum.holds


def g_terms(fx: np.ndarray, fy: np.ndarray, b: np.ndarray) -> list[float]:
    """Spectral norms of the eight difference terms ``G_1 ... G_8``."""
    def rank1(fv):
        return np.outer(fv, fv)

    norms = [
        np.linalg.norm((fx @ fx) * rank1(fx) - (fy @ fy) * rank1(fy), 2),
        np.linalg.norm((fx @ b) * rank1(fx) - (fy @ b) * rank1(fy), 2),
        np.max(np.abs((fx @ fx) * fx - (fy @ fy) * fy)),
        np.max(np.abs((fx @ b) * fx - (fy @ b) * fy)),
        np.max(np.abs(fx * (fx - b) - fy * (fy - b))),
        np.max(np.abs(fx * fx - fy * fy)),
        np.linalg.norm(np.outer(fx, fx * b) - np.outer(fy, fy * b), 2),
        np.linalg.norm(np.outer(fx * b, fx) - np.outer(fy * b, fy), 2),
    ]
    return [float(v) for v in norms]


def probe_lipschitz(
    inst: ProblemInstance, pairs: Iterable[Pair], R: float, beta: float | None = None
) -> LipschitzProbe:
    """Hessian Lipschitz ratio against ``beta^-2 n^1.5 exp(20 R^2)`` and the
    ``G``-term sum against ``100 R ||f(x) - f(y)||``.

    ``beta`` defaults to ``exp(-R^2)``.
    """
    log_beta = -R * R if beta is None else math.log(beta)
    n = inst.n
    log_hbound = -2 * log_beta + 1.5 * math.log(n) + 20 * R * R
    hess = BoundCheck("hessian_lipschitz")
    gsum = BoundCheck("g_sum")
    used = skipped = 0
    h_ratio = g_ratio = g_plain = 0.0
    for x, y in pairs:
        if not _pair_admissible(inst, x, y, R):
            skipped += 1
            continue
        used += 1
        sx, sy = softmax_f(inst, x), softmax_f(inst, y)
        Hx = hessian_materialize(hessian_decomposed(sx, inst), inst)
        Hy = hessian_materialize(hessian_decomposed(sy, inst), inst)
        dH = float(np.max(np.abs(np.linalg.eigvalsh(Hx - Hy))))
        dx = float(np.linalg.norm(x - y))
        hess.add(_log(dH), log_hbound + math.log(dx))
        h_ratio = max(h_ratio, dH / dx)

        G = g_terms(sx.f, sy.f, inst.b)
        weighted_sum = G[0] + sum(G)
        df = float(np.linalg.norm(sx.f - sy.f))
        gsum.add(_log(weighted_sum), math.log(100 * R) + _log(df))
        if df > 0:
            g_ratio = max(g_ratio, weighted_sum / df)
            g_plain = max(g_plain, sum(G) / df)
    return LipschitzProbe(used, skipped, hess, gsum, h_ratio, g_ratio, g_plain)


@dataclass
class ChainProbe:
    used: int
    skipped: int
    checks: dict[str, BoundCheck] = field(default_factory=dict)
    f_ratio_max: float = 0.0
    log_R_f: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.holds for c in self.checks.values())


CHAIN_PARTS = (
    "exp_norm",
    "exp_diff",
    "alpha_diff",
    "alpha_inv_diff",
    "f_lipschitz",
    "c_lipschitz",
    "grad_exp_lipschitz",
    "grad_lipschitz_aggregate",
)


def f_lipschitz_probe(
    inst: ProblemInstance, pairs: Iterable[Pair], R: float, beta: float | None = None
) -> ChainProbe:
    """Check the chain of Lipschitz inequalities for ``exp(Ax)``, ``alpha``,
    ``f``, ``c`` and the softmax gradient on each admissible pair.

    ``R_f = beta^-2 n^1.5 exp(3 R^2)``; ``beta`` defaults to ``exp(-R^2)``.
    Pairs violating ``alpha >= beta`` at either end are skipped.
    """
    log_beta = -R * R if beta is None else math.log(beta)
    n = inst.n
    log_n = math.log(n)
    log_Rf = -2 * log_beta + 1.5 * log_n + 3 * R * R
    A_norm = float(singular_values(inst.A)[0])
    probe = ChainProbe(0, 0, {k: BoundCheck(k) for k in CHAIN_PARTS}, log_R_f=log_Rf)
    ck = probe.checks
    for x, y in pairs:
        if not _pair_admissible(inst, x, y, R):
            probe.skipped += 1
            continue
        sx, sy = softmax_f(inst, x), softmax_f(inst, y)
        if min(sx.log_alpha, sy.log_alpha) < log_beta:
            probe.skipped += 1
            continue
        probe.used += 1
        dx = float(np.linalg.norm(x - y))
        log_dx = math.log(dx)

        for s in (sx, sy):
            ck["exp_norm"].add(log_norm_exp(s.Ax), 0.5 * log_n + R * R)

        m = max(float(sx.Ax.max()), float(sy.Ax.max()))
        ex, ey = np.exp(sx.Ax - m), np.exp(sy.Ax - m)
        log_dexp = m + _log(float(np.linalg.norm(ex - ey)))
        ck["exp_diff"].add(log_dexp, math.log(2 * math.sqrt(n) * R) + R * R + log_dx)

        log_dalpha = m + _log(abs(float(ex.sum() - ey.sum())))
        ck["alpha_diff"].add(log_dalpha, 0.5 * log_n + log_dexp)

        # |1/a_x - 1/a_y| = |a_x - a_y| / (a_x a_y)
        ck["alpha_inv_diff"].add(
            log_dalpha - sx.log_alpha - sy.log_alpha, -2 * log_beta + log_dalpha
        )

        df = float(np.linalg.norm(sx.f - sy.f))
        ck["f_lipschitz"].add(_log(df), log_Rf + log_dx)
        ck["c_lipschitz"].add(_log(float(np.linalg.norm(sx.c - sy.c))), log_Rf + log_dx)
        probe.f_ratio_max = max(probe.f_ratio_max, df / dx)

        dg = float(np.linalg.norm(gradient_exp(sx, inst) - gradient_exp(sy, inst)))
        ck["grad_exp_lipschitz"].add(_log(dg), math.log(16 * R) + log_Rf + log_dx)
        R_inf = max(np.linalg.norm(v) for v in (sx.f, sy.f, sx.c, sy.c))
        ck["grad_lipschitz_aggregate"].add(
            _log(dg), math.log(8 * A_norm * R_inf) + log_Rf + log_dx
        )
    return probe


@dataclass(frozen=True)
class BetaM:
    log_beta_lower: float
    log_M_upper: float

    @property
    def beta_lower(self) -> float:
        return math.exp(self.log_beta_lower)

    @property
    def M_upper(self) -> float:
        return math.exp(self.log_M_upper) if self.log_M_upper < LOG_FLOAT_MAX else math.inf

    @property
    def M_overflow(self) -> bool:
        return self.log_M_upper >= LOG_FLOAT_MAX


def beta_and_M(inst: ProblemInstance, R: float) -> BetaM:
    """``beta >= exp(-R^2)`` and ``M <= n^1.5 exp(30 R^2)``, kept in log-domain."""
    return BetaM(*log_bounds(inst.n, R))


def ball_points(d: int, R: float, count: int, seed: int) -> list[np.ndarray]:
    """Half on the sphere of radius ``R``, half uniform inside the ball."""
    rng = np.random.default_rng(seed)
    pts = []
    for k in range(count):
        r = R if k % 2 == 0 else R * rng.random() ** (1.0 / d)
        pts.append(r * unit_sphere(rng, d))
    return pts


def min_log_alpha(inst: ProblemInstance, points: Sequence[np.ndarray]) -> float:
    return min(softmax_f(inst, x).log_alpha for x in points)


@dataclass
class SpectralCertificate:
    lambda_min_B: float
    lambda_max_B: float
    lambda_min_H: float
    sandwich_range: tuple[float, float] | None
    sandwich_ok: bool | None
    beta_measured: float
    lipschitz_ratio_max: float
    bound_values: dict[str, float]
    flags: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def lines(self) -> list[str]:
        out = [
            f"lambda_min_B={self.lambda_min_B:.17g}",
            f"lambda_max_B={self.lambda_max_B:.17g}",
            f"lambda_min_H={self.lambda_min_H:.17g}",
        ]
        if self.sandwich_range is not None:
            lo, hi = self.sandwich_range
            out.append(f"sandwich_gen_eig_min={lo:.17g}")
            out.append(f"sandwich_gen_eig_max={hi:.17g}")
        out.append(f"beta_measured={self.beta_measured:.17g}")
        out.append(f"lipschitz_ratio_max={self.lipschitz_ratio_max:.17g}")
        for k, v in self.bound_values.items():
            out.append(f"bound_{k}={v:.17g}")
        for k, v in self.flags.items():
            out.append(f"{k}={'PASS' if v else 'FAIL'}")
        out.append("PASS" if self.passed else "FAIL")
        return out


def certify(
    inst: ProblemInstance, x, l: float, R: float, pairs: int = 20, seed: int = 0
) -> SpectralCertificate:
    """Run every point-wise and pairwise check at ``x`` and collect them."""
    st = softmax_f(inst, x)
    decomp = hessian_decomposed(st, inst)
    lo_B, hi_B, ok_B = check_B_bounds(decomp)
    lam_H, ok_H = check_hessian_pd(inst, x, l)
    try:
        rng_sw, ok_sw = check_w2_sandwich(inst, x, l)
    except SingularPencilError:
        rng_sw, ok_sw = None, False
    bm = beta_and_M(inst, R)
    pts = ball_points(inst.d, R, 2 * pairs, seed)
    log_beta_meas = min_log_alpha(inst, pts)
    probe_pairs = make_probe_pairs(inst, R, pairs, seed)
    lip = probe_lipschitz(inst, probe_pairs, R)
    bounds = {
        "B_lower": B_LOWER,
        "B_upper": B_UPPER,
        "l": float(l),
        "sandwich_lo": SANDWICH_LO,
        "sandwich_hi": SANDWICH_HI,
        "log_hessian_lipschitz": lip.hessian.log_bound_max,
        "log_beta_lower": bm.log_beta_lower,
        "log_M_upper": bm.log_M_upper,
    }
    flags = {
        "B_bounds": ok_B,
        "hessian_pd": ok_H,
        "w2_sandwich": bool(ok_sw),
        "beta_bound": log_beta_meas >= bm.log_beta_lower,
        "hessian_lipschitz": lip.hessian.holds,
        "g_sum": lip.g_sum.holds,
    }
    return SpectralCertificate(
        lambda_min_B=lo_B,
        lambda_max_B=hi_B,
        lambda_min_H=lam_H,
        sandwich_range=rng_sw,
        sandwich_ok=ok_sw,
        beta_measured=math.exp(log_beta_meas) if log_beta_meas < LOG_FLOAT_MAX else math.inf,
        lipschitz_ratio_max=lip.hessian_ratio_max,
        bound_values=bounds,
        flags=flags,
    )
