"""Property suites behind ``softmax-newton verify``.

Each suite draws its own instances (or uses a supplied bundle), runs one family
of checks over many trials and returns a ``SuiteResult`` with key=value lines.
Trials are independent and may be fanned out over processes; results are
merged in trial order so output does not depend on ``jobs``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .finite_diff import fd_gradient, fd_hessian, rel_error, total_loss_fn
from .linalg import singular_values, unit_sphere
from .problem import CONVEXITY_W_BASE, SKETCH_W_BASE, ProblemInstance, validate
from .sketch import SketchConfig, certify_sandwich, subsample
from .softmax_core import gradient_total, hessian_decomposed, hessian_materialize, softmax_f
from . import spectral

GRAD_RTOL = 1e-6
HESS_RTOL = 1e-5


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)

    def report(self) -> list[str]:
        return [f"{self.name}.{ln}" for ln in self.lines] + [
            f"{self.name}={'PASS' if self.passed else 'FAIL'}"
        ]


def random_instance(
    n: int,
    d: int,
    seed: int,
    R: float = 1.0,
    l: float = 1.0,
    w_base: float = SKETCH_W_BASE,
    margin: float = 1.0,
) -> ProblemInstance:
    """Random instance with ``||A|| = R``, ``b >= 0``, ``||b||_1 <= 1`` and
    ``w_i^2 >= w_base + l / sigma_min^2``.

    ``b`` is a random sub-probability vector, so it is generally not of the
    form ``f(x)``.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    A *= R / singular_values(A)[0] * (1 - 1e-15)
    sigma_min = float(singular_values(A)[-1])
    b = rng.dirichlet(np.full(n, 0.5)) * rng.uniform(0.0, 1.0)
    w2 = w_base + l / sigma_min**2 + margin * (1.0 + rng.random(n))
    return ProblemInstance(A, b, np.sqrt(w2), {"l": l, "R": R, "seed": seed})


def random_point(d: int, radius: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return unit_sphere(rng, d) * radius * rng.random() ** (1.0 / d)


def fan_out(fn: Callable, args: Sequence, jobs: int = 1) -> list:
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, args))


@dataclass(frozen=True)
class Source:
    """Where trial instances come from: a fixed bundle or random draws."""

    n: int = 10
    d: int = 4
    trials: int = 100
    seed: int = 0
    R: float = 1.0
    l: float = 1.0
    bundle: ProblemInstance | None = None

    def instance(self, k: int, w_base: float = SKETCH_W_BASE) -> ProblemInstance:
        if self.bundle is not None:
            return self.bundle
        return random_instance(self.n, self.d, self.seed * 100_003 + k, self.R, self.l, w_base)

    def point(self, inst: ProblemInstance, k: int) -> np.ndarray:
        return random_point(inst.d, 1.0, self.seed * 7919 + k + 1)


# --------------------------------------------------------------------------
# per-trial workers (top level so they pickle)


def _trial_assumptions(arg):
    src, k, mode = arg
    inst = src.instance(k, CONVEXITY_W_BASE if mode == "convexity" else SKETCH_W_BASE)
    rep = validate(inst, src.l, mode)
    return rep.passed, rep.failures()


def _trial_B(arg):
    src, k = arg
    inst = src.instance(k)
    st = softmax_f(inst, src.point(inst, k))
    lo, hi, ok = spectral.check_B_bounds(hessian_decomposed(st, inst))
    return ok, lo, hi


def _trial_pd(arg):
    src, k = arg
    inst = src.instance(k, CONVEXITY_W_BASE)
    lam, ok = spectral.check_hessian_pd(inst, src.point(inst, k), src.l)
    return ok, lam


def _trial_w2(arg):
    src, k = arg
    inst = src.instance(k, SKETCH_W_BASE)
    (lo, hi), ok = spectral.check_w2_sandwich(inst, src.point(inst, k), src.l)
    return ok, lo, hi


def _trial_grad(arg):
    src, k = arg
    inst = src.instance(k)
    x = src.point(inst, k)
    err = rel_error(gradient_total(softmax_f(inst, x), inst), fd_gradient(total_loss_fn(inst), x))
    return err <= GRAD_RTOL, err


def _trial_hess(arg):
    src, k = arg
    inst = src.instance(k)
    x = src.point(inst, k)
    H = hessian_materialize(hessian_decomposed(softmax_f(inst, x), inst), inst, "full")
    err = rel_error(H, fd_hessian(total_loss_fn(inst), x))
    return err <= HESS_RTOL, err


def _trial_sketch(arg):
    A, D, cfg, epsilon0 = arg
    Dt = subsample(A, D, cfg)
    lo, hi, ok = certify_sandwich(A, D, Dt, epsilon0)
    return ok, lo, hi, Dt.nnz


def _summary(name, results, extra_lines=()):
    ok = [r[0] for r in results]
    passed = all(ok)
    lines = [f"trials={len(ok)}", f"passed={sum(ok)}", *extra_lines]
    return SuiteResult(name, passed, lines)


def suite_assumptions(src: Source, mode: str = "sketch", jobs: int = 1) -> SuiteResult:
    n_trials = 1 if src.bundle is not None else src.trials
    res = fan_out(_trial_assumptions, [(src, k, mode) for k in range(n_trials)], jobs)
    fails = sorted({f for _, fl in res for f in fl})
    return _summary("assumptions", res, [f"mode={mode}", f"failing={','.join(fails) or 'none'}"])


def suite_B_bounds(src: Source, jobs: int = 1) -> SuiteResult:
    res = fan_out(_trial_B, [(src, k) for k in range(src.trials)], jobs)
    return _summary("B_bounds", res, [
        f"lambda_min={min(r[1] for r in res):.17g}",
        f"lambda_max={max(r[2] for r in res):.17g}",
    ])


def suite_hessian_pd(src: Source, jobs: int = 1) -> SuiteResult:
    res = fan_out(_trial_pd, [(src, k) for k in range(src.trials)], jobs)
    return _summary("hessian_pd", res, [f"lambda_min_H={min(r[1] for r in res):.17g}", f"l={src.l}"])


def suite_w2_sandwich(src: Source, jobs: int = 1) -> SuiteResult:
    res = fan_out(_trial_w2, [(src, k) for k in range(src.trials)], jobs)
    return _summary("w2_sandwich", res, [
        f"gen_eig_min={min(r[1] for r in res):.17g}",
        f"gen_eig_max={max(r[2] for r in res):.17g}",
    ])


def suite_gradient_fd(src: Source, jobs: int = 1) -> SuiteResult:
    res = fan_out(_trial_grad, [(src, k) for k in range(src.trials)], jobs)
    return _summary("gradient_fd", res, [f"max_rel_err={max(r[1] for r in res):.6e}", f"tol={GRAD_RTOL}"])


def suite_hessian_fd(src: Source, jobs: int = 1) -> SuiteResult:
    res = fan_out(_trial_hess, [(src, k) for k in range(src.trials)], jobs)
    return _summary("hessian_fd", res, [f"max_rel_err={max(r[1] for r in res):.6e}", f"tol={HESS_RTOL}"])


def allowed_sketch_failures(trials: int, delta: float) -> int:
    return math.ceil(trials * delta) + 3


def suite_sketch_sandwich(
    src: Source,
    epsilon0: float = 0.1,
    delta: float = 0.05,
    oversample_c: float = 8.0,
    jobs: int = 1,
) -> SuiteResult:
    """Leverage-score sketch of ``B_diag + W^2`` at one point, repeated over seeds."""
    inst = src.instance(0)
    st = softmax_f(inst, src.point(inst, 0))
    D = hessian_decomposed(st, inst).diag_with_reg()
    args = [
        (inst.A, D, SketchConfig(epsilon0, delta, oversample_c, seed=src.seed * 1_000_003 + k), epsilon0)
        for k in range(src.trials)
    ]
    res = fan_out(_trial_sketch, args, jobs)
    m = args[0][2].budget(inst.n, inst.d)
    failures = sum(not r[0] for r in res)
    allowed = allowed_sketch_failures(src.trials, delta)
    nnz_ok = all(r[3] <= m for r in res)
    lines = [
        f"n={inst.n}", f"d={inst.d}", f"epsilon0={epsilon0}", f"delta={delta}",
        f"budget_m={m}", f"max_nnz={max(r[3] for r in res)}",
        f"gen_eig_min={min(r[1] for r in res):.17g}",
        f"gen_eig_max={max(r[2] for r in res):.17g}",
        f"failures={failures}", f"allowed={allowed}",
    ]
    return SuiteResult("sandwich", failures <= allowed and nnz_ok, lines)


def _probe_instance(src: Source, R: float) -> tuple[ProblemInstance, float, list[str]]:
    """Instance and radius for the ball probes; the bounds need ``||A|| <= R``.

    Random instances are drawn with ``||A|| = R``. A bundle whose norm exceeds
    ``R`` is probed at ``R = ||A||`` instead, and the report says so.
    """
    if src.bundle is None:
        return random_instance(src.n, src.d, src.seed, R, src.l), R, []
    A_norm = float(singular_values(src.bundle.A)[0])
    if A_norm <= R:
        return src.bundle, R, []
    return src.bundle, A_norm, [f"R_raised_from={R}"]


def suite_lipschitz(src: Source, R: float = 2.0, pairs: int = 200) -> SuiteResult:
    """Lipschitz chain, G-term sum and Hessian Lipschitz probes at radius ``R``."""
    inst, R, notes = _probe_instance(src, R)
    pp = spectral.make_probe_pairs(inst, R, pairs, src.seed)
    chain = spectral.f_lipschitz_probe(inst, pp, R)
    lip = spectral.probe_lipschitz(inst, pp, R)
    lines = [f"R={R}", *notes, f"pairs_used={chain.used}", f"pairs_skipped={chain.skipped}"]
    lines += [c.line() for c in chain.checks.values()]
    lines += [lip.hessian.line(), lip.g_sum.line(),
              f"g_sum_ratio_max={lip.g_sum_ratio_max:.6e}",
              f"g_plain_sum_ratio_max={lip.g_plain_ratio_max:.6e}",
              f"log_R_f={chain.log_R_f:.17g}"]
    ok = chain.passed and lip.passed and chain.used > 0
    return SuiteResult("lipschitz", ok, lines)


def suite_beta(src: Source, R: float = 2.0, points: int = 1000) -> SuiteResult:
    inst, R, notes = _probe_instance(src, R)
    pts = spectral.ball_points(inst.d, R, points, src.seed)
    lo = spectral.min_log_alpha(inst, pts)
    bm = spectral.beta_and_M(inst, R)
    lines = [f"R={R}", *notes, f"points={points}", f"log_min_alpha={lo:.17g}",
             f"log_beta_lower={bm.log_beta_lower:.17g}"]
    return SuiteResult("beta", lo >= bm.log_beta_lower, lines)


CHECKS = ("assumptions", "B_bounds", "hessian_pd", "w2_sandwich", "gradient_fd",
          "hessian_fd", "sandwich", "lipschitz", "beta")
