import io
import math

import numpy as np
import pytest

from softmax_newton.errors import IterationCapError, NonPositiveDiagonalError, NotPositiveDefiniteError
from softmax_newton.linalg import spd_solve, unit_sphere
from softmax_newton.problem import generate_oracle, generate_trivial
from softmax_newton.sketch import SketchConfig
from softmax_newton.softmax_core import gradient_total, hessian_decomposed, softmax_f
from softmax_newton.solver import (
    TRACE_HEADER,
    SolverConfig,
    choose_T,
    newton_step_exact,
    newton_step_sketched,
    sketch_diagonal,
    solve,
)

from conftest import tiny_instance


def test_choose_T_examples():
    assert choose_T(1.0, 0.4) == 1
    assert choose_T(1.0, 1e-8) == 21
    assert choose_T(1e-9, 1e-8) == 0
    assert choose_T(0.0, 1e-8) == 0


@pytest.mark.parametrize("r0,eps", [(3.7, 1e-6), (0.02, 1e-8), (1.0, 0.39)])
def test_choose_T_minimal(r0, eps):
    T = choose_T(r0, eps)
    assert 0.4**T * r0 <= eps
    assert T == 0 or 0.4 ** (T - 1) * r0 > eps


@pytest.mark.parametrize("kw", [{"epsilon": 0.1}, {"delta": 0.0}, {"l": 0.0}, {"mode": "x"},
                                {"stop_rule": "x"}, {"max_iters": 0}, {"grad_tol": -1.0}])
def test_config_ranges(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_step_at_stationary_point_is_identity():
    inst, xs = generate_trivial(10, 3, 1.0, 1.0, 0)
    st = softmax_f(inst, xs)
    assert np.array_equal(newton_step_exact(inst, st), xs)
    x1, Dt = newton_step_sketched(inst, st, SketchConfig(seed=1))
    assert np.allclose(x1, xs, atol=1e-300)


def test_identity_A_contracts_toward_zero():
    n = 4
    inst = tiny_instance(np.eye(n), np.full(n, 1 / n), np.full(n, 11.0))
    x = np.array([0.3, -0.1, 0.2, 0.05])
    for _ in range(4):
        x_new = newton_step_exact(inst, softmax_f(inst, x))
        assert np.linalg.norm(x_new) <= 0.4 * np.linalg.norm(x)
        x = x_new


def test_one_sketched_step_from_good_init():
    inst, xs = generate_trivial(20, 5, 0.1, 1.0, 3)
    M = 20**1.5 * math.exp(30 * 0.01)
    r0 = 0.1 / M
    x0 = r0 * unit_sphere(np.random.default_rng(0), 5)
    x1, _ = newton_step_sketched(inst, softmax_f(inst, x0), SketchConfig(seed=0))
    assert np.linalg.norm(x1) <= 0.4 * r0


def test_solve_from_optimum_returns_immediately():
    inst, xs = generate_trivial(10, 3, 1.0, 1.0, 0)
    x, tr = solve(inst, xs, SolverConfig(stop_rule="fixed_T"), xs)
    assert tr.iterations == 0 and tr.records[0].r == 0.0 and tr.status == "converged"
    x, tr = solve(inst, xs, SolverConfig(stop_rule="grad_norm"))
    assert tr.iterations == 0 and np.array_equal(x, xs)


def test_fixed_T_trivial_example():
    inst, xs = generate_trivial(20, 5, 0.1, 1.0, 1)
    M = 20**1.5 * math.exp(0.3)
    x0 = (0.05 / M) * unit_sphere(np.random.default_rng(1), 5)
    x, tr = solve(inst, x0, SolverConfig(epsilon=1e-8, stop_rule="fixed_T", track_certificates=True), xs)
    assert tr.good_init
    assert tr.planned_T <= 20 and tr.iterations == tr.planned_T
    assert np.linalg.norm(x - xs) <= 1e-8
    assert np.all(tr.contractions() <= 0.4)
    for rec in tr.records[1:]:
        if not math.isnan(rec.shrink_bound):
            assert rec.r <= rec.shrink_bound


@pytest.mark.parametrize("mode", ["exact_full", "exact_diag", "sketched_diag"])
def test_oracle_instance(mode):
    inst, xs = generate_oracle(25, 4, 1.0, 1.0, 0.8, seed=5)
    cfg = SolverConfig(epsilon=1e-8, mode=mode, grad_tol=1e-10)
    x, tr = solve(inst, np.zeros(4), cfg, xs)
    assert tr.status == "converged"
    assert np.linalg.norm(gradient_total(softmax_f(inst, x), inst)) <= 1e-10
    assert np.linalg.norm(x - xs) <= 10 * 1e-8


def test_fixed_T_needs_xstar():
    inst, _ = generate_trivial(10, 3, 1.0, 1.0, 0)
    with pytest.raises(ValueError):
        solve(inst, np.ones(3) * 0.1, SolverConfig(stop_rule="fixed_T"))


def test_iteration_cap_carries_trace():
    inst, xs = generate_oracle(10, 3, 1.0, 1.0, 1.0, seed=0)
    with pytest.raises(IterationCapError) as ei:
        solve(inst, np.ones(3), SolverConfig(max_iters=1, grad_tol=1e-300, mode="exact_diag"))
    assert ei.value.trace.iterations == 1
    assert ei.value.trace.status == "iteration_cap"
    with pytest.raises(IterationCapError):
        solve(inst, xs + 1.0, SolverConfig(max_iters=2, stop_rule="fixed_T"), xs)


def test_sketch_diagonal_fallback():
    D = np.array([1.0, -0.5, 2.0])
    W2 = np.array([3.0, 3.0, 3.0])
    out, fell = sketch_diagonal(D, W2, fallback=True)
    assert fell and np.array_equal(out, W2)
    with pytest.raises(NonPositiveDiagonalError) as ei:
        sketch_diagonal(D, W2, fallback=False)
    assert ei.value.index == 1
    out, fell = sketch_diagonal(np.abs(D), W2)
    assert not fell


def test_diag_can_go_negative_without_regularizer():
    n = 5
    inst = tiny_instance(np.eye(n), np.eye(n)[0], np.zeros(n))
    dec = hessian_decomposed(softmax_f(inst, np.zeros(n)), inst)
    assert dec.diag_with_reg()[0] < 0


def test_spd_solve_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        spd_solve(np.diag([1.0, -1.0]), np.ones(2))


def test_trace_csv():
    inst, xs = generate_trivial(12, 3, 0.5, 1.0, 0)
    _, tr = solve(inst, xs + 0.01, SolverConfig(stop_rule="fixed_T", epsilon=1e-6), xs)
    text = tr.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == tr.iterations + 2
    first = lines[1].split(",")
    assert first[3] == "" and first[5] == ""
    buf = io.StringIO()
    tr.to_csv(buf)
    assert buf.getvalue() == text


def test_sketched_solve_reproducible():
    inst, xs = generate_trivial(30, 4, 0.5, 1.0, 2)
    x0 = xs + 0.02
    cfg = SolverConfig(stop_rule="fixed_T", sketch=SketchConfig(0.2, 0.05, 0.5, seed=4))
    a, ta = solve(inst, x0, cfg, xs)
    b, tb = solve(inst, x0, cfg, xs)
    assert np.array_equal(a, b)
    assert [r.nnz for r in ta.records] == [r.nnz for r in tb.records]
