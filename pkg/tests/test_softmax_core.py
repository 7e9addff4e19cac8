import math

import numpy as np
import pytest

from softmax_newton.errors import InstanceError
from softmax_newton.finite_diff import exp_loss_fn, fd_gradient, fd_hessian, rel_error, total_loss_fn
from softmax_newton.softmax_core import (
    alpha,
    gradient_exp,
    gradient_total,
    hessian_apply,
    hessian_decomposed,
    hessian_materialize,
    hessian_total,
    loss_exp,
    loss_reg,
    loss_total,
    softmax_f,
)
from softmax_newton.suites import random_instance, random_point

from conftest import tiny_instance


def test_alpha_zero_matrix():
    inst = tiny_instance(np.zeros((5, 2)), np.zeros(5), np.ones(5))
    a, la = alpha(inst, np.array([3.0, -1.0]))
    assert a == pytest.approx(5.0)
    assert la == pytest.approx(math.log(5))


def test_alpha_pair(pair_instance):
    assert alpha(pair_instance, [0.0])[0] == pytest.approx(2.0)
    assert alpha(pair_instance, [math.log(2)])[0] == pytest.approx(2.5)


def test_softmax_examples(pair_instance):
    st = softmax_f(pair_instance, [0.5 * math.log(3)])
    assert np.allclose(st.f, [0.75, 0.25], atol=1e-15)
    z = tiny_instance(np.zeros((4, 2)), np.zeros(4), np.ones(4))
    assert np.array_equal(softmax_f(z, [1.0, 2.0]).f, np.full(4, 0.25))


def test_softmax_large_arguments_stay_finite():
    inst = tiny_instance([[1.0], [-1.0], [0.5]], np.zeros(3), np.ones(3))
    st = softmax_f(inst, [2000.0])
    assert np.all(np.isfinite(st.f)) and st.f[0] == pytest.approx(1.0)
    assert st.log_alpha == pytest.approx(2000.0)
    assert st.alpha == math.inf


def test_state_fields(rand_inst, rand_point):
    st = softmax_f(rand_inst, rand_point)
    assert np.all(st.f > 0)
    assert abs(st.f.sum() - 1) <= 1e-12
    assert np.array_equal(st.c, st.f - rand_inst.b)
    assert st.alpha > 0


def test_x_shape_checked(rand_inst):
    with pytest.raises((InstanceError, ValueError)):
        softmax_f(rand_inst, np.zeros(3))


def test_loss_examples(pair_instance):
    st = softmax_f(pair_instance, [0.5 * math.log(3)])
    inst = tiny_instance([[1.0], [-1.0]], [0.5, 0.5], [1.0, 1.0])
    assert loss_exp(softmax_f(inst, [0.5 * math.log(3)])) == pytest.approx(0.0625)
    zero_b = tiny_instance([[1.0], [-1.0]], [0.0, 0.0], [1.0, 1.0])
    assert loss_exp(softmax_f(zero_b, [0.0])) == pytest.approx(0.25)
    matched = tiny_instance([[1.0], [-1.0]], st.f, [1.0, 1.0])
    assert loss_exp(softmax_f(matched, [0.5 * math.log(3)])) == pytest.approx(0.0, abs=1e-30)


def test_loss_reg_examples():
    inst = tiny_instance(np.eye(2), [0.5, 0.5], [2.0, 2.0])
    assert loss_reg(inst, [1.0, 1.0]) == pytest.approx(4.0)
    assert loss_reg(inst, [0.0, 0.0]) == 0.0


def test_gradient_exp_pair_example(pair_instance):
    st = softmax_f(pair_instance, [0.0])
    g = gradient_exp(st, pair_instance)
    assert g == pytest.approx([-0.5])
    assert g == pytest.approx(fd_gradient(exp_loss_fn(pair_instance), [0.0]), rel=1e-6)


def test_gradient_vanishes_when_b_matches(rand_inst, rand_point):
    f = softmax_f(rand_inst, rand_point).f
    inst = tiny_instance(rand_inst.A, f, rand_inst.w)
    assert np.max(np.abs(gradient_exp(softmax_f(inst, rand_point), inst))) <= 1e-15


def test_gradient_total_identity_case():
    x = np.array([0.3, -0.2])
    probe = tiny_instance(np.eye(2), [0.0, 0.0], [1.0, 1.0])
    inst = tiny_instance(np.eye(2), softmax_f(probe, x).f, [1.0, 1.0])
    assert np.allclose(gradient_total(softmax_f(inst, x), inst), x, atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(5, 40)), int(rng.integers(1, 8))
    inst = random_instance(n, d, seed, R=2.0)
    x = random_point(d, 1.5, seed)
    st = softmax_f(inst, x)
    assert rel_error(gradient_exp(st, inst), fd_gradient(exp_loss_fn(inst), x)) <= 1e-6
    assert rel_error(gradient_total(st, inst), fd_gradient(total_loss_fn(inst), x)) <= 1e-6


@pytest.mark.parametrize("seed", range(8))
def test_softmax_part_of_hessian_matches_finite_differences(seed):
    # the regularizer is exactly quadratic, so check the softmax term on its own
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(4, 25)), int(rng.integers(1, 6))
    inst = random_instance(n, d, seed, R=3.0)
    x = random_point(d, 1.0, seed + 100)
    B = hessian_decomposed(softmax_f(inst, x), inst).materialize()
    H_exp = inst.A.T @ B @ inst.A
    assert rel_error(H_exp, fd_hessian(exp_loss_fn(inst), x)) <= 1e-5
    H = hessian_materialize(hessian_decomposed(softmax_f(inst, x), inst), inst)
    assert rel_error(H, fd_hessian(total_loss_fn(inst), x)) <= 1e-5


def test_decomposition_when_b_matches():
    x = np.array([0.4, -0.7])
    base = random_instance(6, 2, 1)
    f = softmax_f(base, x).f
    inst = tiny_instance(base.A, f, base.w)
    dec = hessian_decomposed(softmax_f(inst, x), inst)
    assert dec.s1 == pytest.approx(f @ f)
    assert np.allclose(dec.d1, 0.0, atol=1e-17)
    assert np.allclose(dec.d2, f * f)
    # only the Gauss-Newton part survives: (diag f - f f^T)^2
    J = np.diag(f) - np.outer(f, f)
    assert np.allclose(dec.materialize(), J @ J, atol=1e-15)
    assert np.allclose(dec.u2, -f * f)


def test_materialized_B_symmetric(rand_inst, rand_point):
    B = hessian_decomposed(softmax_f(rand_inst, rand_point), rand_inst).materialize()
    assert np.max(np.abs(B - B.T)) <= 1e-14


def test_scalar_case_matches_fd():
    inst = random_instance(7, 1, 11, R=2.0)
    x = np.array([0.8])
    H = hessian_materialize(hessian_decomposed(softmax_f(inst, x), inst), inst)
    assert H.shape == (1, 1)
    assert rel_error(H, fd_hessian(total_loss_fn(inst), x)) <= 1e-5


def test_full_minus_diag_is_rank_part(rand_inst, rand_point):
    dec = hessian_decomposed(softmax_f(rand_inst, rand_point), rand_inst)
    full = hessian_materialize(dec, rand_inst, "full")
    diag = hessian_materialize(dec, rand_inst, "diag_only")
    A = rand_inst.A
    assert np.allclose(full - diag, A.T @ dec.rank_part() @ A, rtol=0, atol=1e-10)


def test_matrix_free_apply_agrees(rand_inst, rand_point):
    st = softmax_f(rand_inst, rand_point)
    dec = hessian_decomposed(st, rand_inst)
    H = hessian_total(st, rand_inst)
    v = np.arange(1.0, rand_inst.d + 1)
    assert np.allclose(hessian_apply(dec, rand_inst, v), H @ v, rtol=1e-12)


def test_full_hessian_at_least_l_on_convexity_instances():
    for seed in range(5):
        inst = random_instance(15, 4, seed, l=0.5, w_base=4.0)
        x = random_point(4, 1.0, seed)
        H = hessian_materialize(hessian_decomposed(softmax_f(inst, x), inst), inst)
        assert np.linalg.eigvalsh(H)[0] >= 0.5
