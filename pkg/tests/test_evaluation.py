import numpy as np
import pytest

from repdyn.evaluation import (
    eval_error,
    l1_ball_second_moment,
    mc_eval_error,
    optimal_representation,
    residual_eval_error,
    sample_l1_ball,
    td_error_gradient,
    td_eval_error,
)
from repdyn.learning import Rule
from repdyn.linalg import sin_theta_distance, weighted_truncated_svd
from repdyn.mdp import random_reversible_mdp, random_symmetric_mdp


def test_full_basis_has_zero_error():
    m = random_reversible_mdp(0, 7)
    for method in Rule:
        assert eval_error(np.eye(7), m, method) < 1e-18


def test_mc_error_is_tail_energy():
    m = random_reversible_mdp(1, 10)
    sv = weighted_truncated_svd(m.sr_matrix, m.state_weights, 3)
    err = mc_eval_error(sv.subspace().basis, m)
    assert abs(err - np.sum(sv.all_singular_values[3:] ** 2)) < 1e-10 * err


def test_error_ordering_mc_is_smallest():
    rng = np.random.default_rng(2)
    m = random_reversible_mdp(2, 9)
    for _ in range(5):
        phi = rng.standard_normal((9, 3))
        mc = mc_eval_error(phi, m)
        assert mc <= td_eval_error(phi, m) + 1e-12
        assert mc <= residual_eval_error(phi, m) + 1e-12


def test_l1_ball_samples():
    x = sample_l1_ball(np.random.default_rng(3), 20_000, 5)
    assert np.abs(x).sum(axis=0).max() <= 1.0
    second = np.mean(x * x, axis=1)
    np.testing.assert_allclose(second, l1_ball_second_moment(5), rtol=0.05)


def test_td_gradient_matches_finite_differences():
    m = random_reversible_mdp(4, 6)
    phi = np.random.default_rng(4).standard_normal((6, 2))
    _, g = td_error_gradient(phi, m)
    h = 1e-6
    e = np.zeros_like(phi)
    e[2, 1] = h
    fd = (td_eval_error(phi + e, m) - td_eval_error(phi - e, m)) / (2 * h)
    assert abs(g[2, 1] - fd) < 1e-5 * max(1.0, abs(fd))


def test_symmetric_optima_coincide():
    m = random_symmetric_mdp(5, 8)
    mc = optimal_representation(m, 2, Rule.MC)
    res = optimal_representation(m, 2, Rule.RESIDUAL)
    assert sin_theta_distance(mc.subspace, res.subspace) < 1e-8
    assert mc.certified


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_td_search_not_worse_than_mc_optimum_under_td_error():
    m = random_reversible_mdp(6, 7)
    td = optimal_representation(m, 2, Rule.TD, restarts=4, maxiter=200)
    mc = optimal_representation(m, 2, Rule.MC)
    assert td.error <= td_eval_error(mc.subspace.basis, m) + 1e-12
