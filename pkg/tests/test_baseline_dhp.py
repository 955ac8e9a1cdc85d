import numpy as np
import pytest

from pdhp.baseline_dhp import (DhpConfig, dhp_critic_target, dhp_residual, dhp_solve_control,
                               run_dhp_training)
from pdhp.critic import make_critic
from pdhp.sysid import model_predict
from pdhp.trainer import TrainConfig
from pdhp.verify import central_difference, random_forward_model

from .helpers import random_controller, random_critic, zero_controller


def test_matched_weights(benchmark_model):
    cfg = DhpConfig.matched(benchmark_model, 0.01)
    np.testing.assert_allclose(cfg.cost_state_weight, benchmark_model.sigma_precision)
    np.testing.assert_allclose(cfg.cost_control_weight, [[100.0]])
    with pytest.raises(ValueError):
        DhpConfig(np.array([[1.0]]), np.array([[-1.0]]))


def test_target_without_critic_or_action(rng):
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    cfg = DhpConfig.matched(model, 0.01)
    x = np.array([0.5])
    p = model_predict(model, x, [0.0])
    lam = dhp_critic_target(model, zero_controller(), make_critic(1, -2, 2, 3), x, cfg)
    np.testing.assert_allclose(lam, 2.0 * p.h @ cfg.cost_state_weight @ p.h_prime, rtol=1e-12)


def _constant_critic(value):
    """Critic whose output is ``value`` everywhere (bias only)."""
    crit = make_critic(1, -2, 2, 3, has_bias=True)
    return crit.with_weights([[0.0, 0.0, 0.0, value]])


def test_target_is_derivative_of_two_step_cost(rng):
    # a constant lambda = c freezes the continuation at c * x_hat
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    ctrl = random_controller(rng)
    cfg = DhpConfig.matched(model, 0.02)
    c = 3.0
    x = np.array([0.2])

    def two_step(v, with_next=True):
        u = ctrl.mean(v)
        xh = model_predict(model, v, u).x_hat
        cost = xh @ cfg.cost_state_weight @ xh + u @ cfg.cost_control_weight @ u
        return np.array([cost + (c * xh[0] if with_next else 0.0)])

    lam = dhp_critic_target(model, ctrl, _constant_critic(c), x, cfg)
    np.testing.assert_allclose(lam, central_difference(two_step, x)[0], rtol=1e-6)
    no_prop = dhp_critic_target(model, ctrl, random_critic(rng), x, cfg, propagate=False)
    np.testing.assert_allclose(no_prop, central_difference(lambda v: two_step(v, False), x)[0],
                               rtol=1e-6)


def test_matches_probabilistic_terms_without_propagation(rng):
    from pdhp.critic import critic_target_terms
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    ctrl = random_controller(rng, gamma=0.03)
    cfg = DhpConfig(model.sigma_precision, ctrl.gamma_precision)
    x = np.array([-0.6])
    t = critic_target_terms(model, ctrl, make_critic(1, -2, 2, 3), x)
    np.testing.assert_allclose(dhp_critic_target(model, ctrl, random_critic(rng), x, cfg, False),
                               t.term1 + t.term2 + t.term3, rtol=1e-12)


def test_worked_control_and_origin():
    from pdhp.verify import constant_model
    crit = make_critic(1, -1, 1, 3)
    cfg = DhpConfig(np.array([[100.0]]), np.array([[100.0]]))
    rep = dhp_solve_control(constant_model([1.0], [[2.0]], [[0.01]]), crit, [0.0], cfg, tol=1e-10)
    assert rep.u_star[0] == pytest.approx(-0.4, abs=1e-12)
    rep = dhp_solve_control(constant_model([0.0], [[2.0]], [[0.01]]), crit, [0.0], cfg)
    assert rep.u_star[0] == 0.0


def test_control_closed_form_without_critic(rng):
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    cfg = DhpConfig.matched(model, 0.01)
    x = np.array([-0.8])
    p = model_predict(model, x, [0.0])
    q, r = cfg.cost_state_weight, cfg.cost_control_weight
    ref = -np.linalg.solve(p.g.T @ q @ p.g + r, p.g.T @ q @ p.h)
    rep = dhp_solve_control(model, make_critic(1, -2, 2, 3), x, cfg, tol=1e-10)
    np.testing.assert_allclose(rep.u_star, ref, atol=1e-10)
    assert np.linalg.norm(dhp_residual(model, make_critic(1, -2, 2, 3), x, ref, cfg)) < 1e-9


def test_solve_with_critic_zeroes_residual(rng):
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    cfg = DhpConfig.matched(model, 0.01)
    crit = random_critic(rng)
    for x in rng.uniform(-2, 2, 5):
        rep = dhp_solve_control(model, crit, [x], cfg)
        assert rep.converged
        assert np.linalg.norm(dhp_residual(model, crit, [x], rep.u_star, cfg)) <= 1e-8
    with pytest.raises(ValueError):
        dhp_solve_control(model, crit, [0.0], cfg, tol=-1.0)


def test_training_keeps_gamma_fixed(benchmark_model):
    cfg = TrainConfig(num_states=40, cycles=1, center_range=(-1.0, 2.5), width_scale=0.8,
                      action_bias=False, ideal_control_cov=0.01)
    run = run_dhp_training(benchmark_model, cfg)
    assert run.method == "dhp"
    assert run.controller.gamma[0, 0] == 0.01
    assert len(run.phases) == 2


def test_zero_cycles_and_determinism(benchmark_model):
    cfg = TrainConfig(num_states=40, cycles=0)
    run = run_dhp_training(benchmark_model, cfg)
    assert run.phases == []
    cfg = TrainConfig(num_states=40, cycles=1, ideal_control_cov=0.01)
    a, b = run_dhp_training(benchmark_model, cfg, seed=2), run_dhp_training(benchmark_model, cfg, seed=2)
    np.testing.assert_array_equal(a.critic.chi, b.critic.chi)
    np.testing.assert_array_equal(a.controller.net.weights, b.controller.net.weights)


def test_benchmark_run_regulates_model_mean(benchmark_model):
    from pdhp.config import ExperimentConfig
    run = run_dhp_training(benchmark_model, ExperimentConfig().validate().train_config())
    x = np.array([2.0])
    path = []
    for _ in range(50):
        x = model_predict(benchmark_model, x, run.controller.mean(x)).x_hat
        path.append(abs(x[0]))
    assert max(path[-20:]) < 0.3
