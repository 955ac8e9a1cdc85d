import numpy as np
import pytest

from pdhp.action import GAMMA_FLOOR, make_controller
from pdhp.critic import make_critic
from pdhp.rbf import basis_eval, design_matrix
from pdhp.trainer import (LOG_HEADER, PhaseFailure, TrainConfig, TrainingRun, derive_seed,
                          least_squares_objective, run_training, sample_states,
                          train_action_phase, train_critic_phase)
from pdhp.verify import chi_zero_control, constant_model

TIGHT = dict(tol_objective=1e-14, tol_weights=1e-10)


def small_config(**kw):
    base = dict(num_states=40, cycles=1, center_range=(-1.0, 2.5), width_scale=0.8,
                action_bias=False, ideal_control_cov=0.01)
    base.update(kw)
    return TrainConfig(**base)


def _run(states, controller, critic):
    return TrainingRun("prob", np.atleast_2d(states).reshape(-1, 1), controller, critic)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(num_states=0)
    with pytest.raises(ValueError):
        TrainConfig(tol_objective=0.0)
    with pytest.raises(ValueError):
        TrainConfig(state_range=(1.0, -1.0))
    assert TrainConfig(cycles=0).cycles == 0


def test_state_samples_uniform_and_seeded():
    cfg = TrainConfig(num_states=5000)
    a = sample_states(cfg, 1, 3)
    np.testing.assert_array_equal(a, sample_states(cfg, 1, 3))
    assert a.min() >= -4 and a.max() <= 4
    assert a.mean() == pytest.approx(0.0, abs=0.15)
    assert derive_seed(3, 0) != derive_seed(3, 1)


def test_least_squares_gradient(rng):
    design, targets = rng.normal(size=(10, 4)), rng.normal(size=(10, 2))
    obj = least_squares_objective(design, targets)
    w = rng.normal(size=(2, 4))
    f, g = obj(w)
    assert f == pytest.approx(np.sum((design @ w.T - targets) ** 2))
    eps = 1e-6
    e = np.zeros_like(w)
    e[1, 2] = eps
    assert g[1, 2] == pytest.approx((obj(w + e)[0] - obj(w - e)[0]) / (2 * eps), rel=1e-6)


def test_zero_targets_zero_critic_stop_immediately():
    critic = make_critic(1, -1, 1, 3)
    run = _run(np.linspace(-1, 1, 5), make_controller(1, 1, -1, 1, 3), critic)
    out = train_critic_phase(run, None, run.controller, critic, TrainConfig(),
                             target_factory=lambda m, k: (lambda *a: np.zeros(1)))
    rec = run.phases[0]
    assert rec.final_objective == 0.0 and rec.iterations == 1 and rec.converged
    np.testing.assert_array_equal(out.chi, 0.0)


def test_single_state_single_basis_exact():
    critic = make_critic(1, -0.5, 0.5, 1)  # center 0, precision from a unit span
    x = np.array([0.3])
    run = _run(x, make_controller(1, 1, -1, 1, 3), critic)
    out = train_critic_phase(run, None, run.controller, critic, TrainConfig(**TIGHT),
                             target_factory=lambda m, k: (lambda *a: np.array([2.5])))
    phi = basis_eval(critic.net, x).values[0]
    assert out.chi[0, 0] == pytest.approx(2.5 / phi, abs=1e-6)


def test_targets_frozen_during_phase(benchmark_model):
    calls = []

    def factory(model, critic):
        calls.append("factory")
        return lambda m, c, k, x: (calls.append("target"), np.array([x[0]]))[1]

    cfg = small_config()
    critic = make_critic(1, -1, 2.5, 6, 0.8)
    run = _run(sample_states(cfg, 1, 0), make_controller(1, 1, -1, 2.5, 6), critic)
    train_critic_phase(run, benchmark_model, run.controller, critic, cfg, target_factory=factory)
    assert calls.count("factory") == 1
    assert calls.count("target") == cfg.num_states == run.target_evaluations
    assert run.phases[0].iterations > 1


def _closed_form_fit(model, bases, width_scale=1.0):
    cfg = TrainConfig(num_states=200, **TIGHT)
    ctrl = make_controller(1, 1, -4, 4, bases, 0.01, width_scale)
    critic = make_critic(1, -4, 4, 6)
    run = _run(sample_states(cfg, 1, 0), ctrl, critic)
    new = train_action_phase(run, model, ctrl, critic, cfg)
    grid = np.linspace(-4, 4, 81)
    ref = np.array([chi_zero_control(model, ctrl.gamma_precision, [x])[0] for x in grid])
    fitted = np.array([new.mean([x])[0] for x in grid])
    return run, new, float(np.max(np.abs(fitted - ref)))


def test_action_phase_reaches_least_squares_optimum(benchmark_model):
    run, new, _ = _closed_form_fit(benchmark_model, 6)
    design = design_matrix(new.net, run.state_samples)
    u_star = np.array([r.u_star[0] for r in run.solve_reports])
    w_ls = np.linalg.lstsq(design, u_star, rcond=None)[0]
    best = np.sum((design @ w_ls - u_star) ** 2)
    assert run.phases[-1].final_objective == pytest.approx(best, rel=1e-6, abs=1e-10)


def test_action_phase_reproduces_closed_form_with_enough_bases(benchmark_model):
    assert _closed_form_fit(benchmark_model, 15)[2] <= 0.05


@pytest.mark.xfail(strict=True, reason="six bases cannot resolve the cos(3x) drift; "
                   "the least-squares floor is about 0.4")
def test_action_phase_reproduces_closed_form_six_bases(benchmark_model):
    assert _closed_form_fit(benchmark_model, 6)[2] <= 0.05


def test_gamma_is_mean_squared_residual(benchmark_model):
    cfg = small_config()
    ctrl = make_controller(1, 1, -1, 2.5, 6, 0.01, 0.8, False)
    critic = make_critic(1, -1, 2.5, 6, 0.8)
    run = _run(sample_states(cfg, 1, 0), ctrl, critic)
    new = train_action_phase(run, benchmark_model, ctrl, critic, cfg)
    u_star = np.array([r.u_star[0] for r in run.solve_reports])
    fitted = design_matrix(new.net, run.state_samples) @ new.net.weights[0]
    assert new.gamma[0, 0] == pytest.approx(np.mean((u_star - fitted) ** 2), rel=1e-12)


def test_zero_optimal_controls_shrink_weights_and_gamma():
    model = constant_model([0.0], [[2.0]], [[0.01]])
    cfg = TrainConfig(num_states=30, **TIGHT)
    ctrl = make_controller(1, 1, -4, 4, 6, 0.01)
    ctrl = ctrl.with_weights(np.full(ctrl.net.weights.shape, 0.3))
    critic = make_critic(1, -4, 4, 6)
    run = _run(sample_states(cfg, 1, 0), ctrl, critic)
    new = train_action_phase(run, model, ctrl, critic, cfg)
    assert np.max(np.abs(new.net.weights)) < 1e-5
    assert new.gamma[0, 0] == GAMMA_FLOOR


def test_action_phase_aborts_on_many_failures(benchmark_model):
    from pdhp.action import SolveReport

    def failing(model, critic):
        return lambda m, c, k, x, u0: SolveReport(np.zeros(1), 100, 1.0, False, "fixed_point")

    cfg = small_config()
    ctrl = make_controller(1, 1, -1, 2.5, 6)
    run = _run(sample_states(cfg, 1, 0), ctrl, make_critic(1, -1, 2.5, 6))
    with pytest.raises(PhaseFailure):
        train_action_phase(run, benchmark_model, ctrl, run.critic, cfg, solve_factory=failing)


def test_zero_cycles_and_header_only_log(benchmark_model, tmp_path):
    run = run_training(benchmark_model, small_config(cycles=0))
    assert run.phases == [] and run.log_rows == []
    run.write_log(tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text() == LOG_HEADER + "\n"


def test_short_training_is_deterministic_and_logged(benchmark_model, tmp_path):
    cfg = small_config(cycles=2, check_gradients=True)
    a = run_training(benchmark_model, cfg, seed=4)
    b = run_training(benchmark_model, cfg, seed=4)
    np.testing.assert_array_equal(a.controller.net.weights, b.controller.net.weights)
    np.testing.assert_array_equal(a.critic.chi, b.critic.chi)
    assert [(p.cycle, p.phase) for p in a.phases] == [(1, "critic"), (1, "action"),
                                                      (2, "critic"), (2, "action")]
    assert all(p.gradient_error < 1e-4 for p in a.phases)
    assert all(p.final_objective <= p.initial_objective for p in a.phases)
    assert len(a.gamma_history) == 3
    a.write_log(tmp_path / "a.csv")
    b.write_log(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    phases_logged = {line.split(",")[:2][1] for line in (tmp_path / "a.csv").read_text().splitlines()[1:]}
    assert phases_logged == {"critic", "action"}
    c = run_training(benchmark_model, cfg, seed=5)
    assert not np.array_equal(a.critic.chi, c.critic.chi)


def test_fixed_point_iterations_stay_small(benchmark_model):
    run = run_training(benchmark_model, small_config(cycles=2))
    last = run.solve_reports[-40:]
    assert all(r.converged for r in last)
    assert max(r.iterations for r in last) <= 30
