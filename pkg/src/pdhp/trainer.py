"""Alternating critic/action training of the probabilistic DHP adaptive critic."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .action import (RandomizedController, SolveReport, make_controller,
                     solve_optimal_control, update_gamma)
from .critic import (CriticModel, IdealSpec, critic_target, make_critic,
                     successor_precisions)
from .rbf import design_matrix, init_weights
from .scg import check_gradient, scg_minimize
from .sysid import ForwardModel

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.10


class PhaseFailure(RuntimeError):
    pass


@dataclass
class TrainConfig:
    num_states: int = 200
    state_range: tuple[float, float] = (-4.0, 4.0)
    cycles: int = 3
    scg_max_iter: int = 10000
    tol_objective: float = 1e-3
    tol_weights: float = 1e-3
    seed: int = 0
    action_bases: int = 6
    critic_bases: int = 6
    width_scale: float = 1.0
    # Where the action/critic centers go; None means state_range.
    center_range: tuple[float, float] | None = None
    action_bias: bool = True
    critic_bias: bool = False
    gamma_init: float = 0.01
    # Fixed ideal control covariance; None ties it to the controller's Gamma.
    ideal_control_cov: float | None = None
    solver_tol: float = 1e-8
    solver_max_iter: int = 100
    check_gradients: bool = False

    def __post_init__(self):
        if self.num_states <= 0 or self.cycles < 0 or self.scg_max_iter <= 0:
            raise ValueError("counts must be positive (cycles may be zero)")
        if self.tol_objective <= 0 or self.tol_weights <= 0 or self.solver_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.action_bases <= 0 or self.critic_bases <= 0 or self.width_scale <= 0:
            raise ValueError("network sizes and width scale must be positive")
        lo, hi = self.state_range
        if not lo < hi:
            raise ValueError("state_range must be an increasing interval")

    @property
    def ideal(self) -> IdealSpec:
        return IdealSpec(control_cov=self.ideal_control_cov)

    @property
    def centers_interval(self) -> tuple[float, float]:
        return self.center_range if self.center_range is not None else self.state_range


@dataclass
class PhaseRecord:
    cycle: int
    phase: str  # "critic" or "action"
    iterations: int
    initial_objective: float
    final_objective: float
    weight_delta: float
    converged: bool
    failed_states: int = 0
    gradient_error: float | None = None


@dataclass
class TrainingRun:
    method: str
    state_samples: np.ndarray  # (N, n)
    controller: RandomizedController
    critic: CriticModel
    phases: list[PhaseRecord] = field(default_factory=list)
    gamma_history: list[np.ndarray] = field(default_factory=list)
    # rows of (cycle, phase, iteration, objective, weight_delta); iteration 0 is the start point
    log_rows: list[tuple[int, str, int, float, float]] = field(default_factory=list)
    target_evaluations: int = 0
    solve_reports: list[SolveReport] = field(default_factory=list)

    def write_log(self, path) -> None:
        write_training_log(path, self.log_rows)


LOG_HEADER = "cycle,phase,iteration,objective,weight_delta"


def write_training_log(path, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(LOG_HEADER + "\n")
        for cycle, phase, it, obj, dw in rows:
            fh.write(f"{cycle},{phase},{it},{obj!r},{dw!r}\n")


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def sample_states(config: TrainConfig, state_dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(seed, 0))
    lo, hi = config.state_range
    return rng.uniform(lo, hi, size=(config.num_states, state_dim))


def least_squares_objective(design: np.ndarray, targets: np.ndarray) -> Callable:
    """``F(W) = sum_i |W phi_i - y_i|^2`` with its gradient, W of shape (out, M)."""

    def objective(w):
        err = design @ w.T - targets  # (N, out)
        return float(np.sum(err * err)), 2.0 * err.T @ design

    return objective


def _fit_weights(run: TrainingRun, cycle: int, phase: str, design, targets, w0,
                 config: TrainConfig, seed: int) -> tuple[np.ndarray, PhaseRecord]:
    objective = least_squares_objective(design, targets)
    grad_err = None
    if config.check_gradients:
        rng = np.random.default_rng(derive_seed(seed, 1000 + 2 * cycle + (phase == "action")))
        grad_err = max(check_gradient(objective, w0 + rng.standard_normal(w0.shape))
                       for _ in range(5))
    w, report = scg_minimize(objective, w0, config.scg_max_iter, config.tol_objective,
                             config.tol_weights)
    run.log_rows.append((cycle, phase, 0, report.initial_objective, 0.0))
    run.log_rows.extend((cycle, phase, it, f, dw) for it, f, dw in report.history)
    rec = PhaseRecord(cycle, phase, report.iterations, report.initial_objective,
                      report.objective, float(np.max(np.abs(w - w0))), report.converged,
                      gradient_error=grad_err)
    run.phases.append(rec)
    return w, rec


TargetFn = Callable[[ForwardModel, RandomizedController, CriticModel, np.ndarray], np.ndarray]
SolveFn = Callable[[ForwardModel, RandomizedController, CriticModel, np.ndarray, np.ndarray], SolveReport]


def prob_target_fn(config: TrainConfig) -> Callable:
    def make(model: ForwardModel, critic: CriticModel) -> TargetFn:
        a_list = successor_precisions(model, critic)
        return lambda m, c, k, x: critic_target(m, c, k, x, config.ideal, a_list=a_list)
    return make


def prob_solve_fn(config: TrainConfig) -> Callable:
    def make(model: ForwardModel, critic: CriticModel) -> SolveFn:
        a_list = successor_precisions(model, critic)
        return lambda m, c, k, x, u0: solve_optimal_control(
            m, c, k, x, config.solver_tol, config.solver_max_iter, u0=u0,
            ideal=config.ideal, a_list=a_list)
    return make


def train_critic_phase(run: TrainingRun, model: ForwardModel, controller: RandomizedController,
                       critic: CriticModel, config: TrainConfig, cycle: int = 1,
                       target_factory: Callable | None = None, seed: int = 0) -> CriticModel:
    """Freeze targets from the current nets, then fit the critic weights to them."""
    factory = target_factory or prob_target_fn(config)
    target = factory(model, critic)
    targets = np.array([target(model, controller, critic, x) for x in run.state_samples])
    run.target_evaluations += len(run.state_samples)
    design = design_matrix(critic.net, run.state_samples)
    w, _ = _fit_weights(run, cycle, "critic", design, targets, critic.chi.copy(), config, seed)
    return critic.with_weights(w)


def train_action_phase(run: TrainingRun, model: ForwardModel, controller: RandomizedController,
                       critic: CriticModel, config: TrainConfig, cycle: int = 1,
                       solve_factory: Callable | None = None, seed: int = 0,
                       gamma_fixed: bool = False) -> RandomizedController:
    """Solve for the optimal control at every sample, fit the action net, re-estimate Gamma."""
    factory = solve_factory or prob_solve_fn(config)
    solve = factory(model, critic)
    keep, u_star = [], []
    failed = 0
    for i, x in enumerate(run.state_samples):
        rep = solve(model, controller, critic, x, controller.mean(x))
        run.solve_reports.append(rep)
        if rep.converged:
            keep.append(i)
            u_star.append(rep.u_star)
        else:
            failed += 1
            log.warning("excluding state %s from the action fit (residual %.3e)", x, rep.residual_norm)
    if failed > MAX_FAILED_FRACTION * len(run.state_samples):
        raise PhaseFailure(f"{failed} of {len(run.state_samples)} control solves failed in cycle {cycle}")
    states = run.state_samples[keep]
    u_star = np.array(u_star)
    design = design_matrix(controller.net, states)
    w, rec = _fit_weights(run, cycle, "action", design, u_star, controller.net.weights.copy(),
                          config, seed)
    rec.failed_states = failed
    fitted = design @ w.T
    new = controller.with_weights(w)
    if not gamma_fixed:
        new = new.with_gamma(update_gamma(u_star - fitted))
    run.gamma_history.append(update_gamma(u_star - fitted) if gamma_fixed else new.gamma)
    return new


def initial_networks(model: ForwardModel, config: TrainConfig, seed: int):
    n, r = model.state_dim, model.control_dim
    lo, hi = config.centers_interval
    controller = make_controller(n, r, lo, hi, config.action_bases, config.gamma_init,
                                 config.width_scale, config.action_bias)
    critic = make_critic(n, lo, hi, config.critic_bases, config.width_scale, config.critic_bias)
    controller = RandomizedController(init_weights(controller.net, derive_seed(seed, 1)),
                                      controller.gamma)
    critic = CriticModel(init_weights(critic.net, derive_seed(seed, 2)))
    return controller, critic


def run_training(model: ForwardModel, config: TrainConfig, seed: int | None = None,
                 method: str = "prob", target_factory=None, solve_factory=None,
                 gamma_fixed: bool = False) -> TrainingRun:
    """Initialize both nets, then alternate critic and action phases ``config.cycles`` times."""
    seed = config.seed if seed is None else seed
    controller, critic = initial_networks(model, config, seed)
    run = TrainingRun(method, sample_states(config, model.state_dim, seed), controller, critic)
    run.gamma_history.append(controller.gamma)
    for cycle in range(1, config.cycles + 1):
        critic = train_critic_phase(run, model, controller, critic, config, cycle,
                                    target_factory, seed)
        controller = train_action_phase(run, model, controller, critic, config, cycle,
                                        solve_factory, seed, gamma_fixed)
        log.info("cycle %d: Gamma=%s", cycle, np.array2string(controller.gamma.ravel()))
    run.controller = controller
    run.critic = critic
    return run
