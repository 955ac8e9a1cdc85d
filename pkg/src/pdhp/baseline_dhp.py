"""Conventional (deterministic) DHP baseline.

Uses only the mean of the identified forward model. The stage cost is
``U_d = x'Qx + u'Ru`` with ``Q = Sigma^-1`` and ``R`` the inverse of the
ideal control covariance (``Gamma_init`` when none is fixed) by default, so
the comparison with the probabilistic critic isolates the expectation terms.
The baseline's cost is not prescribed by the method it is compared with;
this weighting is a design choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import RandomizedController, SolveReport, _solve
from .critic import CriticModel
from .gaussian_algebra import as_vector, check_spd, spd_inverse, spd_solve
from .rbf import net_eval
from .sysid import ForwardModel, model_predict
from .trainer import TrainConfig, TrainingRun, run_training


@dataclass(frozen=True)
class DhpConfig:
    cost_state_weight: np.ndarray
    cost_control_weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cost_state_weight", check_spd(self.cost_state_weight, "Q"))
        object.__setattr__(self, "cost_control_weight", check_spd(self.cost_control_weight, "R"))

    @classmethod
    def matched(cls, model: ForwardModel, gamma_init) -> "DhpConfig":
        gamma = np.eye(model.control_dim) * gamma_init if np.ndim(gamma_init) == 0 else gamma_init
        return cls(model.sigma_precision, spd_inverse(gamma))


def dhp_critic_target(model: ForwardModel, controller: RandomizedController, critic: CriticModel,
                      x, cfg: DhpConfig, propagate: bool = True) -> np.ndarray:
    """Deterministic DHP target at ``x``, everything evaluated at the mean successor.

    ``propagate=False`` drops the two terms carrying ``lambda(x_hat)``.
    """
    n = model.state_dim
    x = as_vector(x, n)
    u_hat, w_psi_prime = controller.mean_and_jacobian(x)
    pred = model_predict(model, x, u_hat)
    q, r = cfg.cost_state_weight, cfg.cost_control_weight
    dx_dx = pred.h_prime + np.einsum("ikj,k->ij", pred.g_prime, u_hat)
    g_w = pred.g @ w_psi_prime
    lam = (2.0 * pred.x_hat @ q @ dx_dx + 2.0 * pred.x_hat @ q @ g_w
           + 2.0 * u_hat @ r @ w_psi_prime)
    if propagate:
        lam_next = net_eval(critic.net, pred.x_hat)[0]
        lam = lam + lam_next @ dx_dx + lam_next @ g_w
    return lam


class _DhpProblem:
    def __init__(self, model: ForwardModel, critic: CriticModel, x, cfg: DhpConfig):
        n, r = model.state_dim, model.control_dim
        self.x = as_vector(x, n)
        base = model_predict(model, self.x, np.zeros(r))
        self.h, self.g = base.h, base.g
        self.q, self.r = cfg.cost_state_weight, cfg.cost_control_weight
        self.critic = critic
        self.normal = self.g.T @ self.q @ self.g + self.r

    def lam(self, u):
        return net_eval(self.critic.net, self.h + self.g @ u)[0]

    def residual(self, u):
        return 2.0 * self.g.T @ self.q @ (self.h + self.g @ u) + 2.0 * self.r @ u + self.g.T @ self.lam(u)

    def fixed_point_map(self, u):
        return -spd_solve(self.normal, self.g.T @ self.q @ self.h + 0.5 * self.g.T @ self.lam(u))


def dhp_residual(model: ForwardModel, critic: CriticModel, x, u, cfg: DhpConfig) -> np.ndarray:
    """``2 g'Q x_hat + 2 R u + g' lambda(x_hat)``."""
    return _DhpProblem(model, critic, x, cfg).residual(as_vector(u, model.control_dim))


def dhp_solve_control(model: ForwardModel, critic: CriticModel, x, cfg: DhpConfig,
                      tol: float = 1e-8, max_iter: int = 100, u0=None) -> SolveReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _solve(_DhpProblem(model, critic, x, cfg), model.control_dim, tol, max_iter, u0)


def run_dhp_training(model: ForwardModel, config: TrainConfig, seed: int | None = None,
                     cfg: DhpConfig | None = None) -> TrainingRun:
    """Same sampling, initialization and alternation as the probabilistic run."""
    if cfg is None:
        weight = config.gamma_init if config.ideal_control_cov is None else config.ideal_control_cov
        cfg = DhpConfig.matched(model, weight)

    def target_factory(model, critic):
        return lambda m, c, k, x: dhp_critic_target(m, c, k, x, cfg)

    def solve_factory(model, critic):
        return lambda m, c, k, x, u0: dhp_solve_control(
            m, k, x, cfg, config.solver_tol, config.solver_max_iter, u0=u0)

    return run_training(model, config, seed, method="dhp", target_factory=target_factory,
                        solve_factory=solve_factory, gamma_fixed=True)
