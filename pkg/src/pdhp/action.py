"""Randomized controller and the numerical solution of the control optimality condition."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .critic import (REGULATION, CriticModel, IdealSpec, compute_digamma,
                     successor_precisions)
from .gaussian_algebra import as_vector, floor_spd, spd_inverse, spd_solve
from .rbf import RbfNetwork, make_network, net_eval, place_centers
from .sysid import ForwardModel, model_predict

log = logging.getLogger(__name__)

GAMMA_FLOOR = 1e-8


@dataclass
class RandomizedController:
    """``c(u|x) = N(W psi(x), Gamma)`` in sampling semantics."""

    net: RbfNetwork
    gamma: np.ndarray
    gamma_precision: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        self.gamma_precision = spd_inverse(self.gamma, "Gamma")

    @property
    def control_dim(self) -> int:
        return self.net.output_dim

    def mean(self, x) -> np.ndarray:
        return net_eval(self.net, x)[0]

    def mean_and_jacobian(self, x):
        return net_eval(self.net, x)

    def with_weights(self, weights) -> "RandomizedController":
        return RandomizedController(self.net.with_weights(weights), self.gamma)

    def with_gamma(self, gamma) -> "RandomizedController":
        return RandomizedController(self.net, gamma)


def make_controller(state_dim: int, control_dim: int, x_low, x_high, num_bases: int = 6,
                    gamma=0.01, width_scale: float = 1.0,
                    has_bias: bool = True) -> RandomizedController:
    centers, precisions = place_centers(
        np.broadcast_to(np.asarray(x_low, float), (state_dim,)),
        np.broadcast_to(np.asarray(x_high, float), (state_dim,)),
        num_bases, width_scale,
    )
    net = make_network(centers, precisions, control_dim, has_bias)
    gamma = np.eye(control_dim) * gamma if np.ndim(gamma) == 0 else gamma
    return RandomizedController(net, gamma)


@dataclass
class SolveReport:
    u_star: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    method: str  # "fixed_point" or "bracketed"


class _Problem:
    """Everything about one state that stays fixed while solving for u."""

    def __init__(self, model: ForwardModel, controller: RandomizedController,
                 critic: CriticModel, x, ideal: IdealSpec, a_list=None):
        self.model = model
        self.critic = critic
        n, r = model.state_dim, model.control_dim
        self.x = as_vector(x, n)
        base = model_predict(model, self.x, np.zeros(r))
        self.h, self.g = base.h, base.g
        self.s_inv = model.sigma_precision
        self.g_inv = controller.gamma_precision
        self.cost_u = ideal.control_precision(self.g_inv)
        self.x_ref = ideal.state(n)
        self.u_ref = ideal.control(r)
        self.a_list = a_list if a_list is not None else successor_precisions(model, critic)
        self.normal = self.g.T @ self.s_inv @ self.g + self.cost_u
        self.base = base

    def chi_digamma(self, u) -> np.ndarray:
        """``chi @ digamma(u)`` as an n-vector."""
        if not np.any(self.critic.chi):
            return np.zeros(self.h.shape[0])
        pred = model_predict(self.model, self.x, u)
        bundle = compute_digamma(self.model, self.critic, self.g_inv, self.x, u,
                                 prediction=pred, a_list=self.a_list)
        return self.critic.chi @ bundle.digamma

    def residual(self, u) -> np.ndarray:
        x_hat = self.h + self.g @ u
        return (2.0 * self.g.T @ self.s_inv @ (x_hat - self.x_ref)
                + 2.0 * self.cost_u @ (u - self.u_ref)
                + self.g.T @ self.chi_digamma(u))

    def fixed_point_map(self, u) -> np.ndarray:
        rhs = (self.g.T @ self.s_inv @ (self.h - self.x_ref) - self.cost_u @ self.u_ref
               + 0.5 * self.g.T @ self.chi_digamma(u))
        return -spd_solve(self.normal, rhs, "g'S^-1 g + G^-1")


def optimality_residual(model: ForwardModel, controller: RandomizedController,
                        critic: CriticModel, x, u_hat,
                        ideal: IdealSpec = REGULATION) -> np.ndarray:
    """``2 g'S^-1 (h + g u) + 2 G^-1 u + g' chi digamma(u)``.

    ``G`` is the ideal control precision (the controller's own by default).
    """
    prob = _Problem(model, controller, critic, x, ideal)
    return prob.residual(as_vector(u_hat, model.control_dim))


def damped_fixed_point(residual, fp_map, u0, tol: float, max_iter: int,
                       min_damping: float = 2.0**-6):
    """Iterate ``u <- (1-d) u + d T(u)``, halving ``d`` whenever the residual grows.

    Returns ``(u, iterations, residual_norm, converged)``.
    """
    u = np.array(u0, dtype=float)
    res = np.linalg.norm(residual(u))
    damping = 1.0
    it = 0
    while it < max_iter and res > tol:
        it += 1
        t_u = fp_map(u)
        d = damping
        while True:
            cand = (1.0 - d) * u + d * t_u
            cand_res = np.linalg.norm(residual(cand))
            if cand_res <= res or d <= min_damping:
                break
            d *= 0.5
        if not np.isfinite(cand_res):
            break
        if cand_res > res and d <= min_damping:
            # stalled at the smallest damping
            u, res = cand, cand_res
            break
        u, res = cand, cand_res
    return u, it, float(res), bool(res <= tol)


def bracket_scalar_root(fun, u0: float, tol: float, max_iter: int,
                        start: float = 0.1, limit: float = 1e3):
    """Expand ``[u0 - w, u0 + w]`` until ``fun`` changes sign, then run Brent's method."""
    w = start
    f0 = fun(u0)
    if f0 == 0.0:
        return u0, 0
    while w <= limit:
        for other in (u0 - w, u0 + w):
            f1 = fun(other)
            if np.sign(f1) != np.sign(f0):
                lo, hi = sorted((u0, other))
                root, info = optimize.brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                             maxiter=max_iter, full_output=True)
                return root, info.iterations
        w *= 2.0
    return None, 0


def solve_optimal_control(model: ForwardModel, controller: RandomizedController,
                          critic: CriticModel, x, tol: float = 1e-8, max_iter: int = 100,
                          u0=None, ideal: IdealSpec = REGULATION, a_list=None) -> SolveReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    prob = _Problem(model, controller, critic, x, ideal, a_list)
    return _solve(prob, model.control_dim, tol, max_iter, u0)


def _solve(prob, r: int, tol: float, max_iter: int, u0) -> SolveReport:
    u0 = np.zeros(r) if u0 is None else as_vector(u0, r)
    u, it, res, ok = damped_fixed_point(prob.residual, prob.fixed_point_map, u0, tol, max_iter)
    if ok:
        return SolveReport(u, it, res, True, "fixed_point")
    if r == 1:
        root, extra = bracket_scalar_root(lambda v: float(prob.residual(np.array([v]))[0]),
                                          float(u[0]), tol, max_iter)
        if root is not None:
            u_b = np.array([root])
            res_b = float(np.linalg.norm(prob.residual(u_b)))
            return SolveReport(u_b, it + extra, res_b, res_b <= tol, "bracketed")
    log.warning("control solve did not converge at x=%s (residual %.3e)", prob.x, res)
    return SolveReport(u, it, res, False, "fixed_point")


def update_gamma(residuals, floor: float = GAMMA_FLOOR) -> np.ndarray:
    """Mean outer product of the control residuals, floored at ``floor * I``."""
    res = np.asarray(residuals, dtype=float)
    if res.size == 0:
        raise ValueError("need at least one residual")
    res = res.reshape(res.shape[0], -1)
    return floor_spd(res.T @ res / res.shape[0], floor)


def sample_control(controller: RandomizedController, x, rng: np.random.Generator | None = None,
                   deterministic: bool = False) -> np.ndarray:
    mean = controller.mean(x)
    if deterministic:
        return mean
    if rng is None:
        raise ValueError("sampling mode needs an rng")
    chol = np.linalg.cholesky(controller.gamma)
    return mean + chol @ rng.standard_normal(mean.shape[0])
