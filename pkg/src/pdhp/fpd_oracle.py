"""Quadrature evaluation of the exact one-step FPD objects for scalar problems.

Used as an independent check on the closed-form critic and control formulas.
The successor density is the normalized version of the model's factor
``exp[-(x' - x_hat)^2 / Sigma]``, i.e. a Gaussian with variance ``Sigma/2``,
so that ``ln(s / s_ideal)`` is exactly ``(2 x_hat x' - x_hat^2) / Sigma``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .critic import CriticModel, IdealSpec
from .rbf import design_matrix
from .sysid import ForwardModel, model_predict


class GridError(ValueError):
    pass


MASS_TOL = 1e-8


@dataclass(frozen=True)
class QuadratureGrid:
    """Trapezoid grids.

    The state grid is laid out around each successor mean: ``num_x`` nodes
    spanning ``+-half_width`` standard deviations. The control grid is
    absolute, ``[u_low, u_high]`` with ``u_spacing``.
    """

    half_width: float = 8.0
    num_x: int = 801
    u_low: float = -4.0
    u_high: float = 4.0
    u_spacing: float = 1e-3

    def __post_init__(self):
        if self.half_width < 6.0:
            raise GridError("state grid must cover at least 6 standard deviations")
        if self.num_x < 3 or self.u_spacing <= 0 or self.u_high <= self.u_low:
            raise GridError("degenerate quadrature grid")

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.num_x)

    @property
    def t_weights(self) -> np.ndarray:
        t = self.t_nodes
        w = np.full(t.shape, t[1] - t[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @property
    def u_nodes(self) -> np.ndarray:
        n = int(round((self.u_high - self.u_low) / self.u_spacing)) + 1
        return self.u_low + self.u_spacing * np.arange(n)

    def refined(self, factor: int) -> "QuadratureGrid":
        return QuadratureGrid(self.half_width, (self.num_x - 1) * factor + 1, self.u_low,
                              self.u_high, self.u_spacing / factor)


def _scalar(model: ForwardModel):
    if model.state_dim != 1 or model.control_dim != 1:
        raise ValueError("the quadrature oracle handles scalar state and control only")


def _ideal_control_precision(ideal: IdealSpec, controller=None) -> float:
    if ideal.control_cov is not None:
        return float(1.0 / np.asarray(ideal.control_cov, float).reshape(-1)[0])
    if controller is None:
        raise ValueError("ideal control covariance is tied to a controller; pass one")
    return float(controller.gamma_precision[0, 0])


def _beta_batch(model: ForwardModel, ideal: IdealSpec, cost_to_go: Callable | None,
                x_hat: np.ndarray, grid: QuadratureGrid, ctg_variance: float | None = None,
                ctg_scale: float = 1.0) -> np.ndarray:
    """beta for a vector of successor means; ``cost_to_go`` is ``-ln gamma``.

    ``ctg_variance`` overrides the variance under which the continuation is
    averaged (used to fold in the controller's own randomization) and
    ``ctg_scale`` multiplies the continuation.
    """
    sigma = float(model.sigma[0, 0])
    t, w = grid.t_nodes, grid.t_weights
    density = np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)  # in the standardized variable
    mass = density @ w
    if abs(mass - 1.0) > MASS_TOL:
        raise GridError(f"quadrature mass {mass!r} deviates from 1 by more than {MASS_TOL}")
    m = ideal.state(1)[0]
    xs = x_hat[:, None] + np.sqrt(sigma / 2.0) * t[None, :]
    log_ratio = ((xs - m) ** 2 - (xs - x_hat[:, None]) ** 2) / sigma
    out = (log_ratio * density[None, :]) @ w
    if cost_to_go is not None:
        if ctg_variance is not None:
            xs = x_hat[:, None] + np.sqrt(ctg_variance) * t[None, :]
        out = out + ctg_scale * ((cost_to_go(xs) * density[None, :]) @ w)
    return out


def beta(model: ForwardModel, ideal: IdealSpec, ln_gamma_next: Callable | None, u, x,
         grid: QuadratureGrid = QuadratureGrid()) -> float:
    """``int s(x'|u,x) [ln(s/s_ideal) - ln gamma(x')] dx'`` by the trapezoid rule.

    ``ln_gamma_next`` maps an array of states to ``ln gamma``; None means zero.
    """
    _scalar(model)
    x_hat = model_predict(model, x, u).x_hat
    ctg = None if ln_gamma_next is None else (lambda xs: -np.asarray(ln_gamma_next(xs)))
    return float(_beta_batch(model, ideal, ctg, x_hat, grid)[0])


def one_step_objective(model, ideal, x, us, cost_to_go=None, grid=QuadratureGrid(),
                       controller=None, ctg_variance=None, ctg_scale=1.0) -> np.ndarray:
    """``(u - u_ideal)^2 / Gamma_ideal + beta(u, x)`` on an array of controls."""
    _scalar(model)
    us = np.atleast_1d(np.asarray(us, dtype=float))
    pred = model_predict(model, x, [0.0])
    x_hat = pred.h[0] + pred.g[0, 0] * us
    g_prec = _ideal_control_precision(ideal, controller)
    u_ref = ideal.control(1)[0]
    return g_prec * (us - u_ref) ** 2 + _beta_batch(model, ideal, cost_to_go, x_hat, grid,
                                                    ctg_variance, ctg_scale)


def _grid_argmin(fun_batch: Callable, grid: QuadratureGrid, refine: bool) -> float:
    us = grid.u_nodes
    vals = fun_batch(us)
    k = int(np.argmin(vals))
    if k == 0 or k == len(us) - 1:
        raise GridError(f"minimum at the control-grid boundary u={us[k]}; widen the grid")
    if not refine:
        return float(us[k])
    res = optimize.minimize_scalar(lambda v: float(fun_batch(np.array([v]))[0]),
                                   bracket=(us[k - 1], us[k], us[k + 1]), method="golden",
                                   tol=1e-12)
    return float(res.x)


def one_step_optimal_u(model: ForwardModel, ideal: IdealSpec, x,
                       grid: QuadratureGrid = QuadratureGrid(), controller=None,
                       refine: bool = True) -> float:
    """Minimizer of the one-step objective with no continuation cost."""
    return _grid_argmin(lambda us: one_step_objective(model, ideal, x, us, None, grid, controller),
                        grid, refine)


def critic_potential(critic: CriticModel, low: float, high: float,
                     spacing: float = 2.5e-4) -> Callable:
    """``V(x) = int_0^x lambda(s) ds`` tabulated on ``[low, high]`` and interpolated."""
    low, high = min(low, 0.0), max(high, 0.0)
    n = int(np.ceil((high - low) / spacing)) + 1
    xs = np.linspace(low, high, n)
    lam = design_matrix(critic.net, xs) @ critic.chi[0]
    cum = integrate.cumulative_trapezoid(lam, xs, initial=0.0)
    cum = cum - np.interp(0.0, xs, cum)

    def potential(q):
        q = np.asarray(q, dtype=float)
        if np.any(q < low) or np.any(q > high):
            raise GridError("state outside the tabulated potential range")
        return np.interp(q, xs, cum)

    return potential


def _potential_for(model, critic, x, grid, shift=0.0, spread=None):
    pred = model_predict(model, x, [0.0])
    ends = pred.h[0] + pred.g[0, 0] * np.array([grid.u_low, grid.u_high])
    var = model.sigma[0, 0] / 2.0 if spread is None else max(spread, model.sigma[0, 0] / 2.0)
    pad = grid.half_width * np.sqrt(var) + 1e-3
    pot = critic_potential(critic, ends.min() - pad, ends.max() + pad)
    return pot if shift == 0.0 else (lambda q: pot(q) + shift)


def beta_with_critic(model: ForwardModel, ideal: IdealSpec, critic: CriticModel, controller,
                     u, x, grid: QuadratureGrid = QuadratureGrid(), shift: float = 0.0) -> float:
    """beta with the continuation ``-ln gamma`` rebuilt by integrating the critic output.

    The reconstruction is defined up to an additive constant (``shift``),
    which does not move any argmin.
    """
    _scalar(model)
    pot = _potential_for(model, critic, x, grid, shift)
    x_hat = model_predict(model, x, u).x_hat
    return float(_beta_batch(model, ideal, pot, x_hat, grid)[0])


EXACT, DROPPED_CONSTANTS = "exact", "dropped-constants"


def dropped_constant_factor(model: ForwardModel, critic: CriticModel, controller, x) -> float:
    """Factor by which the closed-form continuation gradient undershoots the exact one.

    Each digamma term omits ``sqrt(Sigma^-1 / (Sigma^-1 + p))`` from the
    successor-state integral and ``sqrt(Gamma^-1 / Omega)`` from the control
    integral, where ``p`` is the critic basis precision. The product is the
    same for every basis when all critic widths are equal.
    """
    precs = critic.net.width_precisions[:, 0, 0]
    if not np.allclose(precs, precs[0], rtol=1e-12):
        raise ValueError("the rescaled convention needs equal critic widths")
    s_inv = float(model.sigma_precision[0, 0])
    g_inv = float(controller.gamma_precision[0, 0])
    a = 1.0 / (float(model.sigma[0, 0]) + 1.0 / precs[0])
    g = model_predict(model, x, [0.0]).g[0, 0]
    omega = g * g * a + g_inv
    return float(np.sqrt(s_inv / (s_inv + precs[0])) * np.sqrt(g_inv / omega))


def argmin_with_critic(model: ForwardModel, ideal: IdealSpec, critic: CriticModel, controller,
                       x, grid: QuadratureGrid = QuadratureGrid(), shift: float = 0.0,
                       refine: bool = False, convention: str = EXACT) -> float:
    """Grid argmin over u of ``control penalty + beta_with_critic``.

    ``convention="dropped-constants"`` instead evaluates the objective whose
    stationarity condition is the closed-form one used by the solver: the
    continuation is averaged over the controller's randomization
    ``u ~ N(u, Gamma/2)`` and divided by :func:`dropped_constant_factor`.
    """
    _scalar(model)
    if convention == EXACT:
        spread, scale = None, 1.0
    elif convention == DROPPED_CONSTANTS:
        g = model_predict(model, x, [0.0]).g[0, 0]
        spread = (float(model.sigma[0, 0]) + g * g * float(controller.gamma[0, 0])) / 2.0
        scale = 1.0 / dropped_constant_factor(model, critic, controller, x)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    pot = _potential_for(model, critic, x, grid, shift, spread)
    return _grid_argmin(
        lambda us: one_step_objective(model, ideal, x, us, pot, grid, controller, spread, scale),
        grid, refine)
