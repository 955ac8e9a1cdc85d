"""Scaled conjugate gradient minimization (Moller, 1993).

Hessian-free: curvature along the search direction is estimated from one
extra gradient evaluation, and a Levenberg-Marquardt style scale parameter
keeps the local quadratic model positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


class NonFiniteObjectiveError(FloatingPointError):
    pass


@dataclass
class ScgReport:
    iterations: int
    objective: float
    initial_objective: float
    converged: bool
    reason: str
    # one (iteration, objective, weight_delta) row per iteration
    history: list[tuple[int, float, float]] = field(default_factory=list)


def _evaluate(objective: Objective, w: np.ndarray, it: int):
    f, g = objective(w)
    f = float(f)
    g = np.asarray(g, dtype=float).reshape(w.shape)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjectiveError(f"non-finite objective or gradient at iteration {it}: w={w}")
    return f, g


def scg_minimize(objective: Objective, w0, max_iter: int = 10000, tol_objective: float = 1e-3,
                 tol_weights: float = 1e-3, sigma0: float = 1e-4) -> tuple[np.ndarray, ScgReport]:
    """Minimize ``objective(w) -> (value, gradient)`` from ``w0``.

    Stops after a successful step with ``|dF| < tol_objective`` and
    ``max|dw| < tol_weights``, on a zero gradient, or after ``max_iter``
    iterations. Only downhill steps are accepted, so the returned weights are
    the best seen.
    """
    shape = np.shape(w0)
    x = np.array(w0, dtype=float).ravel()
    nparams = x.size

    def obj(v):
        f, g = objective(v.reshape(shape))
        return f, np.asarray(g, dtype=float).ravel()

    beta, beta_min, beta_max = 1.0, 1e-15, 1e100
    f_old, grad_new = _evaluate(obj, x, 0)
    f_init = f_old
    grad_old = grad_new
    d = -grad_new
    success = True
    n_success = 0
    history: list[tuple[int, float, float]] = []
    mu = kappa = gamma = 0.0

    for it in range(1, max_iter + 1):
        if success:
            mu = float(d @ grad_new)
            if mu >= 0.0:
                d = -grad_new
                mu = float(d @ grad_new)
            kappa = float(d @ d)
            if kappa < np.finfo(float).eps:
                history.append((it, f_old, 0.0))
                return x.reshape(shape), ScgReport(it, f_old, f_init, True, "zero gradient", history)
            sigma = sigma0 / np.sqrt(kappa)
            _, g_plus = _evaluate(obj, x + sigma * d, it)
            gamma = float(d @ (g_plus - grad_new)) / sigma

        delta = gamma + beta * kappa
        if delta <= 0.0:
            delta = beta * kappa
            beta = beta - gamma / kappa
        alpha = -mu / delta
        step = alpha * d
        x_new = x + step
        f_new, _ = _evaluate(obj, x_new, it)
        comparison = 2.0 * (f_new - f_old) / (alpha * mu)

        if comparison >= 0.0 and f_new <= f_old:
            success = True
            n_success += 1
            x = x_new
            df = abs(f_new - f_old)
            dw = float(np.max(np.abs(step))) if step.size else 0.0
            history.append((it, f_new, dw))
            if dw < tol_weights and df < tol_objective:
                return x.reshape(shape), ScgReport(it, f_new, f_init, True, "tolerance", history)
            f_old = f_new
            grad_old = grad_new
            _, grad_new = _evaluate(obj, x, it)
            if float(grad_new @ grad_new) == 0.0:
                return x.reshape(shape), ScgReport(it, f_new, f_init, True, "zero gradient", history)
        else:
            success = False
            history.append((it, f_old, 0.0))

        if comparison < 0.25:
            beta = min(4.0 * beta, beta_max)
        if comparison > 0.75:
            beta = max(0.5 * beta, beta_min)

        if n_success == nparams:
            d = -grad_new
            n_success = 0
        elif success:
            big_gamma = float((grad_old - grad_new) @ grad_new) / mu
            d = big_gamma * d - grad_new

    return x.reshape(shape), ScgReport(max_iter, f_old, f_init, False, "max_iter", history)


def check_gradient(objective: Objective, w, step: float = 1e-6) -> float:
    """Largest relative error between the supplied and central-difference gradients."""
    w = np.array(w, dtype=float)
    _, g = objective(w)
    g = np.asarray(g, dtype=float).ravel()
    flat = w.ravel()
    fd = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        fp, _ = objective((flat + e).reshape(w.shape))
        fm, _ = objective((flat - e).reshape(w.shape))
        fd[i] = (fp - fm) / (2.0 * step)
    scale = max(np.max(np.abs(fd)), np.max(np.abs(g)), 1e-12)
    return float(np.max(np.abs(fd - g)) / scale)
