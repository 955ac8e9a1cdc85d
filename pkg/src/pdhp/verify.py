"""Self-check table: closed forms against brute force, derivatives against differences."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .action import make_controller, solve_optimal_control
from .critic import IdealSpec, make_critic
from .fpd_oracle import QuadratureGrid, one_step_optimal_u
from .gaussian_algebra import combine_batch, complete_square_batch
from .rbf import RbfNetwork, init_weights, make_network, net_eval, place_centers
from .scg import scg_minimize
from .sysid import ForwardModel, model_predict

DIM_CONFIGS = ((1, 1), (2, 1), (2, 2), (3, 2))
ALGEBRA_TOL = 1e-10
GRADIENT_TOL = 1e-5
CLOSED_FORM_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float
    detail: str = ""


def _spd(rng, k):
    a = rng.standard_normal((k, k))
    return a @ a.T + 0.5 * np.eye(k)


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)))


def _spd_stack(rng, count, k):
    a = rng.standard_normal((count, k, k))
    return a @ np.swapaxes(a, -1, -2) + 0.5 * np.eye(k)


def check_complete_square(rng, count: int = 1000) -> float:
    """Worst relative mismatch between the completed square and the raw exponent."""
    worst = 0.0
    for n, r in DIM_CONFIGS:
        h, z = rng.standard_normal((count, n)), rng.standard_normal((count, n))
        g = rng.standard_normal((count, n, r))
        a, gp = _spd_stack(rng, count, n), _spd_stack(rng, count, r)
        u_hat, u = rng.standard_normal((count, r)), rng.standard_normal((count, r))
        omega, center, const = complete_square_batch(h, g, z, a, gp, u_hat)
        d = u - center
        completed = np.einsum("bi,bij,bj->b", d, omega, d) + const
        e = h + np.einsum("bij,bj->bi", g, u) - z
        du = u - u_hat
        raw = np.einsum("bi,bij,bj->b", e, a, e) + np.einsum("bi,bij,bj->b", du, gp, du)
        worst = max(worst, _rel(completed, raw))
    return worst


def check_combine(rng, count: int = 1000) -> float:
    worst = 0.0
    for n in sorted({n for n, _ in DIM_CONFIGS}):
        m1, m2, x = (rng.standard_normal((count, n)) for _ in range(3))
        p1, p2 = _spd_stack(rng, count, n), _spd_stack(rng, count, n)
        mean, prec, res = combine_batch(m1, p1, m2, p2)

        def quad(m, p):
            d = x - m
            return np.einsum("bi,bij,bj->b", d, p, d)

        worst = max(worst, _rel(quad(mean, prec) + res, quad(m1, p1) + quad(m2, p2)))
    return worst


def _random_net(rng, d: int, out: int, m: int = 5, bias: bool = True) -> RbfNetwork:
    centers = rng.uniform(-2, 2, size=(m, d))
    precs = np.array([_spd(rng, d) * 0.5 for _ in range(m)])
    net = make_network(centers, precs, out, bias)
    return init_weights(net, int(rng.integers(2**31)))


def central_difference(fun: Callable, x, step: float = 1e-6) -> np.ndarray:
    """Jacobian of ``fun`` at ``x`` by central differences, columns over x."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def _jac_err(analytic, numeric) -> float:
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), 1.0))


def check_rbf_jacobians(rng, trials: int = 20) -> float:
    worst = 0.0
    for d in (1, 2, 3):
        for _ in range(trials):
            net = _random_net(rng, d, 2)
            x = rng.uniform(-2, 2, size=d)
            worst = max(worst, _jac_err(net_eval(net, x)[1],
                                        central_difference(lambda v: net_eval(net, v)[0], x)))
    return worst


def random_forward_model(rng, n: int, r: int, sigma: float = 0.01) -> ForwardModel:
    return ForwardModel(_random_net(rng, n, n), _random_net(rng, n, n * r), np.eye(n) * sigma)


def check_model_derivatives(rng, trials: int = 20) -> float:
    worst = 0.0
    for n, r in DIM_CONFIGS:
        for _ in range(trials):
            model = random_forward_model(rng, n, r)
            x, u = rng.uniform(-2, 2, size=n), rng.standard_normal(r)
            p = model_predict(model, x, u)
            worst = max(
                worst,
                _jac_err(p.h_prime, central_difference(lambda v: model_predict(model, v, u).h, x)),
                _jac_err(p.g_prime, central_difference(lambda v: model_predict(model, v, u).g, x)),
            )
    return worst


def constant_model(h, g, sigma) -> ForwardModel:
    """Model whose h and g do not depend on the state (single zero-weight basis plus bias)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float)).reshape(h.shape[0], -1)
    n, r = g.shape
    c, p = place_centers(np.full(n, -1.0), np.full(n, 1.0), 1)
    h_net = make_network(c, p, n, True).with_weights(np.column_stack([np.zeros(n), h]))
    g_net = make_network(c, p, n * r, True).with_weights(
        np.column_stack([np.zeros(n * r), g.reshape(-1)]))
    return ForwardModel(h_net, g_net, np.atleast_2d(np.asarray(sigma, dtype=float)))


def _zero_critic(n):
    return make_critic(n, -1.0, 1.0, 3)


def chi_zero_control(model: ForwardModel, gamma_precision, x) -> np.ndarray:
    p = model_predict(model, x, np.zeros(model.control_dim))
    s_inv = model.sigma_precision
    return -np.linalg.solve(p.g.T @ s_inv @ p.g + gamma_precision, p.g.T @ s_inv @ p.h)


def check_chi_zero(rng, trials: int = 50) -> float:
    worst = 0.0
    for n, r in DIM_CONFIGS:
        for _ in range(trials):
            model = random_forward_model(rng, n, r, sigma=float(rng.uniform(0.005, 0.5)))
            gamma = _spd(rng, r) * 0.05
            ctrl = make_controller(n, r, -2, 2, 3, gamma)
            x = rng.uniform(-2, 2, size=n)
            rep = solve_optimal_control(model, ctrl, _zero_critic(n), x, tol=1e-12)
            ref = chi_zero_control(model, ctrl.gamma_precision, x)
            worst = max(worst, float(np.max(np.abs(rep.u_star - ref))))
    return worst


def check_worked_instance() -> float:
    model = constant_model([1.0], [[2.0]], [[0.01]])
    ctrl = make_controller(1, 1, -1, 1, 3, 0.01)
    rep = solve_optimal_control(model, ctrl, _zero_critic(1), [0.3], tol=1e-14)
    return abs(float(rep.u_star[0]) + 0.4)


def check_quadrature_argmin(rng, trials: int = 10) -> float:
    """Quadrature argmin of the one-step objective against the chi=0 closed form."""
    grid = QuadratureGrid(u_low=-6.0, u_high=6.0)
    worst = 0.0
    for _ in range(trials):
        model = random_forward_model(rng, 1, 1, sigma=float(rng.uniform(0.005, 0.05)))
        gamma = float(rng.uniform(0.005, 0.05))
        ctrl = make_controller(1, 1, -2, 2, 3, gamma)
        x = rng.uniform(-2, 2, size=1)
        ref = float(chi_zero_control(model, ctrl.gamma_precision, x)[0])
        if not grid.u_low + 0.1 < ref < grid.u_high - 0.1:
            continue
        u = one_step_optimal_u(model, IdealSpec(control_cov=gamma), x, grid)
        worst = max(worst, abs(u - ref))
    return worst


def check_scg_quadratic(rng) -> float:
    """Distance to the minimizer of a convex quadratic after at most 50 iterations."""
    k = 10
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    a = (q * rng.uniform(1.0, 10.0, size=k)) @ q.T
    b = rng.standard_normal(k)
    w_star = np.linalg.solve(a, b)
    w, rep = scg_minimize(lambda w: (0.5 * w @ a @ w - b @ w, a @ w - b), np.zeros(k),
                          max_iter=50, tol_objective=1e-14, tol_weights=1e-12)
    return float(np.max(np.abs(w - w_star)))


CHECKS: dict[str, tuple[Callable, float]] = {
    "complete_square": (check_complete_square, ALGEBRA_TOL),
    "combine_quadratics": (check_combine, ALGEBRA_TOL),
    "rbf_jacobians": (check_rbf_jacobians, GRADIENT_TOL),
    "model_derivatives": (check_model_derivatives, GRADIENT_TOL),
    "chi_zero_closed_form": (check_chi_zero, CLOSED_FORM_TOL),
    "worked_instance": (lambda rng: check_worked_instance(), 1e-12),
    "quadrature_argmin": (check_quadrature_argmin, 2e-3),
    "scg_quadratic": (check_scg_quadratic, 1e-6),
}


def run_checks(names=None, seed: int = 0) -> list[CheckResult]:
    """Run the named checks (all by default). Unknown names raise KeyError."""
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    results = []
    for i, name in enumerate(names):
        fun, tol = CHECKS[name]
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            value = float(fun(rng))
            detail = ""
        except Exception as exc:  # a crash is a failed check, not a crashed table
            value, detail = float("inf"), f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(value <= tol), value, tol,
                                   time.perf_counter() - t0, detail))
    return results


def format_table(results: list[CheckResult]) -> str:
    rows = [f"{'check':<22} {'status':<6} {'value':>11} {'tol':>9} {'sec':>6}"]
    for r in results:
        rows.append(f"{r.name:<22} {'PASS' if r.passed else 'FAIL':<6} {r.value:>11.3e} "
                    f"{r.tolerance:>9.1e} {r.seconds:>6.2f}" + (f"  {r.detail}" if r.detail else ""))
    return "\n".join(rows)
