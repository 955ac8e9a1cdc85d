import numpy as np
import pytest

from pdhp.action import make_controller
from pdhp.critic import (IdealSpec, NonFiniteTargetError, compute_digamma, critic_target,
                         critic_target_terms, make_critic, successor_precisions)
from pdhp.sysid import model_predict
from pdhp.verify import central_difference, constant_model, random_forward_model

from .helpers import pinned_model, random_controller, random_critic, zero_controller


def test_digamma_one_at_matching_center():
    model = constant_model([0.5], [[1.0]], [[0.01]])
    crit = make_critic(1, 0.0, 1.0, 1)  # single center at the midpoint
    b = compute_digamma(model, crit, np.array([[100.0]]), [0.0], [0.0])
    assert b.digamma[0] == pytest.approx(1.0, abs=1e-15)
    assert b.H[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_tight_controller_pins_h_to_u_hat():
    model = constant_model([1.0], [[2.0]], [[0.01]])
    crit = make_critic(1, -1, 1, 3)
    b = compute_digamma(model, crit, np.array([[1e6]]), [0.0], [0.3])
    np.testing.assert_allclose(b.H[:, 0], 0.3, atol=1e-3)


def test_digamma_matches_direct_formula(rng):
    for _ in range(20):
        h, g, s = rng.normal(), rng.normal(), rng.uniform(0.005, 0.1)
        model = constant_model([h], [[g]], [[s]])
        crit = make_critic(1, -2, 2, 4, width_scale=rng.uniform(0.5, 1.5))
        gp, u_hat = rng.uniform(10, 200), rng.normal(0, 0.5)
        b = compute_digamma(model, crit, np.array([[gp]]), [0.0], [u_hat])
        for l in range(4):
            z = crit.net.centers[l, 0]
            a = 1.0 / (s + 1.0 / crit.net.width_precisions[l, 0, 0])
            xh = h + g * u_hat
            omega = g * g * a + gp
            hl = (g * a * (z - xh) + omega * u_hat) / omega
            # exponent written in the original three-term form
            expo = -(z - h) ** 2 * a - u_hat ** 2 * gp + hl * omega * hl
            assert b.digamma[l] == pytest.approx(np.exp(expo), rel=1e-12, abs=1e-300)
            assert b.H[l, 0] == pytest.approx(hl, rel=1e-12, abs=1e-14)
            assert b.Omega[l, 0, 0] == pytest.approx(omega, rel=1e-12)


def test_digamma_shift_invariance(rng):
    crit = make_critic(1, -2, 2, 4)
    shifted = make_critic(1, -2 + 0.7, 2 + 0.7, 4)
    base = compute_digamma(constant_model([0.2], [[1.5]], [[0.02]]), crit, np.array([[50.0]]),
                           [0.0], [0.1])
    moved = compute_digamma(constant_model([0.9], [[1.5]], [[0.02]]), shifted, np.array([[50.0]]),
                            [0.0], [0.1])
    np.testing.assert_allclose(moved.digamma, base.digamma, rtol=1e-12)


def test_digamma_bias_basis():
    model = constant_model([1.0], [[2.0]], [[0.01]])
    crit = make_critic(1, -1, 1, 2, has_bias=True)
    b = compute_digamma(model, crit, np.array([[100.0]]), [0.0], [0.25])
    assert b.digamma.shape == (3,)
    assert b.digamma[-1] == 1.0
    assert b.H[-1, 0] == 0.25


def test_target_chi_zero_w_zero(rng):
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    ctrl = make_controller(1, 1, -2, 2, 3, 0.01)
    crit = make_critic(1, -2, 2, 4)
    for x in rng.uniform(-2, 2, 5):
        p = model_predict(model, [x], [0.0])
        expected = 2.0 * p.h @ model.sigma_precision @ p.h_prime
        np.testing.assert_allclose(critic_target(model, ctrl, crit, [x]), expected, rtol=1e-12)


def test_target_worked_scalar_value():
    model = pinned_model(0.3, h=1.0, dh=0.5, g=2.0, dg=-0.1, sigma=0.01)
    p = model_predict(model, [0.3], [0.0])
    assert (p.h[0], p.h_prime[0, 0], p.g[0, 0], p.g_prime[0, 0, 0]) == pytest.approx((1, 0.5, 2, -0.1))
    lam = critic_target(model, zero_controller(), make_critic(1, -1, 1, 3), [0.3])
    assert lam[0] == pytest.approx(100.0, rel=1e-12)


def test_terms_one_to_three_match_mean_field_derivative(rng):
    # d/dx of x_hat' S^-1 x_hat + u' G^-1 u, with u = W psi(x) and x_hat = h + g u
    model = random_forward_model(rng, 1, 1, sigma=0.03)
    ctrl = random_controller(rng)
    crit = make_critic(1, -2, 2, 4)
    ideal = IdealSpec(control_cov=0.02)

    def mean_field(x):
        u = ctrl.mean(x)
        xh = model_predict(model, x, u).x_hat
        return np.array([xh @ model.sigma_precision @ xh + u @ u / 0.02])

    for x in rng.uniform(-2, 2, 5):
        t = critic_target_terms(model, ctrl, crit, [x], ideal)
        fd = central_difference(mean_field, np.array([x]))[0]
        np.testing.assert_allclose(t.term1 + t.term2 + t.term3, fd, rtol=1e-6, atol=1e-6)


def test_terms_one_and_three_monte_carlo(rng):
    model = random_forward_model(rng, 1, 1, sigma=0.02)
    ctrl = random_controller(rng, gamma=0.03)
    crit = make_critic(1, -2, 2, 4)
    x = np.array([0.4])
    t = critic_target_terms(model, ctrl, crit, x)
    u_hat, w_psi = ctrl.mean_and_jacobian(x)
    p = model_predict(model, x, u_hat)
    s = model.sigma[0, 0]
    dx = p.h_prime[0, 0] + p.g_prime[0, 0, 0] * u_hat[0]
    xs = rng.normal(p.x_hat[0], np.sqrt(s / 2), 100_000)  # no-half exponent convention
    samples = 2.0 * xs / s * dx
    assert abs(samples.mean() - t.term1[0]) <= 3 * samples.std() / np.sqrt(xs.size)
    us = rng.normal(u_hat[0], np.sqrt(0.03 / 2), 100_000)
    samples = 2.0 * us / 0.03 * w_psi[0, 0]
    assert abs(samples.mean() - t.term3[0]) <= 3 * samples.std() / np.sqrt(us.size)


def _quadrature_digamma(model, crit, ctrl, x):
    """Per-basis (digamma, H) from 2-D trapezoid integrals of the raw exponent products."""
    p = model_predict(model, x, [0.0])
    h, g = p.h[0], p.g[0, 0]
    s_inv = model.sigma_precision[0, 0]
    g_inv = ctrl.gamma_precision[0, 0]
    u_hat = ctrl.mean(x)[0]
    us = np.linspace(u_hat - 3, u_hat + 3, 3001)
    xs = np.linspace(-14, 14, 5601)
    wx = np.full(xs.size, xs[1] - xs[0])
    wx[[0, -1]] *= 0.5
    wu = np.full(us.size, us[1] - us[0])
    wu[[0, -1]] *= 0.5
    out = []
    for z, prec in zip(crit.net.centers[:, 0], crit.net.width_precisions[:, 0, 0]):
        i0 = i1 = 0.0
        for block in np.array_split(np.arange(us.size), 6):
            u = us[block][:, None]
            f = (np.exp(-s_inv * (xs[None] - h - g * u) ** 2 - prec * (xs[None] - z) ** 2
                        - g_inv * (u - u_hat) ** 2) @ wx)
            i0 += f @ wu[block]
            i1 += (f * u[:, 0]) @ wu[block]
        a = 1.0 / (model.sigma[0, 0] + 1.0 / prec)
        omega = g * g * a + g_inv
        dropped = np.sqrt(np.pi / (s_inv + prec)) * np.sqrt(np.pi / omega)
        out.append((i0 / dropped, i1 / i0))
    return out


def test_terms_four_and_five_quadrature(rng):
    model = random_forward_model(rng, 1, 1, sigma=0.05)
    ctrl = random_controller(rng, gamma=0.05)
    crit = random_critic(rng, bases=3)
    x = np.array([0.3])
    t = critic_target_terms(model, ctrl, crit, x)
    u_hat, w_psi = ctrl.mean_and_jacobian(x)
    p = model_predict(model, x, u_hat)
    term4 = term5 = 0.0
    for l, (dg, hl) in enumerate(_quadrature_digamma(model, crit, ctrl, x)):
        chi = crit.chi[0, l]
        term4 += dg * chi * (p.h_prime[0, 0] + p.g_prime[0, 0, 0] * hl)
        term5 += dg * chi * p.g[0, 0] * w_psi[0, 0]
    assert t.term4[0] == pytest.approx(term4, rel=1e-4)
    assert t.term5[0] == pytest.approx(term5, rel=1e-4)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_target_nonfinite_raises():
    model = constant_model([1.0], [[2.0]], [[0.01]])
    crit = make_critic(1, -1, 1, 3).with_weights([[np.inf, 0.0, 0.0]])
    with pytest.raises(NonFiniteTargetError):
        critic_target(model, zero_controller(), crit, [0.0])


def test_successor_precisions():
    model = constant_model([0.0], [[1.0]], [[0.5]])
    crit = make_critic(1, -1, 1, 3)  # spacing 1, precision 1
    for a in successor_precisions(model, crit):
        assert a[0, 0] == pytest.approx(1.0 / 1.5)


def test_ideal_spec_control_precision():
    own = np.array([[50.0]])
    assert IdealSpec().control_precision(own) is own
    np.testing.assert_allclose(IdealSpec(control_cov=0.01).control_precision(own), [[100.0]])
