"""Critic network and the closed-form probabilistic DHP critic target.

The critic approximates ``lambda(x) = d[-ln gamma(x)]/dx`` with an RBF
network ``chi @ phi(x)``. Its training target at ``x`` is the sum of five
terms obtained by collapsing the Gaussian expectations over the successor
state and the randomized control. Normalization constants of those Gaussian
integrals are dropped, as in the derivation the formulas come from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .gaussian_algebra import as_vector, check_spd, complete_square_batch, spd_inverse
from .rbf import RbfNetwork, make_network, place_centers
from .sysid import ForwardModel, Prediction, model_predict

if TYPE_CHECKING:
    from .action import RandomizedController


class NonFiniteTargetError(FloatingPointError):
    pass


@dataclass(frozen=True)
class CriticModel:
    net: RbfNetwork

    @property
    def chi(self) -> np.ndarray:
        return self.net.weights

    def with_weights(self, weights) -> "CriticModel":
        return CriticModel(self.net.with_weights(weights))

    def __call__(self, x) -> np.ndarray:
        return self.net(x)


def make_critic(state_dim: int, x_low, x_high, num_bases: int = 6,
                width_scale: float = 1.0, has_bias: bool = False) -> CriticModel:
    centers, precisions = place_centers(
        np.broadcast_to(np.asarray(x_low, float), (state_dim,)),
        np.broadcast_to(np.asarray(x_high, float), (state_dim,)),
        num_bases, width_scale,
    )
    return CriticModel(make_network(centers, precisions, state_dim, has_bias))


@dataclass(frozen=True)
class IdealSpec:
    """Ideal pdfs ``N(state_mean, Sigma)`` and ``N(control_mean, control_cov)``.

    The ideal state covariance is always the model's Sigma. ``control_cov``
    of None ties the ideal control covariance to the controller's current
    Gamma; a fixed value keeps the control penalty independent of the
    residual-based Gamma updates.
    """

    state_mean: np.ndarray | None = None
    control_mean: np.ndarray | None = None
    control_cov: np.ndarray | None = None

    def state(self, n: int) -> np.ndarray:
        return np.zeros(n) if self.state_mean is None else as_vector(self.state_mean, n)

    def control(self, r: int) -> np.ndarray:
        return np.zeros(r) if self.control_mean is None else as_vector(self.control_mean, r)

    def control_precision(self, controller_precision: np.ndarray) -> np.ndarray:
        """Precision weighting the control part of the partial cost."""
        if self.control_cov is None:
            return controller_precision
        r = controller_precision.shape[0]
        cov = self.control_cov
        return spd_inverse(np.eye(r) * cov if np.ndim(cov) == 0 else cov, "ideal control covariance")


REGULATION = IdealSpec()


@dataclass(frozen=True)
class DigammaBundle:
    digamma: np.ndarray  # (L,)
    H: np.ndarray  # (L, r)
    Omega: np.ndarray  # (L, r, r)


def successor_precisions(model: ForwardModel, critic: CriticModel) -> list[np.ndarray]:
    """``(Sigma + gamma_l)^-1`` for each critic basis."""
    return [
        spd_inverse(model.sigma + spd_inverse(p, "critic width"), "Sigma + gamma_l")
        for p in critic.net.width_precisions
    ]


def compute_digamma(model: ForwardModel, critic: CriticModel, gamma_precision, x, u_hat,
                    *, prediction: Prediction | None = None,
                    a_list: list[np.ndarray] | None = None) -> DigammaBundle:
    """Per-basis completed squares of the successor/control exponent.

    A critic bias column, if present, is treated as an infinitely wide basis:
    its digamma is 1 and its H is ``u_hat``.
    """
    pred = prediction if prediction is not None else model_predict(model, x, u_hat)
    if a_list is None:
        a_list = successor_precisions(model, critic)
    gp = np.atleast_2d(np.asarray(gamma_precision, dtype=float))
    u_hat = as_vector(u_hat, pred.g.shape[1])
    r = u_hat.shape[0]
    check_spd(gp, "control precision")
    omegas, hs, consts = complete_square_batch(pred.h, pred.g, critic.net.centers,
                                               np.asarray(a_list), gp, u_hat, validate=False)
    digamma = np.exp(-consts)
    if critic.net.has_bias:
        digamma = np.append(digamma, 1.0)
        hs = np.vstack([hs, u_hat])
        omegas = np.concatenate([omegas, gp[None]])
    return DigammaBundle(digamma, hs.reshape(-1, r), omegas)


class CriticTerms(NamedTuple):
    term1: np.ndarray
    term2: np.ndarray
    term3: np.ndarray
    term4: np.ndarray
    term5: np.ndarray

    def total(self) -> np.ndarray:
        return self.term1 + self.term2 + self.term3 + self.term4 + self.term5


def critic_target_terms(model: ForwardModel, controller: "RandomizedController",
                        critic: CriticModel, x, ideal: IdealSpec = REGULATION,
                        a_list=None) -> CriticTerms:
    n, r = model.state_dim, model.control_dim
    x = as_vector(x, n)
    u_hat, w_psi_prime = controller.mean_and_jacobian(x)  # (r,), (r, n)
    pred = model_predict(model, x, u_hat)
    s_inv = model.sigma_precision
    g_inv = controller.gamma_precision

    dx_dx = pred.h_prime + np.einsum("ikj,k->ij", pred.g_prime, u_hat)  # h' + g'u
    g_w = pred.g @ w_psi_prime  # g W psi'
    e_x = pred.x_hat - ideal.state(n)
    e_u = u_hat - ideal.control(r)

    term1 = 2.0 * e_x @ s_inv @ dx_dx
    term2 = 2.0 * e_x @ s_inv @ g_w
    term3 = 2.0 * e_u @ ideal.control_precision(g_inv) @ w_psi_prime

    bundle = compute_digamma(model, critic, g_inv, x, u_hat, prediction=pred, a_list=a_list)
    chi = critic.chi  # (n, L)
    term4 = np.zeros(n)
    term5 = np.zeros(n)
    for l, (f, h_l) in enumerate(zip(bundle.digamma, bundle.H)):
        weighted = f * chi[:, l]
        term4 += weighted @ (pred.h_prime + np.einsum("ikj,k->ij", pred.g_prime, h_l))
        term5 += weighted @ g_w
    return CriticTerms(term1, term2, term3, term4, term5)


def critic_target(model: ForwardModel, controller: "RandomizedController",
                  critic: CriticModel, x, ideal: IdealSpec = REGULATION,
                  a_list=None) -> np.ndarray:
    """Target ``lambda*(x)`` for the critic network (column form)."""
    lam = critic_target_terms(model, controller, critic, x, ideal, a_list).total()
    if not np.all(np.isfinite(lam)):
        raise NonFiniteTargetError(f"critic target is not finite at x={x}")
    return lam
