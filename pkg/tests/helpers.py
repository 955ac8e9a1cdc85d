"""Small model builders shared by the test modules."""

import numpy as np

from pdhp.action import RandomizedController, make_controller
from pdhp.critic import make_critic
from pdhp.rbf import make_network
from pdhp.sysid import ForwardModel


def pinned_model(x0, h, dh, g, dg, sigma):
    """Scalar model with prescribed h, h', g, g' at ``x0``.

    One basis centered at ``x0 - 0.5`` with unit precision plus a bias; at
    ``x0`` the basis value is ``phi`` and its slope is ``-phi``.
    """
    phi = np.exp(-0.25)

    def net(value, slope):
        w = -slope / phi
        return make_network([[x0 - 0.5]], [[[1.0]]], 1, True).with_weights([[w, value - w * phi]])

    return ForwardModel(net(h, dh), net(g, dg), np.array([[sigma]]))


def zero_controller(gamma=0.01):
    return make_controller(1, 1, -1, 1, 3, gamma)


def random_critic(rng, scale=3.0, bases=5, low=-2.0, high=2.0):
    crit = make_critic(1, low, high, bases)
    return crit.with_weights(rng.normal(0.0, scale, crit.chi.shape))


def random_controller(rng, gamma=0.02, scale=0.3):
    ctrl = make_controller(1, 1, -2, 2, 4, gamma)
    return RandomizedController(ctrl.net.with_weights(rng.normal(0, scale, ctrl.net.weights.shape)),
                                ctrl.gamma)
