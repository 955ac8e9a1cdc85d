"""Gaussian radial basis function networks.

A network maps ``x`` to ``weights @ [psi(x); 1]`` where

    psi_j(x) = exp[-(x - mu_j)^T P_j (x - mu_j)]

and ``P_j`` is the stored width precision (no one-half factor). The same
class represents the forward-model nets, the action net and the critic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .gaussian_algebra import as_vector, check_spd


def _as_centers(centers) -> np.ndarray:
    c = np.asarray(centers, dtype=float)
    return c.reshape(-1, 1) if c.ndim < 2 else c


@dataclass(frozen=True)
class BasisActivation:
    values: np.ndarray  # (M,)
    input_jacobian: np.ndarray  # (M, d), row j is d psi_j / dx


@dataclass(frozen=True)
class RbfNetwork:
    centers: np.ndarray  # (M, d)
    width_precisions: np.ndarray  # (M, d, d)
    weights: np.ndarray  # (out, M + has_bias)
    has_bias: bool = False

    def __post_init__(self):
        centers = _as_centers(self.centers)
        m, d = centers.shape
        prec = np.asarray(self.width_precisions, dtype=float).reshape(m, d, d)
        for j in range(m):
            check_spd(prec[j], f"width precision {j}")
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if weights.shape[1] != m + int(self.has_bias):
            raise ValueError(
                f"weights have {weights.shape[1]} columns, expected {m + int(self.has_bias)}"
            )
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "width_precisions", prec)
        object.__setattr__(self, "weights", weights)

    @property
    def num_bases(self) -> int:
        return self.centers.shape[0]

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return self.num_bases + int(self.has_bias)

    def with_weights(self, weights) -> "RbfNetwork":
        weights = np.asarray(weights, dtype=float).reshape(self.weights.shape)
        return replace(self, weights=weights)

    def __call__(self, x) -> np.ndarray:
        return net_eval(self, x)[0]


def make_network(centers, width_precisions, output_dim: int, has_bias: bool = False) -> RbfNetwork:
    """Network with the given bases and all-zero output weights."""
    centers = _as_centers(centers)
    m = centers.shape[0]
    weights = np.zeros((output_dim, m + int(has_bias)))
    return RbfNetwork(centers, width_precisions, weights, has_bias)


def basis_eval(net: RbfNetwork, x) -> BasisActivation:
    x = as_vector(x, net.input_dim)
    diff = x[None, :] - net.centers  # (M, d)
    pd = np.einsum("mij,mj->mi", net.width_precisions, diff)
    values = np.exp(-np.einsum("mi,mi->m", diff, pd))
    jac = -2.0 * values[:, None] * pd
    return BasisActivation(values, jac)


def net_eval(net: RbfNetwork, x) -> tuple[np.ndarray, np.ndarray]:
    """Output and its Jacobian with respect to the input."""
    act = basis_eval(net, x)
    w = net.weights[:, : net.num_bases]
    out = w @ act.values
    if net.has_bias:
        out = out + net.weights[:, -1]
    return out, w @ act.input_jacobian


def design_matrix(net: RbfNetwork, xs) -> np.ndarray:
    """Basis values for a batch of inputs, shape (N, fan_in)."""
    xs = np.asarray(xs, dtype=float).reshape(-1, net.input_dim)
    diff = xs[:, None, :] - net.centers[None, :, :]
    q = np.einsum("nmi,mij,nmj->nm", diff, net.width_precisions, diff)
    phi = np.exp(-q)
    if net.has_bias:
        phi = np.hstack([phi, np.ones((phi.shape[0], 1))])
    return phi


def init_weights(net: RbfNetwork, rng_seed: int) -> RbfNetwork:
    """Zero-mean Gaussian weights with standard deviation ``1/sqrt(fan_in)``."""
    rng = np.random.default_rng(rng_seed)
    w = rng.standard_normal(net.weights.shape) / np.sqrt(net.fan_in)
    return net.with_weights(w)


def place_centers(x_low, x_high, count: int, width_scale: float = 1.0):
    """Uniform grid of ``count`` centers per dimension with isotropic widths.

    The width standard scale is ``width_scale`` times the smallest grid
    spacing, stored as the precision ``scale**-2 * I``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    lo = as_vector(x_low)
    hi = as_vector(x_high, lo.shape[0])
    if np.any(hi <= lo):
        raise ValueError("x_low must be strictly below x_high")
    d = lo.shape[0]
    if count == 1:
        axes = [np.array([0.5 * (a + b)]) for a, b in zip(lo, hi)]
        spacing = float(np.min(hi - lo))
    else:
        axes = [np.linspace(a, b, count) for a, b in zip(lo, hi)]
        spacing = float(np.min((hi - lo) / (count - 1)))
    centers = np.array(list(itertools.product(*axes)), dtype=float)
    scale = width_scale * spacing
    precisions = np.repeat((np.eye(d) / scale**2)[None], centers.shape[0], axis=0)
    return centers, precisions
