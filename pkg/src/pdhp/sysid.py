"""Identification of the Gaussian forward model ``N(h(x) + g(x) u, Sigma)``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian_algebra import as_vector, floor_spd, spd_inverse
from .plant import PlantSpec, plant_step
from .rbf import RbfNetwork, design_matrix, make_network, net_eval, place_centers

SIGMA_FLOOR = 1e-8


class RankDeficientError(ValueError):
    pass


@dataclass
class IdDataset:
    x_prev: np.ndarray  # (N, n)
    u: np.ndarray  # (N, r)
    x_next: np.ndarray  # (N, n)

    def __len__(self) -> int:
        return self.x_prev.shape[0]

    def to_csv(self, path) -> None:
        n, r = self.x_prev.shape[1], self.u.shape[1]

        def cols(prefix, k):
            return [prefix] if k == 1 else [f"{prefix}{i}" for i in range(k)]

        header = cols("x_prev", n) + cols("u", r) + cols("x_next", n)
        data = np.hstack([self.x_prev, self.u, self.x_next])
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass
class ForwardModel:
    h_net: RbfNetwork
    g_net: RbfNetwork
    sigma: np.ndarray
    residual_covariance: np.ndarray | None = None  # before the floor
    sigma_precision: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        self.sigma_precision = spd_inverse(self.sigma, "Sigma")

    @property
    def state_dim(self) -> int:
        return self.h_net.output_dim

    @property
    def control_dim(self) -> int:
        return self.g_net.output_dim // self.state_dim


@dataclass(frozen=True)
class Prediction:
    x_hat: np.ndarray  # (n,)
    h: np.ndarray  # (n,)
    g: np.ndarray  # (n, r)
    h_prime: np.ndarray  # (n, n)
    g_prime: np.ndarray  # (n, r, n), [i, k, j] = d g_ik / d x_j


def generate_dataset(spec: PlantSpec, num_samples: int, x_range=(-4.0, 4.0),
                     u_range=(-3.0, 3.0), seed: int = 0, noise: bool = True) -> IdDataset:
    """Independent uniform excitation of states and controls."""
    if num_samples <= 0:
        raise ValueError("num_samples must be positive")
    n, r = spec.state_dim, spec.control_dim
    x_lo, x_hi = (np.broadcast_to(np.asarray(v, float), (n,)) for v in x_range)
    u_lo, u_hi = (np.broadcast_to(np.asarray(v, float), (r,)) for v in u_range)
    if np.any(x_hi <= x_lo) or np.any(u_hi <= u_lo):
        raise ValueError("identification ranges must be non-degenerate")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x_lo, x_hi, size=(num_samples, n))
    us = rng.uniform(u_lo, u_hi, size=(num_samples, r))
    noise_rng = rng if noise else None
    nxt = np.array([plant_step(spec, x, u, noise_rng) for x, u in zip(xs, us)])
    return IdDataset(xs, us, nxt)


def _regressors(h_net: RbfNetwork, g_net: RbfNetwork, x_prev, u, n: int, r: int):
    """Per-output-dimension regressor blocks; the model is linear in the stacked weights."""
    phi_h = design_matrix(h_net, x_prev)  # (N, Mh)
    phi_g = design_matrix(g_net, x_prev)  # (N, Mg)
    # output i: x_i = w_h[i] . phi_h + sum_k w_g[i*r+k] . phi_g * u_k
    gu = np.concatenate([phi_g * u[:, k : k + 1] for k in range(r)], axis=1)
    return np.hstack([phi_h, gu])


def fit_forward_model(data: IdDataset, h_bases: int = 15, g_bases: int = 6,
                      x_range=(-4.0, 4.0), width_scale: float = 1.0,
                      h_bias: bool = True, g_bias: bool = True) -> ForwardModel:
    """Joint linear least squares for the h and g weights, then Sigma from residuals."""
    n = data.x_prev.shape[1]
    r = data.u.shape[1]
    lo = np.broadcast_to(np.asarray(x_range[0], float), (n,))
    hi = np.broadcast_to(np.asarray(x_range[1], float), (n,))
    hc, hp = place_centers(lo, hi, h_bases, width_scale)
    gc, gp = place_centers(lo, hi, g_bases, width_scale)
    h_net = make_network(hc, hp, n, h_bias)
    g_net = make_network(gc, gp, n * r, g_bias)

    a = _regressors(h_net, g_net, data.x_prev, data.u, n, r)
    if a.shape[0] < a.shape[1]:
        raise RankDeficientError(
            f"{a.shape[0]} records cannot determine {a.shape[1]} weights per output"
        )
    rank = np.linalg.matrix_rank(a)
    if rank < a.shape[1]:
        raise RankDeficientError(
            f"regressor matrix has rank {rank} < {a.shape[1]} (h and g bases not jointly identifiable)"
        )
    coef, *_ = np.linalg.lstsq(a, data.x_next, rcond=None)  # (Mh + r*Mg, n)
    mh, mg = h_net.fan_in, g_net.fan_in
    h_w = coef[:mh].T
    g_w = np.zeros((n * r, mg))
    for i in range(n):
        for k in range(r):
            g_w[i * r + k] = coef[mh + k * mg : mh + (k + 1) * mg, i]
    h_net = h_net.with_weights(h_w)
    g_net = g_net.with_weights(g_w)

    resid = data.x_next - a @ coef
    raw = resid.T @ resid / len(data)
    raw = 0.5 * (raw + raw.T)
    sigma = floor_spd(raw, SIGMA_FLOOR)
    return ForwardModel(h_net, g_net, sigma, raw)


def model_predict(model: ForwardModel, x, u) -> Prediction:
    n, r = model.state_dim, model.control_dim
    x = as_vector(x, n)
    u = as_vector(u, r)
    h, h_prime = net_eval(model.h_net, x)
    g_flat, g_jac = net_eval(model.g_net, x)
    g = g_flat.reshape(n, r)
    g_prime = g_jac.reshape(n, r, n)
    return Prediction(h + g @ u, h, g, h_prime, g_prime)


def predict_batch(model: ForwardModel, xs, us) -> np.ndarray:
    n, r = model.state_dim, model.control_dim
    xs = np.asarray(xs, float).reshape(-1, n)
    us = np.asarray(us, float).reshape(-1, r)
    a = _regressors(model.h_net, model.g_net, xs, us, n, r)
    mh, mg = model.h_net.fan_in, model.g_net.fan_in
    coef = np.zeros((a.shape[1], n))
    coef[:mh] = model.h_net.weights.T
    for i in range(n):
        for k in range(r):
            coef[mh + k * mg : mh + (k + 1) * mg, i] = model.g_net.weights[i * r + k]
    return a @ coef


def heldout_report(model: ForwardModel, data: IdDataset) -> dict:
    """RMS prediction error and the empirical approximation bound (max abs residual)."""
    resid = data.x_next - predict_batch(model, data.x_prev, data.u)
    return {
        "rms": float(np.sqrt(np.mean(resid**2))),
        "delta": float(np.max(np.abs(resid))),
    }
