"""Stochastic control-affine plants and closed-loop simulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gaussian_algebra import as_vector, check_spd


@dataclass(frozen=True)
class PlantSpec:
    """``x' = h(x) + g(x) u + eps`` with ``eps ~ N(0, noise_covariance)``.

    The noise covariance is a sampling covariance in the usual sense.
    """

    h_true: Callable[[np.ndarray], np.ndarray]
    g_true: Callable[[np.ndarray], np.ndarray]
    noise_covariance: np.ndarray
    state_dim: int = 1
    control_dim: int = 1
    name: str = "custom"
    _noise_chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.noise_covariance, dtype=float))
        if cov.shape != (self.state_dim, self.state_dim):
            raise ValueError("noise covariance shape does not match state_dim")
        if np.any(cov):
            chol = np.linalg.cholesky(check_spd(cov, "noise covariance"))
        else:
            chol = np.zeros_like(cov)
        object.__setattr__(self, "noise_covariance", cov)
        object.__setattr__(self, "_noise_chol", chol)

    def mean_next(self, x, u) -> np.ndarray:
        x = as_vector(x, self.state_dim)
        u = as_vector(u, self.control_dim)
        h = as_vector(self.h_true(x), self.state_dim)
        g = np.asarray(self.g_true(x), dtype=float).reshape(self.state_dim, self.control_dim)
        return h + g @ u

    def noiseless(self) -> "PlantSpec":
        return PlantSpec(self.h_true, self.g_true, np.zeros_like(self.noise_covariance),
                         self.state_dim, self.control_dim, self.name + "-noiseless")


def _benchmark_h(x):
    return np.sin(x) + np.cos(3.0 * x)


def _benchmark_g(x):
    return np.reshape(2.0 + np.cos(x), (1, 1))


def benchmark_plant(noise_variance: float = 0.01) -> PlantSpec:
    """``x' = sin x + cos 3x + (2 + cos x) u + eps``, ``eps ~ N(0, noise_variance)``."""
    return PlantSpec(_benchmark_h, _benchmark_g, np.array([[noise_variance]]), 1, 1,
                     "benchmark")


PRESETS: dict[str, Callable[..., PlantSpec]] = {"benchmark": benchmark_plant}


def make_preset(name: str, noise_variance: float | None = None) -> PlantSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown plant preset {name!r}; known: {sorted(PRESETS)}") from None
    return factory() if noise_variance is None else factory(noise_variance)


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Independent substream for one time step of one trajectory."""
    return np.random.default_rng([int(seed), int(step)])


def plant_step(spec: PlantSpec, x, u, rng: np.random.Generator | None) -> np.ndarray:
    """One transition; ``rng=None`` switches the noise off."""
    mean = spec.mean_next(x, u)
    if rng is None:
        return mean
    return mean + spec._noise_chol @ rng.standard_normal(spec.state_dim)


@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, n)
    controls: np.ndarray  # (T, r)
    seed: int | None

    def __post_init__(self):
        if len(self.states) != len(self.controls) + 1:
            raise ValueError("a trajectory has one more state than controls")


def simulate(spec: PlantSpec, policy: Callable, x0, steps: int, seed: int | None,
             noise: bool = True) -> Trajectory:
    """Closed-loop rollout under ``policy(x) -> u``.

    Step ``t`` draws its noise from ``step_rng(seed, t)`` so two policies run
    with the same seed see the same noise sequence.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    x = as_vector(x0, spec.state_dim)
    states = [x]
    controls = []
    for t in range(1, steps + 1):
        u = np.atleast_1d(np.asarray(policy(x), dtype=float)).reshape(-1)
        if u.shape[0] != spec.control_dim:
            raise ValueError(f"policy returned {u.shape[0]} controls, expected {spec.control_dim}")
        rng = step_rng(seed, t) if (noise and seed is not None) else None
        x = plant_step(spec, x, u, rng)
        states.append(x)
        controls.append(u)
    return Trajectory(np.array(states), np.array(controls), seed)
