"""Closed-form algebra for unnormalized Gaussian quadratics.

Every Gaussian factor in this package is written in precision form without
the usual one-half, ``exp[-(x - m)^T P (x - m)]``. The helpers here combine
two such factors and complete the square in the control variable, which is
all that is needed to collapse the expectations in the critic target and in
the control optimality condition.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import linalg

SPD_TOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix that must be symmetric positive definite is not."""


def as_matrix(a, dim: int | None = None) -> np.ndarray:
    """Promote scalars and 1-D input to a square 2-D float array."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {m.shape}")
    return m


def as_vector(v, dim: int | None = None) -> np.ndarray:
    out = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if dim is not None and out.shape[0] != dim:
        raise ValueError(f"expected a vector of length {dim}, got {out.shape[0]}")
    return out


def check_spd(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return ``m`` symmetrized after validating it is SPD.

    Symmetry is checked to 1e-12 relative (infinity norm) and the smallest
    eigenvalue must exceed ``SPD_TOL`` times the largest.
    """
    m = as_matrix(m)
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    scale = np.abs(m).sum(axis=1).max()
    if np.abs(m - m.T).sum(axis=1).max() > 1e-12 * max(scale, 1e-300):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(m)
    if eig[0] <= SPD_TOL * max(eig[-1], 0.0) or eig[0] <= 0.0:
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (min eigenvalue {eig[0]:.3e})"
        )
    return 0.5 * (m + m.T)


def spd_inverse(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Invert an SPD matrix through its Cholesky factor."""
    m = check_spd(m, name)
    factor = linalg.cho_factor(m, lower=True)
    inv = linalg.cho_solve(factor, np.eye(m.shape[0]))
    return 0.5 * (inv + inv.T)


def spd_solve(m: np.ndarray, b: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = check_spd(m, name)
    return linalg.cho_solve(linalg.cho_factor(m, lower=True), b)


@dataclass(frozen=True)
class GaussianQuadratic:
    """The factor ``exp[-(x - mean)^T precision (x - mean)]``."""

    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean)
        precision = check_spd(as_matrix(self.precision, mean.shape[0]), "precision")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", precision)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def quadratic(self, x) -> float:
        """The exponent's quadratic form at ``x`` (without the minus sign)."""
        d = as_vector(x, self.dim) - self.mean
        return float(d @ self.precision @ d)

    def __call__(self, x) -> float:
        return float(np.exp(-self.quadratic(x)))


@dataclass(frozen=True)
class CompletedSquare:
    """Result of completing the square in ``u``: ``(u - center)^T omega (u - center) + constant``."""

    omega: np.ndarray
    center: np.ndarray
    constant: float

    @property
    def digamma(self) -> float:
        return float(np.exp(-self.constant))

    def quadratic(self, u) -> float:
        d = as_vector(u, self.center.shape[0]) - self.center
        return float(d @ self.omega @ d) + self.constant


def combine_quadratics(
    q1: GaussianQuadratic, q2: GaussianQuadratic
) -> tuple[GaussianQuadratic, float]:
    """Product of two Gaussian factors.

    Uses the identity

        (x-m1)'P1(x-m1) + (x-m2)'P2(x-m2) = (x-E)'(P1+P2)(x-E) + (m1-m2)'(P1^-1 + P2^-1)^-1 (m1-m2)

    with ``E = (P1+P2)^-1 (P1 m1 + P2 m2)``. Returns the combined factor and
    the residual constant (the second quadratic on the right).
    """
    if q1.dim != q2.dim:
        raise ValueError(f"dimension mismatch: {q1.dim} vs {q2.dim}")
    mean, precision, residual = combine_batch(q1.mean, q1.precision, q2.mean, q2.precision,
                                              validate=False)
    return GaussianQuadratic(mean[0], precision[0]), float(residual[0])


def combine_batch(m1, p1, m2, p2, validate: bool = True):
    """Vectorized :func:`combine_quadratics`; means ``(B, n)``, precisions ``(B, n, n)``."""
    p1 = np.asarray(p1, dtype=float)
    n = p1.shape[-1]
    p1 = p1.reshape(-1, n, n)
    p2 = np.asarray(p2, dtype=float).reshape(-1, n, n)
    m1 = np.asarray(m1, dtype=float).reshape(-1, n)
    m2 = np.asarray(m2, dtype=float).reshape(-1, n)
    if validate:
        _check_spd_stack(p1, "precision")
        _check_spd_stack(p2, "precision")
    precision = p1 + p2
    precision = 0.5 * (precision + np.swapaxes(precision, -1, -2))
    rhs = np.einsum("bij,bj->bi", p1, m1) + np.einsum("bij,bj->bi", p2, m2)
    mean = np.linalg.solve(precision, rhs[..., None])[..., 0]
    cov_sum = np.linalg.inv(p1) + np.linalg.inv(p2)
    diff = m1 - m2
    residual = np.einsum("bi,bi->b", diff, np.linalg.solve(cov_sum, diff[..., None])[..., 0])
    return mean, precision, residual


# Test hook: deliberately broken variants that the verification table must catch.
COMPLETE_SQUARE_SIGN_FAULT = "complete-square-sign"
KNOWN_FAULTS = (COMPLETE_SQUARE_SIGN_FAULT,)
_ACTIVE_FAULTS: set[str] = set()


@contextmanager
def injected_fault(name: str):
    if name not in KNOWN_FAULTS:
        raise ValueError(f"unknown fault {name!r}")
    _ACTIVE_FAULTS.add(name)
    try:
        yield
    finally:
        _ACTIVE_FAULTS.discard(name)


def _check_spd_stack(m: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    asym = np.abs(m - np.swapaxes(m, -1, -2)).sum(axis=-1).max(axis=-1)
    scale = np.abs(m).sum(axis=-1).max(axis=-1)
    if np.any(asym > 1e-12 * np.maximum(scale, 1e-300)):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(m)
    if np.any(eig[..., 0] <= SPD_TOL * np.maximum(eig[..., -1], 0.0)) or np.any(eig[..., 0] <= 0):
        raise NotPositiveDefiniteError(f"{name} is not positive definite")


def complete_square_batch(h, g, z, a_precision, gamma_precision, u_hat, validate: bool = True):
    """Vectorized completion of the square over a leading batch axis.

    Shapes: ``h, z (B, n)``, ``g (B, n, r)``, ``A (B, n, n)``, ``G (B, r, r)``,
    ``u_hat (B, r)``; any argument may omit the batch axis and is then shared.
    Returns ``(omega (B, r, r), center (B, r), constant (B,))``.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 2:
        g = g[None]
    n, r = g.shape[-2:]
    h = np.asarray(h, dtype=float).reshape(-1, n)
    z = np.asarray(z, dtype=float).reshape(-1, n)
    u_hat = np.asarray(u_hat, dtype=float).reshape(-1, r)
    a = np.asarray(a_precision, dtype=float).reshape(-1, n, n)
    gp = np.asarray(gamma_precision, dtype=float).reshape(-1, r, r)
    if validate:
        _check_spd_stack(a, "A")
        _check_spd_stack(gp, "control precision")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    gp = 0.5 * (gp + np.swapaxes(gp, -1, -2))

    ga = np.einsum("bir,bij->brj", np.broadcast_to(g, (max(len(g), len(a)), n, r)), a)
    omega = np.einsum("brj,bjs->brs", ga, g) + gp
    omega = 0.5 * (omega + np.swapaxes(omega, -1, -2))
    dz = h - z if COMPLETE_SQUARE_SIGN_FAULT in _ACTIVE_FAULTS else z - h
    rhs = np.einsum("brj,bj->br", ga, dz) + np.einsum("brs,bs->br", gp, u_hat)
    try:
        center = np.linalg.solve(omega, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"omega is singular: {exc}") from exc
    constant = (np.einsum("bi,bij,bj->b", dz, a, dz)
                + np.einsum("br,brs,bs->b", u_hat, gp, u_hat)
                - np.einsum("br,brs,bs->b", center, omega, center))
    # c is the minimum of a sum of non-negative quadratics; clip round-off below zero.
    return omega, center, np.maximum(constant, 0.0)


def complete_square_in_control(h, g, z, a_precision, gamma_precision, u_hat) -> CompletedSquare:
    """Complete the square in ``u`` of ``(h+gu-z)'A(h+gu-z) + (u-u_hat)'G(u-u_hat)``.

    ``A`` is ``a_precision`` (in the critic this is ``(Sigma + gamma_l)^-1``)
    and ``G`` is ``gamma_precision``. Returns

        omega  = g'Ag + G
        center = omega^-1 [g'A(z-h) + G u_hat]
        constant = (z-h)'A(z-h) + u_hat'G u_hat - center' omega center
    """
    h = as_vector(h)
    n = h.shape[0]
    g = np.asarray(g, dtype=float).reshape(n, -1)
    r = g.shape[1]
    z = as_vector(z, n)
    u_hat = as_vector(u_hat, r)
    a = check_spd(as_matrix(a_precision, n), "A")
    gp = check_spd(as_matrix(gamma_precision, r), "control precision")
    omega, center, constant = complete_square_batch(h, g, z, a, gp, u_hat, validate=False)
    return CompletedSquare(omega=omega[0], center=center[0], constant=float(constant[0]))


def gaussian_linear_moment(q: GaussianQuadratic, linear_map, offset) -> np.ndarray:
    """Expectation of ``offset + linear_map @ x`` under the normalized ``q``."""
    lm = np.atleast_2d(np.asarray(linear_map, dtype=float))
    offset = as_vector(offset)
    if lm.shape[1] != q.dim:
        raise ValueError(f"linear map has {lm.shape[1]} columns, factor has dim {q.dim}")
    if lm.shape[0] != offset.shape[0]:
        raise ValueError("offset length does not match linear map rows")
    return offset + lm @ q.mean


def floor_spd(m, floor: float) -> np.ndarray:
    """Symmetrize ``m`` and raise every eigenvalue to at least ``floor``."""
    m = as_matrix(m)
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    if vals[0] >= floor:
        return m
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)
