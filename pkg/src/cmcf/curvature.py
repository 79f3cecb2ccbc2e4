"""Mean curvature of level sets and the regularised coefficient matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import group as grp
from .fields import ScalarField, euclidean_derivatives, frame_tables


class DegenerateCoefficients(ValueError):
    pass


@dataclass(frozen=True)
class CoeffMatrix:
    entries: np.ndarray
    rho: float
    sigma: float

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def quadratic_form(self, eta) -> float:
        eta = np.asarray(eta, dtype=float)
        return float(eta @ self.entries @ eta)


def coeff_matrix(xi, rho: float, sigma: float = 0.0) -> CoeffMatrix:
    """A_ij = delta_ij - xi_i xi_j / (|xi|^2 + rho) + sigma delta_ij.

    ``rho`` is the regulariser added to |xi|^2: rho = delta for the
    approximating flow and rho = delta^2 in the barrier lemma.
    """
    xi = np.asarray(xi, dtype=float)
    if rho < 0 or sigma < 0:
        raise ValueError("rho and sigma must be non-negative")
    denom = float(xi @ xi) + rho
    if denom == 0.0:
        raise DegenerateCoefficients("xi = 0 with rho = 0 has no coefficient matrix")
    a = (1.0 + sigma) * np.eye(xi.size) - np.outer(xi, xi) / denom
    return CoeffMatrix(a, float(rho), float(sigma))


def default_tau(field: ScalarField) -> float:
    return field.grid.hmax


@dataclass
class CharMask:
    """Nodes where the relevant gradient falls below ``tau``."""

    flags: np.ndarray
    tau: float

    @property
    def fraction(self) -> float:
        return float(np.mean(self.flags))

    def as_field(self, like: ScalarField) -> ScalarField:
        return ScalarField(like.grid, self.flags.astype(float), 0.0, like.time)


def _level_set_operator(tables, grad, hess, rows):
    """Returns (sum_ij (delta_ij - n_i n_j) (X_i X_j u)*, |grad|) over ``rows``."""
    xi = tables.gradient(grad, rows)
    norm2 = sum(x * x for x in xi)
    mat = tables.hessian(grad, hess, rows)
    trace = sum(mat[i, i] for i in rows)
    quad = np.zeros_like(norm2)
    for a, i in enumerate(rows):
        quad += xi[a] * xi[a] * mat[i, i]
        for b in range(a + 1, len(rows)):
            quad += 2.0 * xi[a] * xi[b] * mat[i, rows[b]]
    with np.errstate(divide="ignore", invalid="ignore"):
        op = trace - quad / norm2
    return op, np.sqrt(norm2)


def horizontal_mean_curvature(field: ScalarField, g: grp.GroupSpec, tau: float | None = None):
    """K_0 of the level sets of ``field``.

    Returns ``(k0, mask)``: an array over the grid with NaN on masked
    (near-characteristic) nodes, and the mask itself.
    """
    tau = default_tau(field) if tau is None else tau
    if not tau > 0:
        raise ValueError("tau must be positive")
    grad, hess = euclidean_derivatives(field)
    tables = frame_tables(field.grid, g, 1.0, "left")
    op, norm = _level_set_operator(tables, grad, hess, list(range(g.m)))
    mask = norm < tau
    with np.errstate(divide="ignore", invalid="ignore"):
        k0 = np.where(mask, np.nan, op / norm)
    return k0, CharMask(mask, tau)


def riemannian_mean_curvature(field: ScalarField, g: grp.GroupSpec, eps: float, tau: float | None = None):
    """Mean curvature K_eps in the metric making {X_1..X_m, eps X_{m+1}..} orthonormal.

    The mask flags nodes with |grad_eps u| < tau.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    tau = default_tau(field) if tau is None else tau
    grad, hess = euclidean_derivatives(field)
    tables = frame_tables(field.grid, g, float(eps), "left")
    op, norm = _level_set_operator(tables, grad, hess, list(range(g.n)))
    mask = norm < tau
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(mask, np.nan, op / norm)
    return k, CharMask(mask, tau)
