"""Closed-form solutions and barrier functions used as oracles.

Coordinate indices are 0-based throughout, as in :mod:`cmcf.group`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import group as grp
from .fields import Grid, ScalarField, euclidean_derivatives, frame_tables

KINDS = ("cylinder", "plane", "plane_squared")


class BarrierError(ValueError):
    pass


# ------------------------------------------------------------------ cut-off

def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise BarrierError("psi is defined for s >= 0 only")
    return s


def psi(s):
    """(s - 2)^3 on [0, 2], 0 beyond."""
    s = _check_s(s)
    return np.where(s < 2.0, (np.minimum(s, 2.0) - 2.0) ** 3, 0.0)


def psi_prime(s):
    s = _check_s(s)
    return np.where(s < 2.0, 3.0 * (np.minimum(s, 2.0) - 2.0) ** 2, 0.0)


def psi_second(s):
    s = _check_s(s)
    return np.where(s < 2.0, 6.0 * (np.minimum(s, 2.0) - 2.0), 0.0)


PSI_C1 = 2.0 * math.sqrt(3.0)
PSI_C2 = 12.0


# ------------------------------------------------------------ exact solutions

def _require_cylinder(g):
    if g.m < 2:
        raise BarrierError("the cylinder solution needs at least two horizontal directions")


def cylinder_value(g: grp.GroupSpec, x, t):
    """u_0 = |x_H|^2 / 2 + (m - 1) t."""
    _require_cylinder(g)
    x = np.asarray(x, dtype=float)
    xh = x[..., :g.m]
    return 0.5 * np.sum(xh * xh, axis=-1) + (g.m - 1) * np.asarray(t, dtype=float)


def extinction_time(R0: float, m: int) -> float:
    """Time at which the cylinder of radius R0 collapses: R0^2 / (2 (m - 1))."""
    if m < 2:
        raise BarrierError("extinction time needs m >= 2")
    if not R0 > 0:
        raise BarrierError("R0 must be positive")
    return R0 * R0 / (2.0 * (m - 1))


def cylinder_radius(R0: float, m: int, t: float) -> float:
    r2 = R0 * R0 - 2.0 * (m - 1) * t
    return math.sqrt(r2) if r2 > 0 else 0.0


@dataclass(frozen=True)
class Barrier:
    """u_0 (cylinder), u = x_k (plane) or u = x_k^2 (plane_squared)."""

    kind: str
    group: grp.GroupSpec
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BarrierError(f"unknown barrier kind {self.kind!r}; expected one of {KINDS}")
        g = self.group
        if self.kind == "cylinder":
            _require_cylinder(g)
            return
        if self.k is None or not 0 <= self.k < g.n:
            raise BarrierError(f"plane kinds need a coordinate index in [0, {g.n})")
        d = g.weights[self.k]
        if d > 2:
            raise BarrierError(
                f"coordinate plane x_{self.k} has degree {d}; only degrees 1 and 2 give minimal "
                "planes (the degree-3 plane of the Engel group has non-zero curvature)")

    def value(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        if self.kind == "cylinder":
            return cylinder_value(self.group, x, t)
        xk = x[..., self.k]
        return xk if self.kind == "plane" else xk * xk

    def time_derivative(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        rate = float(self.group.m - 1) if self.kind == "cylinder" else 0.0
        return np.full(x.shape[:-1], rate)

    def coord_gradient(self, x):
        """Euclidean gradient D_k u, shape (..., n)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        if self.kind == "cylinder":
            out[..., :self.group.m] = x[..., :self.group.m]
        elif self.kind == "plane":
            out[..., self.k] = 1.0
        else:
            out[..., self.k] = 2.0 * x[..., self.k]
        return out

    def coord_hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = self.group.n
        out = np.zeros(x.shape[:-1] + (n, n))
        if self.kind == "cylinder":
            for i in range(self.group.m):
                out[..., i, i] = 1.0
        elif self.kind == "plane_squared":
            out[..., self.k, self.k] = 2.0
        return out

    def horizontal_gradient(self, x):
        """(X_1 u, ..., X_m u) from the exact frame, shape (..., m)."""
        a = grp.left_frame(self.group, x)
        return np.einsum("...ik,...k->...i", a[..., :self.group.m, :], self.coord_gradient(x))


def plane_values(g: grp.GroupSpec, k: int) -> Barrier:
    return Barrier("plane", g, k)


def parse_kind(spec: str, g: grp.GroupSpec) -> Barrier:
    """'cylinder', 'plane:k' or 'plane_squared:k' (k 0-based)."""
    name, _, arg = spec.partition(":")
    name = name.strip()
    if name == "cylinder":
        return Barrier("cylinder", g)
    if name in ("plane", "plane_squared"):
        try:
            k = int(arg)
        except ValueError:
            raise BarrierError(f"barrier kind {spec!r} needs an integer coordinate index") from None
        return Barrier(name, g, k)
    raise BarrierError(f"unknown barrier kind {spec!r}")


def _as_barrier(g, kind):
    if isinstance(kind, Barrier):
        return kind
    return parse_kind(kind, g)


def barrier_w(g: grp.GroupSpec, kind, delta: float, C0: float, x, t):
    """w = psi(u_k(x, t)) - C0 sqrt(delta) t."""
    b = _as_barrier(g, kind)
    if b.kind == "plane":
        raise BarrierError("psi is applied to u_0 or x_k^2 only; the signed plane x_k is not a valid argument")
    if not delta > 0:
        raise BarrierError("delta must be positive")
    if not C0 > 0:
        raise BarrierError("C0 must be positive")
    return psi(b.value(x, t)) - C0 * math.sqrt(delta) * np.asarray(t, dtype=float)


# -------------------------------------------------------------- sub-solution

@dataclass
class BarrierReport:
    kind: str
    delta: float
    eps: float
    C0: float
    h: float
    residual: float          # max over nodes of LHS - RHS (discrete RHS)
    analytic_residual: float  # same with exact derivatives
    slack: float
    nodes: int
    worst_point: tuple

    @property
    def passed(self) -> bool:
        return self.residual <= self.slack


def _check_eps_delta(eps, delta):
    if not delta > 0:
        raise BarrierError("delta must be positive")
    if eps < 0:
        raise BarrierError("eps must be non-negative")
    if eps * eps > delta ** 4.5:
        raise BarrierError(f"eps^2 = {eps * eps:.3e} exceeds delta^(9/2) = {delta ** 4.5:.3e}")


def _operator(tables, grad, hess, rho):
    """sum_ij (delta_ij - xi_i xi_j / (|xi|^2 + rho)) (X_i X_j w)* over the eps-frame."""
    rows = tables.rows
    xi = tables.gradient(grad, rows)
    mat = tables.hessian(grad, hess, rows)
    norm2 = sum(x * x for x in xi)
    trace = sum(mat[i, i] for i in rows)
    quad = np.zeros_like(norm2)
    for a, i in enumerate(rows):
        for b, j in enumerate(rows):
            quad += xi[a] * xi[b] * mat[i, j]
    return trace - quad / (norm2 + rho)


def _spatial_residual(b: Barrier, pts, t, delta, eps, grid: Grid | None):
    """LHS - RHS without the -C0 sqrt(delta) term, on ``pts``.

    With ``grid`` the spatial derivatives of w come from grid differences,
    otherwise from the exact frame.
    """
    g = b.group
    u = b.value(pts, t)
    lhs = psi_prime(u) * b.time_derivative(pts, t)
    rho = delta * delta
    if grid is not None:
        field = ScalarField(grid, psi(u), None, t)
        grad, hess = euclidean_derivatives(field)
        rhs = _operator(frame_tables(grid, g, float(eps), "left"), grad, hess, rho)
        return lhs - rhs
    # exact: D w = psi' D u, D^2 w = psi' D^2 u + psi'' Du Du^T
    du = b.coord_gradient(pts)
    p1, p2 = psi_prime(u), psi_second(u)
    dw = p1[..., None] * du
    d2w = p1[..., None, None] * b.coord_hessian(pts) + p2[..., None, None] * du[..., :, None] * du[..., None, :]
    weights = np.ones(g.n)
    weights[g.m:] = eps
    a = grp.left_frame(g, pts) * weights[:, None]
    t2 = grp.frame_second_order(g, pts) * (weights[:, None] * weights[None, :])[..., None]
    s = 0.5 * (t2 + np.swapaxes(t2, -3, -2))
    xi = np.einsum("...ik,...k->...i", a, dw)
    m2 = np.einsum("...ik,...jl,...kl->...ij", a, a, d2w) + np.einsum("...ijk,...k->...ij", s, dw)
    norm2 = np.sum(xi * xi, axis=-1)
    rhs = np.trace(m2, axis1=-2, axis2=-1) - np.einsum("...i,...ij,...j->...", xi, m2, xi) / (norm2 + rho)
    return lhs - rhs


def _region(b: Barrier, grid: Grid):
    """Interior nodes, restricted to |x_H| <= 2 for the plane kinds."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask[grid.interior(1)] = True
    if b.kind != "cylinder":
        pts = grid.points()
        xh2 = np.sum(pts[..., :b.group.m] ** 2, axis=-1)
        mask &= xh2 <= 4.0 + 1e-12
    return mask


def raw_residual(g, kind, delta, eps, grid: Grid, t: float = 0.0, exact: bool = False) -> np.ndarray:
    """Residual field before the -C0 sqrt(delta) shift; NaN outside the checked region."""
    _check_eps_delta(eps, delta)
    b = _as_barrier(g, kind)
    if b.kind == "plane":
        raise BarrierError("the barrier lemma concerns psi(u_0) and psi(x_k^2)")
    pts = grid.points()
    r = _spatial_residual(b, pts, t, delta, eps, None if exact else grid)
    return np.where(_region(b, grid), r, np.nan)


def default_slack(grid: Grid) -> float:
    return 10.0 * grid.hmax ** 2


def barrier_subsolution_residual(g: grp.GroupSpec, kind, delta: float, eps: float, C0: float,
                                 grid: Grid, t: float = 0.0, slack: float | None = None) -> BarrierReport:
    """max over the checked nodes of dt w - RHS(w) with denominator |grad_eps w|^2 + delta^2."""
    if not C0 > 0:
        raise BarrierError("C0 must be positive")
    b = _as_barrier(g, kind)
    shift = C0 * math.sqrt(delta)
    disc = raw_residual(g, b, delta, eps, grid, t) - shift
    exact = raw_residual(g, b, delta, eps, grid, t, exact=True) - shift
    idx = np.unravel_index(int(np.nanargmax(disc)), grid.shape)
    pt = tuple(float(v) for v in grid.points()[idx])
    return BarrierReport(b.kind if b.k is None else f"{b.kind}:{b.k}", delta, eps, C0, grid.hmax,
                         float(np.nanmax(disc)), float(np.nanmax(exact)),
                         default_slack(grid) if slack is None else slack,
                         int(np.count_nonzero(~np.isnan(disc))), pt)


def calibrate_c0(g: grp.GroupSpec, kind, delta: float, eps: float, grid: Grid,
                 t: float = 0.0, margin: float = 1.05) -> float:
    """Smallest C0 (times ``margin``) making the exact residual non-positive.

    The residual is affine in C0 with slope -sqrt(delta), so the threshold
    is read off directly.
    """
    r = float(np.nanmax(raw_residual(g, kind, delta, eps, grid, t, exact=True)))
    base = max(r, 0.0) / math.sqrt(delta)
    return margin * base if base > 0 else 1e-12
