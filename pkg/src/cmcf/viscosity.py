"""Sup/inf convolutions, semiconvexity diagnostics and a discrete viscosity checker."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import group as grp
from .fields import Grid, ScalarField, euclidean_derivatives


# ------------------------------------------------------------ convolutions

@dataclass
class ConvolvedField:
    base: ScalarField
    mu: float
    direction: str
    values: np.ndarray

    def as_field(self) -> ScalarField:
        return self.base.with_values(self.values)


def _kernel_exponent(g):
    return 2 * math.factorial(g.step)


def gauge_window(g: grp.GroupSpec, grid: Grid, radius: float) -> np.ndarray:
    """Per-axis bound on |y_k - x_k| over the box when |y^{-1} x| <= radius.

    From y = x z^{-1} with |z| <= radius, bounding every bracket term by
    absolute values of the structure constants.
    """
    lo = np.asarray(grid.origin)
    hi = lo + (np.asarray(grid.counts) - 1) * np.asarray(grid.spacing)
    X = np.maximum(np.abs(lo), np.abs(hi))
    Z = radius ** np.asarray(g.weights, dtype=float)
    C = np.abs(g.structure)

    def br(a, b):
        return np.einsum("ijk,i,j->k", C, a, b)

    xz = br(X, Z)
    return Z + 0.5 * xz + (br(X, xz) + br(Z, xz)) / 12.0


def _window_offsets(g, grid, radius):
    bound = gauge_window(g, grid, radius)
    reach = [min(int(math.ceil(b / h - 1e-12)), c - 1) for b, h, c in zip(bound, grid.spacing, grid.counts)]
    return itertools.product(*(range(-r, r + 1) for r in reach))


def _convolve(field: ScalarField, g: grp.GroupSpec, mu: float, sign: int) -> np.ndarray:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    grid = field.grid
    u = field.values
    osc = float(u.max() - u.min())
    if osc == 0.0:
        return u.copy()
    power = _kernel_exponent(g)
    radius = (2.0 * mu * osc) ** (1.0 / power)
    pts = grid.points()
    best = u.copy()
    for off in _window_offsets(g, grid, radius):
        if not any(off):
            continue
        # target x ranges over nodes with x + off inside the grid; y = x + off
        tgt = tuple(slice(max(0, -o), c - max(0, o)) for o, c in zip(off, grid.counts))
        src = tuple(slice(max(0, o), c - max(0, -o)) for o, c in zip(off, grid.counts))
        x = pts[tgt]
        y = pts[src]
        pen = grp.gauge_power(g, grp.multiply(g, grp.inverse(g, y), x)) / (2.0 * mu)
        view = best[tgt]
        if sign > 0:
            np.maximum(view, u[src] - pen, out=view)
        else:
            np.minimum(view, u[src] + pen, out=view)
    return best


def sup_convolution(field: ScalarField, g: grp.GroupSpec, mu: float) -> ConvolvedField:
    """u^mu(x) = max over nodes y of u(y) - |y^{-1} x|^{2r!} / (2 mu)."""
    return ConvolvedField(field, float(mu), "sup", _convolve(field, g, mu, +1))


def inf_convolution(field: ScalarField, g: grp.GroupSpec, mu: float) -> ConvolvedField:
    """u_mu(x) = min over nodes y of u(y) + |y^{-1} x|^{2r!} / (2 mu)."""
    return ConvolvedField(field, float(mu), "inf", _convolve(field, g, mu, -1))


def brute_force_convolution(field: ScalarField, g: grp.GroupSpec, mu: float, direction: str = "sup") -> np.ndarray:
    """Reference: the extremum over every node of the grid, no window."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    pts = field.grid.points().reshape(-1, field.grid.ndim)
    u = field.values.reshape(-1)
    out = np.empty_like(u)
    for a in range(pts.shape[0]):
        pen = grp.gauge_power(g, grp.multiply(g, grp.inverse(g, pts), pts[a])) / (2.0 * mu)
        out[a] = np.max(u - pen) if direction == "sup" else np.min(u + pen)
    return out.reshape(field.grid.shape)


def _min_hessian_eigs(field: ScalarField) -> np.ndarray:
    _, hess = euclidean_derivatives(field)
    n = field.grid.ndim
    core = field.grid.interior(1)
    H = np.stack([np.stack([hess[k][l][core] for l in range(n)], axis=-1) for k in range(n)], axis=-2)
    return np.linalg.eigvalsh(H)[..., 0]


def semiconvexity_modulus(field: ScalarField) -> float:
    """Most negative eigenvalue of the centred Euclidean Hessian over interior nodes."""
    return float(_min_hessian_eigs(field).min())


def kernel_semiconvexity(g: grp.GroupSpec, grid: Grid, mu: float, osc: float) -> float:
    """Most negative discrete Hessian eigenvalue of x -> -|y^{-1}x|^{2r!}/(2 mu).

    Taken over interior nodes x within the convolution window of y (penalty
    at most ``osc``), for y at the box centre and its two extreme corners.
    This is the reference scale for the semiconvexity of sup-convolutions.
    """
    pts = grid.points()
    lo = np.asarray(grid.origin)
    hi = lo + (np.asarray(grid.counts) - 1) * np.asarray(grid.spacing)
    core = grid.interior(1)
    worst = 0.0
    for y in (0.5 * (lo + hi), lo, hi):
        pen = grp.gauge_power(g, grp.multiply(g, grp.inverse(g, y), pts)) / (2.0 * mu)
        eig = _min_hessian_eigs(ScalarField(grid, -pen, None))
        inside = pen[core] <= osc
        if np.any(inside):
            worst = min(worst, float(eig[inside].min()))
    return worst


@dataclass
class ConvergenceReport:
    mus: list
    sup_norms: list

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.sup_norms, self.sup_norms[1:]))


def convergence_to_base(field: ScalarField, g: grp.GroupSpec, mus, direction: str = "sup",
                        interior: int = 1) -> ConvergenceReport:
    """sup over interior nodes of |u^mu - u| along a decreasing mu sequence."""
    mus = [float(m) for m in mus]
    if any(b >= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu sequence must be strictly decreasing")
    core = field.grid.interior(interior)
    conv = sup_convolution if direction == "sup" else inf_convolution
    norms = []
    for mu in mus:
        c = conv(field, g, mu)
        norms.append(float(np.max(np.abs(c.values[core] - field.values[core]))))
    return ConvergenceReport(mus, norms)


# ------------------------------------------------------------- jet checking

def degenerate_branch_bound(R, side: str) -> float:
    """sub: max over |p| <= 1 of tr R - p^T R p; super: the min."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("R must be a square matrix")
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(R).max(initial=0.0)))):
        raise ValueError("R must be symmetric")
    if R.size == 0:
        return 0.0
    lam = np.linalg.eigvalsh(0.5 * (R + R.T))
    tr = float(np.trace(R))
    if side == "sub":
        return tr - min(0.0, float(lam[0]))
    if side == "super":
        return tr - max(0.0, float(lam[-1]))
    raise ValueError(f"side must be 'sub' or 'super', got {side!r}")


@dataclass
class JetSample:
    location: tuple
    p: np.ndarray
    q: float
    R: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if not np.allclose(self.R, self.R.T):
            raise ValueError("R must be symmetric")


@dataclass(frozen=True)
class QuadraticTest:
    """phi = q s + c_t s^2/2 + p.(x - x0) + (x - x0)^T Q (x - x0)/2 with s = t - t0."""

    x0: tuple
    t0: float
    q: float
    c_t: float
    p: tuple
    Q: tuple  # nested rows

    def values(self, pts, t):
        d = np.asarray(pts) - np.asarray(self.x0)
        Q = np.asarray(self.Q)
        s = t - self.t0
        return (self.q * s + 0.5 * self.c_t * s * s + d @ np.asarray(self.p)
                + 0.5 * np.einsum("...k,kl,...l->...", d, Q, d))

    def time_derivative(self, t):
        return self.q + self.c_t * (t - self.t0)

    def coord_gradient(self, x):
        return np.asarray(self.p) + np.asarray(self.Q) @ (np.asarray(x) - np.asarray(self.x0))


def quadratic_family(centers, times, slopes, c_t, gradient, diag) -> list[QuadraticTest]:
    """Tests centred at each (x0, t0) with p = gradient(x0) and Q = diag(diag)."""
    out = []
    Q = tuple(tuple(float(diag[k]) if k == l else 0.0 for l in range(len(diag))) for k in range(len(diag)))
    for x0 in centers:
        p = tuple(float(v) for v in gradient(np.asarray(x0, dtype=float)))
        for t0 in times:
            for q in slopes:
                out.append(QuadraticTest(tuple(float(v) for v in x0), float(t0), float(q), float(c_t), p, Q))
    return out


def data_jet_family(snapshots, centers, times, kappas, c_t, side) -> list[QuadraticTest]:
    """Tests built from the discrete jet of the data itself.

    At each centre node x0 and each snapshot nearest to a requested time
    t0 (interior in time), p and D^2u are central differences of u(., t0),
    q is the central time difference, Q = D^2u + kappa I on the sub side
    and D^2u - kappa I on the super side. The time curvature is the
    discrete u_tt plus (sub) or minus (super) c_t + 2 |grad u_t|^2 / kappa,
    which dominates the time-space cross term that phi lacks. u - phi then
    peaks (dips) at (x0, t0) up to discretisation error, so every test
    produces a touching point where the data are smooth.
    """
    if side not in ("sub", "super"):
        raise ValueError(f"side must be 'sub' or 'super', got {side!r}")
    snaps = list(snapshots)
    if len(snaps) < 3:
        raise ValueError("need at least three snapshots")
    sign = 1.0 if side == "sub" else -1.0
    stimes = np.array([s.time for s in snaps])
    grid = snaps[0].grid
    out = []
    for t0 in times:
        k = int(np.clip(np.argmin(np.abs(stimes - t0)), 1, len(snaps) - 2))
        grad, hess = euclidean_derivatives(snaps[k])
        lo, hi = stimes[k] - stimes[k - 1], stimes[k + 1] - stimes[k]
        um, u0, up = snaps[k - 1].values, snaps[k].values, snaps[k + 1].values
        rate = (up - um) / (lo + hi)
        curv = 2.0 * ((up - u0) / hi - (u0 - um) / lo) / (lo + hi)
        rate_grad, _ = euclidean_derivatives(ScalarField(grid, rate, None))
        for x0 in centers:
            idx = grid.index_of(x0)
            node = tuple(float(o + i * h) for o, i, h in zip(grid.origin, idx, grid.spacing))
            p = tuple(float(gk[idx]) for gk in grad)
            cross = sum(float(gk[idx]) ** 2 for gk in rate_grad)
            for kappa in kappas:
                Q = tuple(tuple(float(hess[i][j][idx]) + (sign * kappa if i == j else 0.0)
                                for j in range(grid.ndim)) for i in range(grid.ndim))
                ct = float(curv[idx]) + sign * (abs(c_t) + 2.0 * cross / kappa)
                out.append(QuadraticTest(node, float(stimes[k]), float(rate[idx]), ct, p, Q))
    return out


def test_jet(g: grp.GroupSpec, test: QuadraticTest, x, t):
    """(grad_0 phi, (X_i X_j phi)* over i, j <= m, dt phi) at (x, t), exact."""
    x = np.asarray(x, dtype=float)
    a = grp.left_frame(g, x)[: g.m]
    T = grp.frame_second_order(g, x)[: g.m, : g.m]
    S = 0.5 * (T + np.swapaxes(T, 0, 1))
    D = test.coord_gradient(x)
    Q = np.asarray(test.Q)
    grad0 = a @ D
    R = a @ Q @ a.T + S @ D
    return grad0, 0.5 * (R + R.T), test.time_derivative(t)


def _strict_extrema(w: np.ndarray, sign: int) -> np.ndarray:
    """Interior nodes of ``w`` (space-time, time on axis 0) that are strict 1-ring maxima
    (sign = +1) or minima (sign = -1). Ties go to the lexicographically lower node;
    flat neighbourhoods are skipped."""
    v = sign * w
    nd = v.ndim
    core = tuple(slice(1, s - 1) for s in v.shape)
    centre = v[core]
    ok = np.ones(centre.shape, dtype=bool)
    strict = np.zeros(centre.shape, dtype=bool)
    for off in itertools.product((-1, 0, 1), repeat=nd):
        if not any(off):
            continue
        nb = v[tuple(slice(1 + o, s - 1 + o) for o, s in zip(off, v.shape))]
        later = next(o for o in off if o != 0) > 0
        ok &= (centre > nb) | ((centre == nb) & later)
        strict |= centre > nb
    out = np.zeros(v.shape, dtype=bool)
    out[core] = ok & strict
    return out


@dataclass
class Witness:
    kind: str
    location: tuple
    t: float
    violation: float
    branch: str


@dataclass
class ViscosityReport:
    side: str
    tol: float
    touching: int
    worst: float
    witness: Witness | None
    rows: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.touching > 0 and self.worst <= self.tol

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "location", "t", "violation", "branch"])
            for r in self.rows:
                loc = " ".join(repr(float(v)) for v in r.location)
                w.writerow([r.kind, loc, repr(float(r.t)), repr(float(r.violation)), r.branch])


def viscosity_residual_check(snapshots, g: grp.GroupSpec, family, tau: float, side: str,
                             tol: float) -> ViscosityReport:
    """Checks the viscosity jet inequalities at discrete touching points.

    ``snapshots`` is a time-ordered list of ScalarFields on one grid. For
    every test phi, each strict space-time local max (sub side) or min
    (super side) of u - phi over interior nodes is a touching point; the
    violation is dt phi - F(phi) on the sub side and F(phi) - dt phi on the
    super side, where F is the level-set operator if |grad_0 phi| >= tau
    and the degenerate branch bound otherwise.
    """
    family = list(family)
    if not family:
        raise ValueError("empty test family")
    if side not in ("sub", "super"):
        raise ValueError(f"side must be 'sub' or 'super', got {side!r}")
    snaps = list(snapshots)
    if len(snaps) < 3:
        raise ValueError("need at least three snapshots for space-time touching points")
    grid = snaps[0].grid
    times = np.array([s.time for s in snaps])
    if np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must increase strictly")
    U = np.stack([s.values for s in snaps])
    pts = grid.points()
    sign = 1 if side == "sub" else -1
    rows, worst, witness = [], -math.inf, None
    for test in family:
        phi = np.stack([test.values(pts, t) for t in times])
        hits = np.argwhere(_strict_extrema(U - phi, sign))
        for idx in hits:
            ti, node = int(idx[0]), tuple(int(v) for v in idx[1:])
            x, t = pts[node], float(times[ti])
            grad0, R, dt_phi = test_jet(g, test, x, t)
            norm = float(np.linalg.norm(grad0))
            if norm >= tau:
                nu = grad0 / norm
                F = float(np.trace(R) - nu @ R @ nu)
                branch = "curvature"
            else:
                F = degenerate_branch_bound(R, side)
                branch = "degenerate"
            viol = dt_phi - F if side == "sub" else F - dt_phi
            wt = Witness(side, tuple(float(v) for v in x), t, float(viol), branch)
            rows.append(wt)
            if viol > worst:
                worst, witness = float(viol), wt
    return ViscosityReport(side, float(tol), len(rows), worst if rows else 0.0, witness, rows)
