"""Grids in exponential coordinates and finite-difference frame calculus.

Derivatives along the frame are assembled from coordinate central
differences and the exact polynomial coefficients of the frame at each
node:

    X_i u         = sum_k a_ik D_k u
    (X_i X_j u)*  = sum_kl a_ik a_jl D_kl u + sum_k S_ijk D_k u

where S_ijk is the symmetrised first-order part (X_i a_jk + X_j a_ik)/2,
also evaluated exactly. S vanishes identically for left frames of step
two groups but not in step three.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import group as grp

MIN_NODES = 5
_CHUNK = 1 << 15


@dataclass(frozen=True)
class Grid:
    counts: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        spacing = tuple(float(h) for h in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if not (len(counts) == len(spacing) == len(origin)):
            raise ValueError("counts, spacing and origin must have the same length")
        if any(c < MIN_NODES for c in counts):
            raise ValueError(f"every axis needs at least {MIN_NODES} nodes, got {counts}")
        if any(not h > 0 for h in spacing):
            raise ValueError(f"grid spacing must be positive, got {spacing}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def from_extent(cls, lo, hi, h) -> "Grid":
        """Uniform grid covering [lo_k, hi_k] on each axis; ``h`` scalar or per-axis."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        hs = np.broadcast_to(np.asarray(h, dtype=float), lo.shape)
        counts = np.rint((hi - lo) / hs).astype(int) + 1
        return cls(tuple(counts), tuple(hs), tuple(lo))

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def hmax(self) -> float:
        return max(self.spacing)

    @property
    def hmin(self) -> float:
        return min(self.spacing)

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + np.arange(self.counts[k]) * self.spacing[k]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, n)``."""
        mesh = np.meshgrid(*(self.axis(k) for k in range(self.ndim)), indexing="ij")
        return np.stack(mesh, axis=-1)

    def coordinate(self, k: int) -> np.ndarray:
        """Coordinate x_k broadcast to the full grid shape."""
        shape = [1] * self.ndim
        shape[k] = self.counts[k]
        return np.broadcast_to(self.axis(k).reshape(shape), self.shape)

    def refine(self) -> "Grid":
        """Halve every spacing, keeping the box and all existing nodes."""
        return Grid(tuple(2 * c - 1 for c in self.counts),
                    tuple(h / 2 for h in self.spacing), self.origin)

    def index_of(self, x) -> tuple[int, ...]:
        """Index of the node at ``x``; raises if ``x`` is not a node."""
        idx = []
        for k, xk in enumerate(np.asarray(x, dtype=float)):
            f = (xk - self.origin[k]) / self.spacing[k]
            i = int(round(f))
            if abs(f - i) > 1e-9 or not 0 <= i < self.counts[k]:
                raise ValueError(f"{x} is not a node of the grid")
            idx.append(i)
        return tuple(idx)

    def interior(self, width: int = 1) -> tuple[slice, ...]:
        return tuple(slice(width, c - width) for c in self.counts)


@dataclass
class ScalarField:
    """Grid samples of u(., t).

    ``far_field`` is the constant value assumed outside the box. ``None``
    selects linear extrapolation instead, which is only meant for data
    that cannot be constant at infinity (coordinate planes, graphs).
    """

    grid: Grid
    values: np.ndarray
    far_field: float | None = 0.0
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values of shape {self.values.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.far_field is not None:
            self.far_field = float(self.far_field)

    @classmethod
    def _trusted(cls, grid, values, far_field, time):
        """Constructor for values already known to be finite and grid shaped."""
        out = cls.__new__(cls)
        out.grid, out.values, out.far_field, out.time = grid, values, far_field, time
        return out

    def with_values(self, values, time=None) -> "ScalarField":
        return ScalarField(self.grid, values, self.far_field, self.time if time is None else time)

    def padded(self, width: int = 1) -> np.ndarray:
        if self.far_field is None:
            return np.pad(self.values, width, mode="reflect", reflect_type="odd")
        return np.pad(self.values, width, mode="constant", constant_values=self.far_field)

    def boundary_mismatch(self, shells: int = 2) -> float:
        """Largest deviation from the far field over the outer shells."""
        if self.far_field is None:
            return 0.0
        core = np.zeros(self.grid.shape, dtype=bool)
        core[self.grid.interior(shells)] = True
        dev = np.abs(self.values - self.far_field)[~core]
        return float(dev.max()) if dev.size else 0.0


def sample(grid: Grid, func, far_field=0.0, time=0.0) -> ScalarField:
    """Evaluate ``func`` on node coordinates of shape ``(..., n)``."""
    return ScalarField(grid, func(grid.points()), far_field, time)


# ---------------------------------------------------------------- differences

def euclidean_derivatives(field: ScalarField):
    """Central first differences and compact second differences.

    Returns ``(grad, hess)`` with ``grad[k]`` and ``hess[k][l]`` grid arrays;
    ``hess[k][l] is hess[l][k]``.
    """
    grid = field.grid
    up = field.padded(1)
    n = grid.ndim
    h = grid.spacing
    core = tuple(slice(1, -1) for _ in range(n))

    def shifted(offsets):
        return up[tuple(slice(1 + o, up.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    u0 = up[core]
    grad = []
    hess = [[None] * n for _ in range(n)]
    for k in range(n):
        e = [0] * n
        e[k] = 1
        plus = shifted(e)
        e[k] = -1
        minus = shifted(e)
        grad.append((plus - minus) / (2.0 * h[k]))
        hess[k][k] = (plus - 2.0 * u0 + minus) / (h[k] * h[k])
    for k in range(n):
        for l in range(k + 1, n):
            def corner(sk, sl):
                e = [0] * n
                e[k], e[l] = sk, sl
                return shifted(e)
            d = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h[k] * h[l])
            hess[k][l] = hess[l][k] = d
    return grad, hess


def frame_weights(g: grp.GroupSpec, eps: float) -> np.ndarray:
    """Row weights of the eps-frame {X_1..X_m, eps X_{m+1}..eps X_n}."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    w = np.ones(g.n)
    w[g.m:] = eps
    return w


class FrameTables:
    """Exact frame coefficients on the nodes of a grid.

    ``a[i][k]`` holds the coefficient of d/dx_k in the (eps-weighted)
    field i, or ``None`` where it vanishes identically; ``sym[i][j][k]``
    likewise holds the symmetrised first-order part.
    """

    def __init__(self, grid: Grid, g: grp.GroupSpec, eps: float = 1.0, frame: str = "left"):
        if grid.ndim != g.n:
            raise ValueError(f"grid has {grid.ndim} axes but the group has dimension {g.n}")
        self.grid, self.group, self.eps, self.frame = grid, g, float(eps), frame
        n = g.n
        w = frame_weights(g, eps)
        pts = grid.points().reshape(-1, n)
        a = np.empty((pts.shape[0], n, n))
        t = np.empty((pts.shape[0], n, n, n))
        for s in range(0, pts.shape[0], _CHUNK):
            chunk = pts[s:s + _CHUNK]
            a[s:s + _CHUNK] = grp._coeff_matrix(g, chunk, grp._frame_sign(frame))
            t[s:s + _CHUNK] = grp.frame_second_order(g, chunk, frame)
        a *= w[None, :, None]
        t *= (w[:, None] * w[None, :])[None, :, :, None]
        sym = 0.5 * (t + t.transpose(0, 2, 1, 3))

        shape = grid.shape
        self.rows = [i for i in range(n) if w[i] != 0]
        self.a = [[_nonzero(a[:, i, k], shape) for k in range(n)] for i in range(n)]
        self.sym = [[[_nonzero(sym[:, i, j, k], shape) for k in range(n)] for j in range(n)] for i in range(n)]
        self.has_sym = any(s is not None for row in self.sym for col in row for s in col)
        self.coeff_bound = float(np.max(np.abs(a))) if a.size else 0.0

    def apply(self, i, grad):
        """X_i u from the coordinate gradient."""
        out = np.zeros(self.grid.shape)
        for k, c in enumerate(self.a[i]):
            if c is None:
                continue
            if _is_one(c):
                out += grad[k]
            else:
                out += c * grad[k]
        return out

    def gradient(self, grad, rows=None):
        rows = self.rows if rows is None else rows
        return [self.apply(i, grad) for i in rows]

    def second(self, i, j, grad, hess):
        """Symmetrised (X_i X_j u)* from coordinate derivatives."""
        n = self.group.n
        out = np.zeros(self.grid.shape)
        ai, aj = self.a[i], self.a[j]
        for k in range(n):
            if ai[k] is None:
                continue
            for l in range(n):
                if aj[l] is not None:
                    out += ai[k] * aj[l] * hess[k][l]
        if i != j:
            # symmetrise the product sum so (i, j) and (j, i) agree bitwise
            other = np.zeros(self.grid.shape)
            for k in range(n):
                if aj[k] is None:
                    continue
                for l in range(n):
                    if ai[l] is not None:
                        other += aj[k] * ai[l] * hess[k][l]
            out = 0.5 * (out + other) if i < j else 0.5 * (other + out)
        for k, s in enumerate(self.sym[i][j]):
            if s is not None:
                out += s * grad[k]
        return out

    def hessian(self, grad, hess, rows=None):
        rows = self.rows if rows is None else rows
        mat = {}
        for a_, i in enumerate(rows):
            for j in rows[a_:]:
                mat[i, j] = mat[j, i] = self.second(i, j, grad, hess)
        return mat


def _nonzero(col, shape):
    """Grid array of ``col``, reduced to its minimal broadcast shape; None if zero."""
    if not np.any(col):
        return None
    arr = col.reshape(shape)
    for ax in range(arr.ndim):
        first = arr.take([0], axis=ax)
        if np.array_equal(arr, np.broadcast_to(first, arr.shape)):
            arr = first
    return np.ascontiguousarray(arr)


def _is_one(c) -> bool:
    return c.size == 1 and float(c.flat[0]) == 1.0


@functools.lru_cache(maxsize=32)
def frame_tables(grid: Grid, g: grp.GroupSpec, eps: float = 1.0, frame: str = "left") -> FrameTables:
    return FrameTables(grid, g, eps, frame)


def _check_field(field, g):
    if field.grid.ndim != g.n:
        raise ValueError(f"field lives on a {field.grid.ndim}-dimensional grid, group has dimension {g.n}")


def apply_vf(field: ScalarField, g: grp.GroupSpec, i: int, frame: str = "left") -> ScalarField:
    """X_i u (or X~_i u for ``frame='right'``), second-order accurate."""
    _check_field(field, g)
    grp._check_index(g, i)
    grad, _ = euclidean_derivatives(field)
    tables = frame_tables(field.grid, g, 1.0, frame)
    return ScalarField(field.grid, tables.apply(i, grad), _derived_far(field), field.time)


def second_derivative(field: ScalarField, g: grp.GroupSpec, i: int, j: int, eps: float = 1.0) -> ScalarField:
    """Symmetrised (X^eps_i X^eps_j u)*.

    With ``eps = 1`` this is the plain frame; rows above the first layer are
    scaled by ``eps`` otherwise.
    """
    _check_field(field, g)
    grp._check_index(g, i)
    grp._check_index(g, j)
    grad, hess = euclidean_derivatives(field)
    tables = frame_tables(field.grid, g, float(eps), "left")
    return ScalarField(field.grid, tables.second(i, j, grad, hess), _derived_far(field), field.time)


def horizontal_gradient(field: ScalarField, g: grp.GroupSpec) -> np.ndarray:
    """(X_1 u, ..., X_m u) stacked on the leading axis."""
    _check_field(field, g)
    grad, _ = euclidean_derivatives(field)
    tables = frame_tables(field.grid, g, 1.0, "left")
    return np.stack([tables.apply(i, grad) for i in range(g.m)])


def eps_gradient(field: ScalarField, g: grp.GroupSpec, eps: float) -> np.ndarray:
    """(X_1 u, ..., X_m u, eps X_{m+1} u, ..., eps X_n u)."""
    _check_field(field, g)
    grad, _ = euclidean_derivatives(field)
    tables = frame_tables(field.grid, g, float(eps), "left")
    return np.stack([tables.apply(i, grad) for i in range(g.n)])


def _derived_far(field):
    # derivatives of a field constant at infinity vanish there
    return 0.0 if field.far_field is not None else None


def interpolate(field: ScalarField, points) -> np.ndarray:
    """Multilinear interpolation at arbitrary points inside the box."""
    from scipy.interpolate import RegularGridInterpolator

    grid = field.grid
    axes = [grid.axis(k) for k in range(grid.ndim)]
    interp = RegularGridInterpolator(axes, field.values, method="linear", bounds_error=True)
    return interp(points)
