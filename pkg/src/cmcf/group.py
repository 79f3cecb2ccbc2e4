"""Carnot groups of step at most three in exponential coordinates.

Points are numpy arrays whose trailing axis has length ``n``; every
operation broadcasts over leading axes so whole grids can be pushed
through at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

MAX_STEP = 3


@dataclass(frozen=True)
class GroupSpec:
    """Stratified nilpotent Lie algebra data.

    ``structure[i, j, k]`` holds c_{ij}^k, i.e. [e_i, e_j] = sum_k c_{ij}^k e_k,
    with 0-based indices.
    """

    layer_dims: tuple[int, ...]
    structure: np.ndarray
    name: str = "custom"
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"layer dimensions must be positive, got {dims}")
        if len(dims) > MAX_STEP:
            raise ValueError(f"step {len(dims)} exceeds the supported maximum {MAX_STEP}")
        n = sum(dims)
        c = np.array(self.structure, dtype=float)
        if c.shape != (n, n, n):
            raise ValueError(f"structure constants must have shape {(n, n, n)}, got {c.shape}")
        c.setflags(write=False)
        w = np.repeat(np.arange(1, len(dims) + 1), dims)
        w.setflags(write=False)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "structure", c)
        object.__setattr__(self, "weights", w)

    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def n(self) -> int:
        return sum(self.layer_dims)

    @property
    def m(self) -> int:
        return self.layer_dims[0]

    @property
    def gauge_exponent(self) -> int:
        """The exponent 2 r! of the homogeneous gauge."""
        return 2 * math.factorial(self.step)

    def __hash__(self):
        return hash((self.name, self.layer_dims, self.structure.tobytes()))

    def __eq__(self, other):
        if not isinstance(other, GroupSpec):
            return NotImplemented
        return (self.layer_dims == other.layer_dims
                and np.array_equal(self.structure, other.structure))


def _antisymmetric_table(n, pairs):
    c = np.zeros((n, n, n))
    for (i, j, k), val in pairs.items():
        c[i, j, k] = val
        c[j, i, k] = -val
    return c


def euclidean(m: int) -> GroupSpec:
    return GroupSpec((m,), np.zeros((m, m, m)), name=f"euclidean:{m}")


def heisenberg(nu: int) -> GroupSpec:
    """H^nu with [X_i, X_{nu+i}] = T."""
    n = 2 * nu + 1
    c = _antisymmetric_table(n, {(i, nu + i, 2 * nu): 1.0 for i in range(nu)})
    return GroupSpec((2 * nu, 1), c, name=f"heisenberg:{nu}")


def engel() -> GroupSpec:
    """[X_1, X_2] = X_3, [X_1, X_3] = X_4, all other brackets zero."""
    c = _antisymmetric_table(4, {(0, 1, 2): 1.0, (0, 2, 3): 1.0})
    return GroupSpec((2, 1, 1), c, name="engel")


def preset(name: str) -> GroupSpec:
    """Expand ``euclidean:<m>``, ``heisenberg:<nu>`` or ``engel``."""
    key, _, arg = name.strip().partition(":")
    key = key.strip().lower()
    if key == "engel" and not arg:
        return engel()
    if key in ("euclidean", "heisenberg"):
        try:
            size = int(arg)
        except ValueError:
            raise ValueError(f"preset {name!r} needs an integer size, e.g. {key}:2") from None
        if size < 1:
            raise ValueError(f"preset size must be positive in {name!r}")
        return euclidean(size) if key == "euclidean" else heisenberg(size)
    raise ValueError(f"unknown group preset {name!r}")


def _check_dim(g, *arrays):
    for a in arrays:
        if a.shape[-1] != g.n:
            raise ValueError(f"point of dimension {a.shape[-1]} does not belong to a group of dimension {g.n}")


def bracket(g: GroupSpec, x, y) -> np.ndarray:
    """Lie bracket [x, y] of algebra elements in coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dim(g, x, y)
    # antisymmetrised so that [x, x] and [x, -x] vanish exactly in floating point
    c = g.structure
    return 0.5 * (np.einsum("...i,...j,ijk->...k", x, y, c) - np.einsum("...i,...j,ijk->...k", y, x, c))


def multiply(g: GroupSpec, x, y) -> np.ndarray:
    """Group product via the Baker-Campbell-Hausdorff series.

    The series terminates after the cubic terms for step <= 3, so the
    result is exact.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dim(g, x, y)
    out = x + y
    if g.step == 1:
        return out
    xy = bracket(g, x, y)
    out = out + 0.5 * xy
    if g.step == 3:
        out = out + (bracket(g, x, xy) - bracket(g, y, xy)) / 12.0
    return out


def inverse(g: GroupSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    return -x


def dilate(g: GroupSpec, s: float, x) -> np.ndarray:
    if not s > 0:
        raise ValueError(f"dilation factor must be positive, got {s}")
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    return x * float(s) ** g.weights


def gauge_power(g: GroupSpec, x) -> np.ndarray:
    """|x|^{2r!} = sum_i |x_i|^{2r!/d(i)}, the penalty used by sup/inf convolutions."""
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    e = g.gauge_exponent
    return np.sum(np.abs(x) ** (e // g.weights), axis=-1)


def gauge_norm(g: GroupSpec, x) -> np.ndarray:
    """Homogeneous gauge |x|, degree one under dilations.

    The 2r!-th power is never formed directly: coordinates are first made
    homogeneous of degree one and normalised by their maximum.
    """
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    e = g.gauge_exponent
    y = np.abs(x) ** (1.0 / g.weights)
    top = np.max(y, axis=-1, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    inner = np.sum((y / safe) ** e, axis=-1)
    return top[..., 0] * inner ** (1.0 / e)


def left_distance(g: GroupSpec, x, y) -> np.ndarray:
    """d(x, y) = |y^{-1} x|, invariant under left translation."""
    return gauge_norm(g, multiply(g, inverse(g, y), x))


def right_distance(g: GroupSpec, x, y) -> np.ndarray:
    """Right-invariant gauge distance |x y^{-1}|."""
    return gauge_norm(g, multiply(g, x, inverse(g, y)))


def _ad(g, x):
    # ad(x)[..., j, k] = [x, e_j]_k
    return np.einsum("...i,ijk->...jk", x, g.structure)


def _coeff_matrix(g, x, sign):
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    eye = np.eye(g.n)
    p = _ad(g, x)
    return eye + sign * 0.5 * p + (p @ p) / 12.0


def left_frame(g: GroupSpec, x) -> np.ndarray:
    """Coefficients a[..., i, k] of X_i = sum_k a_ik d/dx_k at x."""
    return _coeff_matrix(g, x, +1.0)


def right_frame(g: GroupSpec, x) -> np.ndarray:
    """Coefficients of the right-invariant fields X~_i at x."""
    return _coeff_matrix(g, x, -1.0)


def frame_jacobian(g: GroupSpec, x, frame: str = "left") -> np.ndarray:
    """Exact partial derivatives J[..., l, i, k] = d a_ik / d x_l."""
    x = np.asarray(x, dtype=float)
    _check_dim(g, x)
    sign = _frame_sign(frame)
    p = _ad(g, x)
    c = g.structure
    shape = x.shape[:-1] + (g.n, g.n, g.n)
    out = np.empty(shape)
    for l in range(g.n):
        cl = c[l]
        out[..., l, :, :] = sign * 0.5 * cl + (cl @ p + p @ cl) / 12.0
    return out


def _frame_sign(frame):
    if frame == "left":
        return 1.0
    if frame == "right":
        return -1.0
    raise ValueError(f"frame must be 'left' or 'right', got {frame!r}")


def _check_index(g, i):
    if not 0 <= i < g.n:
        raise IndexError(f"vector field index {i} out of range for dimension {g.n}")


def left_vf_coeffs(g: GroupSpec, i: int, x) -> np.ndarray:
    """Coefficient vector of the left-invariant field X_i (0-based ``i``)."""
    _check_index(g, i)
    return left_frame(g, x)[..., i, :]


def right_vf_coeffs(g: GroupSpec, i: int, x) -> np.ndarray:
    _check_index(g, i)
    return right_frame(g, x)[..., i, :]


def frame_second_order(g: GroupSpec, x, frame: str = "left") -> np.ndarray:
    """T[..., i, j, k] = X_i(a_jk), the first-order part of X_i X_j."""
    a = _coeff_matrix(g, x, _frame_sign(frame))
    jac = frame_jacobian(g, x, frame)
    return np.einsum("...il,...ljk->...ijk", a, jac)


@dataclass
class StructureReport:
    passed: bool
    rank: int
    depth: int
    violation: str | None = None
    checks: dict = field(default_factory=dict)

    def __str__(self):
        status = "pass" if self.passed else f"FAIL ({self.violation})"
        return f"{status}; span rank {self.rank} reached at bracket depth {self.depth}"


def verify_structure(g: GroupSpec, *, samples: int = 8, tol: float = 1e-10, seed: int = 0) -> StructureReport:
    """Check the algebraic and differential consistency of a group spec.

    Runs, in order: antisymmetry, grading, Jacobi identity, Hormander
    rank of iterated horizontal brackets, and recovery of the structure
    constants from brackets of the coefficient fields at random points.
    The first failing identity is reported.
    """
    c = g.structure
    n, w = g.n, g.weights
    checks = {}

    asym = np.max(np.abs(c + c.transpose(1, 0, 2))) if n else 0.0
    checks["antisymmetry"] = float(asym)

    grading = 0.0
    for i, j, k in product(range(n), repeat=3):
        if w[k] != w[i] + w[j]:
            grading = max(grading, abs(c[i, j, k]))
    checks["grading"] = float(grading)

    # sum over cyclic permutations of [[e_i, e_j], e_k]
    cc = np.einsum("ijl,lks->ijks", c, c)
    jacobi = cc + cc.transpose(1, 2, 0, 3) + cc.transpose(2, 0, 1, 3)
    checks["jacobi"] = float(np.max(np.abs(jacobi))) if n else 0.0

    rank, depth, layer_ok = _hormander(g)
    checks["rank"] = rank

    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2.0, 2.0, size=(samples, n))
    a = left_frame(g, pts)
    t = frame_second_order(g, pts)
    field_br = t - t.transpose(0, 2, 1, 3)
    expected = np.einsum("ijs,psk->pijk", c, a)
    checks["field_brackets"] = float(np.max(np.abs(field_br - expected)))
    ra = right_frame(g, pts)
    # [X_i, X~_j] = X_i(a~_j) - X~_j(a_i)
    jac_l = frame_jacobian(g, pts, "left")
    jac_r = frame_jacobian(g, pts, "right")
    mixed = (np.einsum("pil,pljk->pijk", a, jac_r) - np.einsum("pjl,plik->pijk", ra, jac_l))
    checks["left_right_commute"] = float(np.max(np.abs(mixed)))

    ordered = [
        ("antisymmetry", checks["antisymmetry"] <= tol),
        ("grading", checks["grading"] <= tol),
        ("jacobi", checks["jacobi"] <= tol),
        ("hormander rank", rank == n and layer_ok),
        ("field brackets", checks["field_brackets"] <= tol),
        ("left/right commutation", checks["left_right_commute"] <= tol),
    ]
    violation = next((name for name, ok in ordered if not ok), None)
    return StructureReport(violation is None, rank, depth, violation, checks)


def _hormander(g):
    """Rank of the span of iterated brackets of the horizontal generators."""
    n, m = g.n, g.m
    current = [np.eye(n)[i] for i in range(m)]
    basis = np.array(current)
    rank = np.linalg.matrix_rank(basis) if m else 0
    depth = 1
    layer_ok = rank == m
    while rank < n and depth < g.step + 1:
        new = [bracket(g, np.eye(n)[i], v) for i in range(m) for v in current]
        new = [v for v in new if np.any(np.abs(v) > 1e-14)]
        if not new:
            break
        depth += 1
        layer_rank = np.linalg.matrix_rank(np.array(new))
        if depth <= g.step and layer_rank != g.layer_dims[depth - 1]:
            layer_ok = False
        current = new
        basis = np.vstack([basis] + new)
        rank = int(np.linalg.matrix_rank(basis))
    return int(rank), depth, layer_ok


def quasi_triangle_constant(g: GroupSpec, samples: int = 2000, seed: int = 0, scale: float = 2.0) -> float:
    """Empirical constant K in d(x, z) <= K (d(x, y) + d(y, z)) over random triples."""
    rng = np.random.default_rng(seed)
    x, y, z = (rng.uniform(-scale, scale, size=(samples, g.n)) for _ in range(3))
    lhs = left_distance(g, x, z)
    rhs = left_distance(g, x, y) + left_distance(g, y, z)
    ok = rhs > 0
    return float(np.max(lhs[ok] / rhs[ok]))
