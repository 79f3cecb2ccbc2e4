import numpy as np
import pytest
from hypothesis import given, strategies as st

from cmcf import group as grp
from cmcf.fields import (Grid, ScalarField, apply_vf, eps_gradient, euclidean_derivatives, frame_tables,
                         horizontal_gradient, interpolate, sample, second_derivative)

H1 = grp.heisenberg(1)


def box(g, extent=1.0, h=0.125):
    return Grid.from_extent((-extent,) * g.n, (extent,) * g.n, h)


def linear(grid, func):
    # odd reflection at the boundary keeps affine data exact up to the edge
    return sample(grid, func, far_field=None)


# ------------------------------------------------------------------ grids

def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((4, 5), (0.1, 0.1), (0, 0))
    with pytest.raises(ValueError):
        Grid((5, 5), (0.1, 0.0), (0, 0))
    with pytest.raises(ValueError):
        Grid((5, 5), (0.1,), (0, 0))


def test_grid_from_extent_and_nodes():
    grid = Grid.from_extent((-1, -2), (1, 2), 0.25)
    assert grid.counts == (9, 17)
    assert grid.index_of((0.5, -2.0)) == (6, 0)
    with pytest.raises(ValueError):
        grid.index_of((0.1, 0.0))
    with pytest.raises(ValueError):
        grid.index_of((1.25, 0.0))
    fine = grid.refine()
    assert fine.counts == (17, 33) and fine.spacing == (0.125, 0.125)


def test_field_validation():
    grid = box(H1)
    with pytest.raises(ValueError):
        ScalarField(grid, np.zeros((3, 3, 3)))
    bad = np.zeros(grid.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid, bad)


def test_dimension_mismatch():
    f = sample(Grid.from_extent((-1, -1), (1, 1), 0.25), lambda p: p[..., 0])
    with pytest.raises(ValueError):
        apply_vf(f, H1, 0)


# --------------------------------------------------------------- examples

def test_apply_vf_linear_examples():
    grid = box(H1)
    pts = grid.points()
    x1 = linear(grid, lambda p: p[..., 0])
    assert np.array_equal(apply_vf(x1, H1, 0).values, np.ones(grid.shape))
    x3 = linear(grid, lambda p: p[..., 2])
    np.testing.assert_allclose(apply_vf(x3, H1, 0).values, -pts[..., 1] / 2, atol=1e-14)
    x1x2 = linear(grid, lambda p: p[..., 0] * p[..., 1])
    np.testing.assert_allclose(apply_vf(x1x2, H1, 0, frame="right").values, pts[..., 1], atol=1e-13)


def test_apply_vf_index_range():
    f = linear(box(H1), lambda p: p[..., 0])
    with pytest.raises(IndexError):
        apply_vf(f, H1, 3)


def test_second_derivative_examples():
    grid = box(H1)
    core = grid.interior(1)
    q = sample(grid, lambda p: 0.5 * (p[..., 0] ** 2 + p[..., 1] ** 2), far_field=None)
    for i in range(2):
        for j in range(2):
            v = second_derivative(q, H1, i, j).values[core]
            np.testing.assert_allclose(v, float(i == j), atol=1e-12)
    x3 = linear(grid, lambda p: p[..., 2])
    np.testing.assert_allclose(second_derivative(x3, H1, 0, 1).values, 0.0, atol=1e-14)


def _commutator_error(h):
    grid = box(H1, 1.0, h)
    f = sample(grid, lambda p: np.sin(p[..., 0] + 0.5 * p[..., 2]) * np.cos(p[..., 1]), far_field=None)
    x12 = apply_vf(apply_vf(f, H1, 1), H1, 0)
    x21 = apply_vf(apply_vf(f, H1, 0), H1, 1)
    x3 = apply_vf(f, H1, 2)
    # compare on the central cube |x|_inf <= 0.5, shared by both resolutions
    sel = np.all(np.abs(grid.points()) <= 0.5 + 1e-12, axis=-1)
    return float(np.max(np.abs((x12.values - x21.values - x3.values)[sel])))


def test_commutator_recovers_bracket():
    e1, e2 = _commutator_error(1 / 8), _commutator_error(1 / 16)
    assert e1 < 0.05
    assert 3.5 <= e1 / e2 <= 4.5


def test_gradients_examples():
    grid = box(H1)
    pts = grid.points()
    x3 = linear(grid, lambda p: p[..., 2])
    grad = horizontal_gradient(x3, H1)
    np.testing.assert_allclose(grad[0], -pts[..., 1] / 2, atol=1e-14)
    np.testing.assert_allclose(grad[1], pts[..., 0] / 2, atol=1e-14)
    axis = (np.abs(pts[..., 0]) < 1e-12) & (np.abs(pts[..., 1]) < 1e-12)
    assert np.all(grad[:, axis] == 0.0)
    const = ScalarField(grid, np.full(grid.shape, 3.0), 3.0)
    assert np.all(horizontal_gradient(const, H1) == 0.0)
    assert np.all(eps_gradient(const, H1, 0.5) == 0.0)
    x1 = linear(grid, lambda p: p[..., 0])
    for eps in (0.0, 0.1, 1.0):
        g = eps_gradient(x1, H1, eps)
        np.testing.assert_allclose(np.sqrt(np.sum(g * g, axis=0)), 1.0, atol=1e-14)


@given(eps=st.floats(0.0, 2.0))
def test_eps_gradient_weighting(eps):
    grid = box(H1, 1.0, 0.25)
    f = sample(grid, lambda p: p[..., 0] * p[..., 2] + p[..., 1] ** 2, far_field=None)
    full = eps_gradient(f, H1, eps)
    plain = eps_gradient(f, H1, 1.0)
    np.testing.assert_allclose(full[:2], horizontal_gradient(f, H1), atol=0)
    np.testing.assert_allclose(full[2], eps * plain[2], atol=1e-14)
    if eps == 0.0:
        assert np.all(full[2] == 0.0)


# -------------------------------------------------------- convergence order

def _quartic(p):
    x = p[..., 0]
    y = p[..., 1]
    z = p[..., 2]
    return x ** 4 / 4 + x * y ** 3 - 2 * x * x * z + z ** 2 * y + 0.3 * z ** 4


def _exact_pair(g, u, pts, i, j, s=1e-3):
    # (X_i X_j u)(x) is the mixed s,t derivative of u(x exp(s e_i) exp(t e_j))
    ei, ej = np.eye(g.n)[i], np.eye(g.n)[j]

    def f(a, b):
        return u(grp.multiply(g, grp.multiply(g, pts, a * ei), b * ej))
    return (f(s, s) - f(s, -s) - f(-s, s) + f(-s, -s)) / (4 * s * s)


def _errors(h, g, u, extent, centre):
    grid = box(g, extent, h)
    f = sample(grid, u, far_field=None)
    pts = grid.points()
    sel = np.all(np.abs(pts) <= centre + 1e-12, axis=-1)
    out = {}
    pts = pts[sel]
    for i in range(g.n):
        ei = np.eye(g.n)[i] * 1e-4
        exact = (u(grp.multiply(g, pts, ei)) - u(grp.multiply(g, pts, -ei))) / 2e-4
        out["vf", i] = np.max(np.abs(apply_vf(f, g, i).values[sel] - exact))
    for i in range(g.n):
        for j in range(i, g.n):
            exact = 0.5 * (_exact_pair(g, u, pts, i, j) + _exact_pair(g, u, pts, j, i))
            out["xx", i, j] = np.max(np.abs(second_derivative(f, g, i, j).values[sel] - exact))
    return out


@pytest.mark.parametrize("name", ["heisenberg:1", "engel"])
def test_convergence_order(name):
    g = grp.preset(name)
    u = _quartic if g.n == 3 else (lambda p: _quartic(p) + p[..., 3] ** 2 * p[..., 0] ** 2 + p[..., 3] ** 3)
    extent, centre = (1.0, 0.5) if g.n == 3 else (0.5, 0.25)
    coarse, fine = _errors(1 / 8, g, u, extent, centre), _errors(1 / 16, g, u, extent, centre)
    for key in coarse:
        if coarse[key] < 1e-6:
            # exact for this polynomial up to the oracle's own error
            assert fine[key] < 1e-5, key
            continue
        assert 3.5 <= coarse[key] / fine[key] <= 4.5, (key, coarse[key], fine[key])


def test_affine_exactness():
    rng = np.random.default_rng(2)
    g = grp.engel()
    grid = box(g, 1.0, 0.25)
    c = rng.normal(size=4)
    f = sample(grid, lambda p: p @ c + 0.7, far_field=None)
    pts = grid.points()
    for i in range(4):
        exact = grp.left_vf_coeffs(g, i, pts) @ c
        np.testing.assert_allclose(apply_vf(f, g, i).values, exact, atol=1e-13)


def test_second_derivative_symmetric_bitwise():
    g = grp.engel()
    grid = box(g, 1.0, 0.25)
    f = sample(grid, lambda p: np.sin(p.sum(axis=-1)) * p[..., 3] + p[..., 0] ** 3, far_field=None)
    for i in range(4):
        for j in range(4):
            assert np.array_equal(second_derivative(f, g, i, j).values, second_derivative(f, g, j, i).values)


def test_far_field_consistency():
    grid = box(H1, 1.0, 0.125)
    pts = grid.points()
    r2 = np.sum(pts ** 2, axis=-1)
    vals = np.where(r2 < 0.5, np.cos(r2) - np.cos(0.5), 0.0) + 2.0
    f = ScalarField(grid, vals, 2.0)
    assert f.boundary_mismatch(2) == 0.0
    shell = np.ones(grid.shape, dtype=bool)
    shell[grid.interior(1)] = False
    for i in range(3):
        assert np.all(apply_vf(f, H1, i).values[shell] == 0.0)
        for j in range(3):
            assert np.all(second_derivative(f, H1, i, j).values[shell] == 0.0)


def test_euclidean_derivatives_shapes():
    grid = box(H1, 1.0, 0.25)
    f = sample(grid, lambda p: p[..., 0] * p[..., 1], far_field=None)
    grad, hess = euclidean_derivatives(f)
    assert len(grad) == 3 and hess[0][1] is hess[1][0]
    np.testing.assert_allclose(hess[0][1], 1.0, atol=1e-12)


def test_frame_tables_bound():
    grid = box(H1, 2.0, 0.5)
    # |a_13| = |x_2|/2 reaches 1 at the box edge
    assert frame_tables(grid, H1, 1.0).coeff_bound == pytest.approx(1.0)


def test_interpolate_linear():
    grid = box(H1, 1.0, 0.25)
    f = sample(grid, lambda p: 2 * p[..., 0] - p[..., 2], far_field=None)
    pts = np.array([[0.1, 0.2, -0.33], [0.9, -0.9, 0.05]])
    np.testing.assert_allclose(interpolate(f, pts), 2 * pts[:, 0] - pts[:, 2], atol=1e-14)
