import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cmcf import barriers as bar
from cmcf import group as grp
from cmcf.curvature import horizontal_mean_curvature
from cmcf.fields import Grid, sample, second_derivative

H1 = grp.heisenberg(1)


# ---------------------------------------------------------------- cylinder

def test_cylinder_value():
    assert bar.cylinder_value(H1, [1, 0, 7], 0) == 0.5
    x = np.array([0.3, -0.2, 1.0])
    assert bar.cylinder_value(H1, x, 0.25) - bar.cylinder_value(H1, x, 0.0) == pytest.approx(0.25)
    h2 = grp.heisenberg(2)
    assert bar.cylinder_value(h2, np.zeros(5), 1.0) == 3.0
    with pytest.raises(bar.BarrierError):
        bar.cylinder_value(grp.euclidean(1), [1.0], 0)


def test_extinction_time():
    assert bar.extinction_time(1, 2) == 0.5
    assert bar.extinction_time(2, 2) == 2.0
    assert bar.extinction_time(1, 4) == pytest.approx(1 / 6)
    with pytest.raises(bar.BarrierError):
        bar.extinction_time(1, 1)
    with pytest.raises(bar.BarrierError):
        bar.extinction_time(0, 2)


@given(R0=st.floats(0.1, 3), frac=st.floats(0, 0.99))
def test_cylinder_level_set_radius(R0, frac):
    t = frac * bar.extinction_time(R0, 2)
    r = bar.cylinder_radius(R0, 2, t)
    # points at radius r lie on the level R0^2/2 of u_0(., t)
    x = np.array([r * math.cos(1.0), r * math.sin(1.0), 0.4])
    assert bar.cylinder_value(H1, x, t) == pytest.approx(0.5 * R0 * R0, rel=1e-12)


def test_cylinder_solves_flow_exactly():
    grid = Grid.from_extent((-1.5,) * 3, (1.5,) * 3, 0.25)
    f = sample(grid, lambda p: bar.cylinder_value(H1, p, 0.0), far_field=None)
    k, mask = horizontal_mean_curvature(f, H1)
    core = np.zeros(grid.shape, dtype=bool)
    core[grid.interior(1)] = True
    off = core & ~mask.flags
    # K_0 |grad_0 u| = m - 1 = dt u_0
    norm = np.linalg.norm(grid.points()[..., :2], axis=-1)
    np.testing.assert_allclose((k * norm)[off], 1.0, atol=1e-12)


# ------------------------------------------------------------------ planes

def test_plane_gradient_heisenberg():
    b = bar.plane_values(H1, 2)
    x = np.array([0.8, -0.6, 2.0])
    np.testing.assert_allclose(b.horizontal_gradient(x), [0.3, 0.4], atol=1e-15)


def test_plane_euclidean():
    g = grp.euclidean(3)
    b = bar.plane_values(g, 1)
    np.testing.assert_array_equal(b.horizontal_gradient(np.array([1.0, 2.0, 3.0])), [0, 1, 0])
    grid = Grid.from_extent((-1,) * 3, (1,) * 3, 0.25)
    f = sample(grid, lambda p: b.value(p), far_field=None)
    k, mask = horizontal_mean_curvature(f, g)
    assert not mask.flags.any()
    np.testing.assert_array_equal(k, 0.0)


def test_plane_rejections():
    with pytest.raises(bar.BarrierError, match="Engel|degree 3"):
        bar.plane_values(grp.engel(), 3)
    bar.plane_values(grp.engel(), 2)
    with pytest.raises(bar.BarrierError):
        bar.Barrier("plane", H1, None)
    with pytest.raises(bar.BarrierError):
        bar.Barrier("sphere", H1)
    with pytest.raises(bar.BarrierError):
        bar.Barrier("cylinder", grp.euclidean(1))


@pytest.mark.parametrize("name,k", [("heisenberg:1", 2), ("heisenberg:2", 4), ("engel", 2)])
def test_plane_symmetric_part_vanishes(name, k):
    g = grp.preset(name)
    grid = Grid.from_extent((-1,) * g.n, (1,) * g.n, 0.25)
    f = sample(grid, lambda p: p[..., k], far_field=None)
    for i in range(g.m):
        for j in range(g.m):
            np.testing.assert_allclose(second_derivative(f, g, i, j).values, 0.0, atol=1e-13)


def test_squared_plane_subcaloric():
    # sum_i X_i^2 (x_k^2) = 2 sum_i (X_i x_k)^2 >= 0
    grid = Grid.from_extent((-1,) * 3, (1,) * 3, 0.125)
    f = sample(grid, lambda p: p[..., 2] ** 2, far_field=None)
    lap = sum(second_derivative(f, H1, i, i).values for i in range(2))
    pts = grid.points()
    core = grid.interior(1)
    np.testing.assert_allclose(lap[core], 2 * 0.25 * (pts[..., 0] ** 2 + pts[..., 1] ** 2)[core], atol=1e-12)
    assert np.all(lap[core] >= -1e-12)


# --------------------------------------------------------------------- psi

def test_psi_values():
    assert bar.psi(0.0) == -8.0 and bar.psi_prime(0.0) == 12.0 and bar.psi_second(0.0) == -12.0
    assert bar.psi(2.0) == 0.0 and bar.psi_prime(2.0) == 0.0 and bar.psi_second(2.0) == 0.0
    assert bar.psi(0.5) == -3.375
    with pytest.raises(bar.BarrierError):
        bar.psi(-0.1)


@given(s=st.floats(0, 10))
def test_psi_structure(s):
    p, dp, d2p = float(bar.psi(s)), float(bar.psi_prime(s)), float(bar.psi_second(s))
    assert -8.0 <= p <= 0.0 and dp >= 0.0
    assert abs(d2p) <= bar.PSI_C1 * math.sqrt(dp) + 1e-12
    assert bar.PSI_C1 * math.sqrt(dp) <= bar.PSI_C2 + 1e-12


def test_psi_derivatives_match_differences():
    s = np.linspace(0.05, 3.0, 60)
    d = 1e-6
    np.testing.assert_allclose(bar.psi_prime(s), (bar.psi(s + d) - bar.psi(s - d)) / (2 * d), atol=1e-6)
    np.testing.assert_allclose(bar.psi_second(s), (bar.psi_prime(s + d) - bar.psi_prime(s - d)) / (2 * d), atol=1e-5)


# ----------------------------------------------------------------- barrier w

def test_barrier_w_examples():
    far = np.array([2.0, 0.5, 1.0])
    assert bar.barrier_w(H1, "cylinder", 0.1, 5.0, far, 0.0) == 0.0
    inner = np.array([[0.0, 0.0, 3.0], [0.6, 0.8, -1.0], [0.3, 0.1, 0.0]])
    assert np.all(bar.barrier_w(H1, "cylinder", 0.1, 5.0, inner, 0.0) <= -1.0)
    assert bar.barrier_w(H1, "cylinder", 0.1, 5.0, [1, 0, 0], 0.0) == -3.375
    x = np.array([3.0, 0.0, 0.0])
    slope = bar.barrier_w(H1, "cylinder", 0.1, 5.0, x, 1.0) - bar.barrier_w(H1, "cylinder", 0.1, 5.0, x, 0.0)
    assert slope == pytest.approx(-5.0 * math.sqrt(0.1))


def test_barrier_w_errors():
    with pytest.raises(bar.BarrierError):
        bar.barrier_w(H1, "plane:2", 0.1, 1.0, [0, 0, 0], 0)
    with pytest.raises(bar.BarrierError):
        bar.barrier_w(H1, "cylinder", 0.0, 1.0, [0, 0, 0], 0)
    with pytest.raises(bar.BarrierError):
        bar.barrier_w(H1, "cylinder", 0.1, 0.0, [0, 0, 0], 0)
    with pytest.raises(bar.BarrierError):
        bar.barrier_w(H1, "torus", 0.1, 1.0, [0, 0, 0], 0)


# ------------------------------------------------------------ lemma numerics

GRID3 = Grid.from_extent((-3,) * 3, (3,) * 3, 0.125)


@pytest.mark.parametrize("kind", ["cylinder", "plane_squared:2"])
def test_subsolution_residual_after_calibration(kind):
    C0 = bar.calibrate_c0(H1, kind, 0.1, 1e-3, GRID3)
    assert C0 > 0
    rep = bar.barrier_subsolution_residual(H1, kind, 0.1, 1e-3, C0, GRID3)
    assert rep.analytic_residual <= 0.0
    assert rep.passed, rep
    # reruns give the same constant
    assert bar.calibrate_c0(H1, kind, 0.1, 1e-3, GRID3) == C0


def test_residual_constant_region():
    C0 = 7.0
    r = bar.raw_residual(H1, "cylinder", 0.1, 1e-3, GRID3)
    pts = GRID3.points()
    far = np.linalg.norm(pts[..., :2], axis=-1) > 2.0 + 2 * GRID3.hmax
    far &= ~np.isnan(r)
    # psi(u_0) is identically 0 there: the residual is exactly -C0 sqrt(delta)
    np.testing.assert_array_equal(r[far], 0.0)
    rep = bar.barrier_subsolution_residual(H1, "cylinder", 0.1, 1e-3, C0, GRID3)
    assert (r[far] - C0 * math.sqrt(0.1)).max() == pytest.approx(-C0 * math.sqrt(0.1))
    assert rep.residual >= -C0 * math.sqrt(0.1)


def test_residual_rejects_large_eps():
    with pytest.raises(bar.BarrierError):
        bar.barrier_subsolution_residual(H1, "cylinder", 0.1, 0.01, 1.0, GRID3)
    with pytest.raises(bar.BarrierError):
        bar.raw_residual(H1, "plane:2", 0.1, 1e-3, GRID3)


def test_small_c0_fails():
    rep = bar.barrier_subsolution_residual(H1, "cylinder", 0.1, 1e-3, 1e-3, GRID3)
    assert not rep.passed and rep.residual > rep.slack
