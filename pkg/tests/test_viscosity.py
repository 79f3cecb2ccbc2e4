import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cmcf import group as grp
from cmcf.fields import Grid, ScalarField, sample
from cmcf.viscosity import (JetSample, brute_force_convolution, convergence_to_base, data_jet_family,
                            degenerate_branch_bound, inf_convolution, kernel_semiconvexity, quadratic_family,
                            semiconvexity_modulus, sup_convolution, viscosity_residual_check)

H1 = grp.heisenberg(1)
E1 = grp.euclidean(1)


def random_lipschitz(grid, rng, lip=1.0):
    """Piecewise linear field: lip-Lipschitz in the Euclidean sense by construction."""
    pts = grid.points()
    planes = [rng.normal(size=grid.ndim) for _ in range(4)]
    planes = [lip * p / np.linalg.norm(p) for p in planes]
    offs = rng.uniform(-0.5, 0.5, 4)
    vals = np.min([pts @ p + o for p, o in zip(planes, offs)], axis=0)
    return ScalarField(grid, vals, None)


# ------------------------------------------------------------ convolutions

def test_toy_sup_convolution():
    grid = Grid((5,), (1.0,), (0.0,))
    f = ScalarField(grid, np.array([0.0, 0.0, 1.0, 0.0, 0.0]), None)
    out = sup_convolution(f, E1, 1.0).values
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0, 0.5, 0.0])
    np.testing.assert_array_equal(out, brute_force_convolution(f, E1, 1.0))
    inf = inf_convolution(f.with_values(-f.values), E1, 1.0).values
    np.testing.assert_array_equal(inf, -out)


def test_constant_field_fixed():
    grid = Grid.from_extent((-1,) * 3, (1,) * 3, 0.25)
    f = ScalarField(grid, np.full(grid.shape, 2.5), 2.5)
    for mu in (0.01, 1.0, 10.0):
        assert np.array_equal(sup_convolution(f, H1, mu).values, f.values)
        assert np.array_equal(inf_convolution(f, H1, mu).values, f.values)


def test_mu_must_be_positive():
    grid = Grid((5,), (1.0,), (0.0,))
    f = ScalarField(grid, np.zeros(5), None)
    with pytest.raises(ValueError):
        sup_convolution(f, E1, 0.0)
    with pytest.raises(ValueError):
        brute_force_convolution(f, E1, -1.0)


SMALL = Grid.from_extent((-1,) * 3, (1,) * 3, 0.25)  # 729 nodes


@settings(max_examples=8)
@given(seed=st.integers(0, 2 ** 32 - 1), mu=st.floats(0.01, 2.0))
def test_ordering_and_window_equivalence(seed, mu):
    rng = np.random.default_rng(seed)
    f = ScalarField(SMALL, rng.uniform(-1, 1, SMALL.shape), None)
    sup = sup_convolution(f, H1, mu).values
    inf = inf_convolution(f, H1, mu).values
    assert np.all(inf <= f.values) and np.all(f.values <= sup)
    assert np.array_equal(sup, brute_force_convolution(f, H1, mu, "sup"))
    assert np.array_equal(inf, brute_force_convolution(f, H1, mu, "inf"))


def test_window_equivalence_engel():
    grid = Grid.from_extent((-0.5,) * 4, (0.5,) * 4, 0.25)  # 625 nodes
    g = grp.engel()
    f = ScalarField(grid, np.random.default_rng(4).uniform(-1, 1, grid.shape), None)
    for mu in (0.05, 0.5):
        assert np.array_equal(sup_convolution(f, g, mu).values, brute_force_convolution(f, g, mu, "sup"))


@settings(max_examples=8)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_mu_monotonicity(seed):
    rng = np.random.default_rng(seed)
    f = ScalarField(SMALL, rng.uniform(-1, 1, SMALL.shape), None)
    mus = [0.02, 0.1, 0.5, 2.0]
    sups = [sup_convolution(f, H1, mu).values for mu in mus]
    infs = [inf_convolution(f, H1, mu).values for mu in mus]
    for a, b in zip(sups, sups[1:]):
        assert np.all(a <= b)
    for a, b in zip(infs, infs[1:]):
        assert np.all(a >= b)


# ------------------------------------------------------------ semiconvexity

def test_semiconvexity_examples():
    grid = Grid.from_extent((-1,) * 3, (1,) * 3, 0.125)
    convex = sample(grid, lambda p: np.sum(p * p, axis=-1) + p[..., 0] * p[..., 1], far_field=None)
    assert semiconvexity_modulus(convex) >= -1e-10
    concave = sample(grid, lambda p: -np.sum(p * p, axis=-1), far_field=None)
    assert semiconvexity_modulus(concave) == pytest.approx(-2.0, abs=1e-10)


def test_sup_convolution_semiconvex_uniformly():
    grid = Grid.from_extent((-1,) * 3, (1,) * 3, 0.25)
    mu = 0.5
    rng = np.random.default_rng(11)
    mods = []
    osc = 0.0
    for _ in range(8):
        f = random_lipschitz(grid, rng)
        osc = max(osc, float(np.ptp(f.values)))
        mods.append(semiconvexity_modulus(sup_convolution(f, H1, mu).as_field()))
    bound = kernel_semiconvexity(H1, grid, mu, osc)
    assert min(mods) >= bound - 1e-9
    assert np.isfinite(bound)


# -------------------------------------------------------------- convergence

def test_convergence_to_base():
    grid = Grid.from_extent((-1,) * 3, (1,) * 3, 0.25)
    f = random_lipschitz(grid, np.random.default_rng(2))
    rep = convergence_to_base(f, H1, [1.0, 0.1, 0.01])
    assert rep.monotone and rep.sup_norms[0] > rep.sup_norms[-1]
    assert max(rep.sup_norms) <= np.ptp(f.values)
    const = ScalarField(grid, np.zeros(grid.shape), 0.0)
    assert convergence_to_base(const, H1, [1.0, 0.1, 0.01]).sup_norms == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        convergence_to_base(f, H1, [0.1, 1.0])


# ------------------------------------------------------- degenerate branch

def test_degenerate_branch_examples():
    assert degenerate_branch_bound(np.eye(2), "sub") == 2.0
    assert degenerate_branch_bound(np.diag([1.0, -1.0]), "sub") == 1.0
    assert degenerate_branch_bound(np.zeros((2, 2)), "sub") == 0.0
    assert degenerate_branch_bound(np.zeros((2, 2)), "super") == 0.0
    assert degenerate_branch_bound(np.eye(2), "super") == 1.0
    with pytest.raises(ValueError):
        degenerate_branch_bound([[0, 1], [0, 0]], "sub")
    with pytest.raises(ValueError):
        degenerate_branch_bound(np.eye(2), "both")


def _ball_samples(m, count, rng):
    p = rng.normal(size=(count, m))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    r = rng.uniform(0, 1, count) ** (1 / m)
    # include the centre and the sphere, where the extrema sit
    return np.vstack([np.zeros(m), p, p * r[:, None]])


@pytest.mark.parametrize("m", [2, 3])
def test_degenerate_branch_brute_force(m):
    rng = np.random.default_rng(m)
    P = _ball_samples(m, 10 ** 4, rng)
    for _ in range(10):
        A = rng.normal(size=(m, m))
        R = A + A.T
        vals = np.trace(R) - np.einsum("pi,ij,pj->p", P, R, P)
        scale = np.abs(R).max()
        # exact bounds dominate every sample and are attained up to sampling resolution
        assert vals.max() - 1e-12 <= degenerate_branch_bound(R, "sub") <= vals.max() + 0.02 * scale
        assert vals.min() - 0.02 * scale <= degenerate_branch_bound(R, "super") <= vals.min() + 1e-12


@given(R=arrays(np.float64, (3, 3), elements=st.floats(-10, 10)))
def test_degenerate_branch_sides_ordered(R):
    S = R + R.T
    assert degenerate_branch_bound(S, "super") <= degenerate_branch_bound(S, "sub") + 1e-9


def test_jet_sample_symmetry():
    JetSample((0, 0), np.zeros(3), 0.0, np.eye(2))
    with pytest.raises(ValueError):
        JetSample((0, 0), np.zeros(3), 0.0, [[0, 1], [0, 0]])


# ---------------------------------------------------------- residual checks

VGRID = Grid.from_extent((-1,) * 3, (1,) * 3, 0.125)
VTIMES = np.linspace(0.0, 0.2, 11)
CENTERS = list(itertools.product([-0.5, 0.25, 0.5], [-0.5, 0.0, 0.5], [-0.25, 0.25]))


def cylinder_trajectory(rate):
    return [sample(VGRID, lambda p: 0.5 * (p[..., 0] ** 2 + p[..., 1] ** 2) + rate * t, None, t) for t in VTIMES]


def cylinder_family(side):
    diag, ct = ((1.5, 1.5, 0.5), 20.0) if side == "sub" else ((0.5, 0.5, -0.5), -20.0)
    return quadratic_family(CENTERS, [0.1], [1.0, 3.0], ct, lambda x: np.array([x[0], x[1], 0.0]), diag)


@pytest.mark.parametrize("side", ["sub", "super"])
def test_exact_cylinder_passes(side):
    h = VGRID.hmax
    rep = viscosity_residual_check(cylinder_trajectory(1.0), H1, cylinder_family(side), h, side, 5 * h * h)
    assert rep.touching > 0 and rep.passed


def test_defect_flagged_with_witness():
    h = VGRID.hmax
    rep = viscosity_residual_check(cylinder_trajectory(3.0), H1, cylinder_family("sub"), h, "sub", 5 * h * h)
    assert not rep.passed
    w = rep.witness
    assert w.violation == rep.worst > 1.0
    assert w.branch == "curvature" and 0.0 < w.t < 0.2
    assert all(abs(c) < 1.0 for c in w.location)


def test_constant_trajectory_degenerate_branch():
    traj = [ScalarField(VGRID, np.zeros(VGRID.shape), 0.0, t) for t in VTIMES]
    x0 = (0.25, -0.25, 0.0)
    # u - phi = -|x - x0|^2/2 - (t - t0)^2/2 peaks at (x0, t0) where grad_0 phi = 0
    fam = quadratic_family([x0], [0.1], [0.0], 1.0, lambda x: np.zeros(3), (1.0, 1.0, 1.0))
    rep = viscosity_residual_check(traj, H1, fam, VGRID.hmax, "sub", 1e-12)
    assert rep.touching == 1 and rep.passed
    assert rep.witness.branch == "degenerate"
    assert rep.witness.location == pytest.approx(x0)


def test_report_csv(tmp_path):
    h = VGRID.hmax
    rep = viscosity_residual_check(cylinder_trajectory(1.0), H1, cylinder_family("sub"), h, "sub", 5 * h * h)
    rep.write(tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "kind,location,t,violation,branch" and len(lines) == 1 + rep.touching


def test_residual_check_errors():
    traj = cylinder_trajectory(1.0)
    with pytest.raises(ValueError):
        viscosity_residual_check(traj, H1, [], 0.1, "sub", 0.1)
    with pytest.raises(ValueError):
        viscosity_residual_check(traj[:2], H1, cylinder_family("sub"), 0.1, "sub", 0.1)
    with pytest.raises(ValueError):
        viscosity_residual_check(traj, H1, cylinder_family("sub"), 0.1, "middle", 0.1)


def test_data_jet_family_touches_at_centres():
    traj = cylinder_trajectory(1.0)
    fam = data_jet_family(traj, [(0.5, 0.25, 0.0)], [0.1], [0.5], 20.0, "sub")
    assert len(fam) == 1 and fam[0].t0 == pytest.approx(0.1)
    rep = viscosity_residual_check(traj, H1, fam, VGRID.hmax, "sub", 1e-9)
    assert rep.touching == 1 and rep.witness.location == pytest.approx((0.5, 0.25, 0.0))
    assert rep.passed
    with pytest.raises(ValueError):
        data_jet_family(traj, [(0.51, 0.25, 0.0)], [0.1], [0.5], 20.0, "sub")
