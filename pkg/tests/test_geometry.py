"""Model geometries, closed-form and numeric backward flows, curvature."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from lgeom.errors import BlowUp, GridTooCoarse, InvalidGeometry, OutOfDomain
from lgeom.geometry import (
    ClosedFormFlow,
    CylinderMetric,
    EuclideanSpace,
    FlatMetric,
    NumericGridFlow,
    RoundCylinder,
    RoundSphere,
    SpacetimePoint,
    SphereMetric,
    WarpedMetric,
    WarpedProduct,
    ball_volume,
    evolve,
    flow_residual,
    grid_d1,
    grid_d2,
    ricci_tensor,
    riemann_sup_norm,
    sphere_area,
    volume_measure,
)

taus = st.floats(0.0, 5.0)


# -- constructors and charts --------------------------------------------------


@pytest.mark.parametrize(
    "make",
    [
        lambda: EuclideanSpace(1),
        lambda: RoundSphere(1),
        lambda: RoundSphere(2, -1.0),
        lambda: RoundCylinder(2),
        lambda: WarpedProduct(3, [0, 1, 2, 3], [1, 1, 0, 1]),
        lambda: WarpedProduct(3, [0, 2, 1, 3], [1, 1, 1, 1]),
    ],
)
def test_invalid_geometry(make):
    with pytest.raises(InvalidGeometry):
        make()


def test_warped_too_coarse():
    with pytest.raises(GridTooCoarse):
        WarpedProduct(3, [0, 1, 2], [1, 1, 1])


def test_constants():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)


@given(st.floats(0, math.pi), st.floats(0, math.pi))
def test_sphere_chart_angle_is_polar_distance(a, b):
    S = RoundSphere(3)
    base, target = S.point(a), S.point(b)
    _, t = S.chart_pair(base, target)
    assert t[0] == pytest.approx(abs(a - b), abs=1e-9)
    _, back = S.chart_pair(target, base)
    assert back[0] == pytest.approx(t[0], abs=1e-12)


def test_points_validated():
    with pytest.raises(OutOfDomain):
        RoundSphere(2).chart_pair((1.0, 0.0, 0.0), (2.0, 0.0, 0.0))
    W = WarpedProduct.cylinder_profile(half_length=2.0, nodes=9)
    with pytest.raises(OutOfDomain):
        W.validate_point(W.point(3.0))
    with pytest.raises(OutOfDomain):
        SpacetimePoint((0.0, 0.0), -1.0)


# -- closed forms ---------------------------------------------------------------


@given(taus)
def test_sphere_radius_law(tau):
    flow = ClosedFormFlow(RoundSphere(2, 1.0), 5.0)
    assert flow.snapshot(tau).c == pytest.approx(1 + 2 * tau)
    n3 = ClosedFormFlow(RoundSphere(3, 2.0), 5.0)
    assert n3.snapshot(tau).c == pytest.approx(4 + 4 * tau)


@given(taus)
def test_cylinder_radius_law(tau):
    flow = ClosedFormFlow(RoundCylinder(3, 1.0), 5.0)
    snap = flow.snapshot(tau)
    assert snap.c_s == pytest.approx(1 + 2 * tau)
    assert snap.c_l == 1.0


def test_flat_is_static():
    flow = ClosedFormFlow(EuclideanSpace(3), 2.0)
    assert flow.snapshot(1.5) == FlatMetric(3, 1.0)
    assert riemann_sup_norm(flow, 1.0) == 0.0


@pytest.mark.parametrize(
    "geometry", [EuclideanSpace(3), RoundSphere(2), RoundSphere(4, 0.5), RoundCylinder(3), RoundCylinder(5, 2.0)]
)
def test_closed_forms_solve_the_flow(geometry):
    assert flow_residual(ClosedFormFlow(geometry, 3.0)) < 1e-8


def test_curvature_norm_convention():
    assert SphereMetric(2, 1.0).rm_sup() == pytest.approx(1.0)
    # three sectional planes of curvature 1/c on S^3
    assert SphereMetric(3, 2.0).rm_sup() == pytest.approx(math.sqrt(3) / 2)
    assert CylinderMetric(3, 3.0).rm_sup() == pytest.approx(1 / 3)


def test_ricci_tensor_frames():
    sph = ClosedFormFlow(RoundSphere(2), 2.0)
    ric = ricci_tensor(sph, SpacetimePoint(RoundSphere(2).point(0.4), 1.0))
    np.testing.assert_allclose(ric, np.eye(2) / 3)
    cyl = ClosedFormFlow(RoundCylinder(3), 2.0)
    ric = ricci_tensor(cyl, SpacetimePoint(RoundCylinder(3).point(0.0, 1.0), 1.0))
    np.testing.assert_allclose(np.diag(ric), [0.0, 1 / 3, 1 / 3])


def test_scalar_curvature_scaling():
    for snap in (SphereMetric(3, 2.0), CylinderMetric(4, 1.5, 0.7)):
        assert snap.scaled(3.0).scalar_curvature() == pytest.approx(snap.scalar_curvature() / 3.0)


def test_out_of_domain_tau():
    flow = ClosedFormFlow(RoundSphere(2), 1.0)
    with pytest.raises(OutOfDomain):
        flow.snapshot(1.5)
    with pytest.raises(OutOfDomain):
        flow.snapshot(-0.1)


# -- volume densities against quadrature oracles ---------------------------------


def test_sphere_volume_density_integrates_to_area():
    snap = SphereMetric(3, 2.0)
    val, _ = integrate.quad(snap.volume_density, 0, math.pi)
    assert val == pytest.approx(sphere_area(3) * 2.0**1.5, rel=1e-10)


def test_cylinder_cross_section():
    snap = CylinderMetric(3, 2.0, 4.0)
    val, _ = integrate.quad(lambda t: snap.volume_density(t), 0, math.pi)
    # density per unit chart x; axial length element sqrt(c_l) = 2
    assert val == pytest.approx(snap.cross_section_area() * 2.0, rel=1e-10)


def test_flat_density():
    dens = volume_measure(ClosedFormFlow(EuclideanSpace(3), 1.0), 0.5)
    val, _ = integrate.quad(dens, 0, 1.0)
    assert val == pytest.approx(ball_volume(3))


# -- finite differences and the warped flow ---------------------------------------


def test_grid_derivatives_exact_on_quadratics():
    x = np.linspace(-1, 1, 11)
    f = 3 * x**2 - x
    np.testing.assert_allclose(grid_d1(x, f)[1:-1], (6 * x - 1)[1:-1], atol=1e-12)
    np.testing.assert_allclose(grid_d2(x, f)[1:-1], 6.0, atol=1e-9)
    xn = np.sort(np.concatenate([x, [0.05, 0.3]]))
    np.testing.assert_allclose(grid_d2(xn, 3 * xn**2)[1:-1], 6.0, atol=1e-8)


def test_warped_round_sphere_curvature():
    """w = sin(rho) on (0, pi) is the unit 3-sphere: both curvatures equal 1."""
    rho = np.linspace(0.5, 2.5, 401)
    snap = WarpedMetric(3, rho, np.ones_like(rho), np.sin(rho) ** 2)
    # ends use a Neumann closure, so only interior nodes are second-order accurate
    np.testing.assert_allclose(snap.k_rad[1:-1], 1.0, atol=1e-4)
    np.testing.assert_allclose(snap.k_tan[1:-1], 1.0, atol=1e-4)
    np.testing.assert_allclose(snap.R[1:-1], 6.0, atol=1e-3)


def test_warped_cylinder_matches_closed_form():
    geometry = WarpedProduct.cylinder_profile(3, 1.0, 4.0, 41)
    flow = evolve(geometry, 1.0, 0.1)
    assert isinstance(flow, NumericGridFlow)
    exact = ClosedFormFlow(RoundCylinder(3), 1.0)
    for tau in (0.0, 0.37, 1.0):
        snap = flow.snapshot(tau)
        np.testing.assert_allclose(snap.u, exact.snapshot(tau).c_s, rtol=1e-10)
        np.testing.assert_allclose(snap.v, 1.0, atol=1e-12)
        assert snap.rm_sup() == pytest.approx(exact.snapshot(tau).rm_sup(), rel=1e-8)
    assert flow_residual(flow) < 1e-6
    a, _, R, _ = flow.chart_fields(np.array([[0.3, 1.0]]), np.array([0.5]))
    assert a[0, 1] == pytest.approx(2.0) and R[0] == pytest.approx(1.0)


def test_warped_outside_grid():
    geometry = WarpedProduct.cylinder_profile(3, 1.0, 2.0, 21)
    flow = evolve(geometry, 0.5, 0.1)
    with pytest.raises(OutOfDomain):
        flow.chart_fields(np.array([[2.5, 0.0]]), np.array([0.1]))


def test_blow_up_ceiling():
    with pytest.raises(BlowUp):
        evolve(RoundSphere(2, 1e-4), 1.0, 0.1)


def test_evolve_rejects_bad_times():
    with pytest.raises(InvalidGeometry):
        evolve(RoundSphere(2), -1.0, 0.1)
