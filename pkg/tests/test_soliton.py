"""Shrinker residuals, potential fits, the F-functional and probes."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial
from scipy import integrate

from lgeom import breather as bl
from lgeom.errors import GridTooCoarse, IllConditioned, OutOfDomain, TailNotNegligible, Unsupported
from lgeom.geometry import (
    ClosedFormFlow,
    CylinderMetric,
    EuclideanSpace,
    FlatMetric,
    RoundCylinder,
    RoundSphere,
    SphereMetric,
    WarpedMetric,
    WarpedProduct,
    ball_volume,
    evolve,
)
from lgeom.soliton import (
    f_functional,
    fit_potential,
    injectivity_floor,
    injectivity_radius,
    noncollapse_probe,
    profile_grid,
    shrinker_residual,
    soliton_tensor,
)

GAUSS = Polynomial([0.0, 0.0, 0.25])


# -- shrinker residual ------------------------------------------------------------


def test_gaussian_shrinker():
    rep = shrinker_residual(FlatMetric(3), GAUSS)
    assert rep.sup < 1e-14 and rep.l2 < 1e-14


def test_flat_zero_potential():
    rep = shrinker_residual(FlatMetric(3), 0.0)
    assert rep.sup == pytest.approx(0.5)
    # every grid point carries sqrt(3 * 1/4)
    assert rep.l2 == pytest.approx(math.sqrt(3) / 2)


def test_normalized_cylinder_shrinker():
    rep = shrinker_residual(CylinderMetric(3, 2.0, 1.0), GAUSS)
    assert rep.sup <= 1e-6


def test_einstein_sphere():
    assert shrinker_residual(SphereMetric(2, 2.0), 0.0).sup < 1e-14
    assert shrinker_residual(SphereMetric(4, 6.0), 3.0).sup < 1e-14


def test_sampled_potential_uses_differences():
    snap = FlatMetric(3)
    xi = profile_grid(snap)
    rep = shrinker_residual(snap, xi**2 / 4, grid=xi)
    assert rep.sup < 1e-9
    with pytest.raises(GridTooCoarse):
        shrinker_residual(snap, np.zeros(3), grid=np.array([1.0, 2.0, 3.0]))
    with pytest.raises(GridTooCoarse):
        shrinker_residual(snap, np.zeros(5))


def test_warped_cylinder_residual_matches_closed_form():
    geometry = WarpedProduct.cylinder_profile(3, math.sqrt(2.0), 6.0, 121)
    snap = WarpedMetric.from_geometry(geometry)
    rep = shrinker_residual(snap, GAUSS)
    assert rep.sup < 1e-10


@given(st.floats(-50, 50))
def test_gauge_invariance(c):
    for snap, f in ((SphereMetric(3, 1.7), Polynomial([0, 0.1, 0.3])), (FlatMetric(2), GAUSS)):
        a = shrinker_residual(snap, f)
        b = shrinker_residual(snap, f + c)
        np.testing.assert_allclose(a.entries, b.entries, atol=1e-10)


@given(st.floats(0.1, 10.0))
def test_scaling_law(k):
    """Ric and Hess f are unchanged as (0,2)-tensors under g -> k g."""
    f = Polynomial([0.0, 0.3, -0.2, 0.05])
    x = np.linspace(0.2, 2.8, 9)
    for snap in (FlatMetric(3, 1.3), SphereMetric(3, 0.8), CylinderMetric(4, 2.0, 0.5)):
        np.testing.assert_allclose(soliton_tensor(snap.scaled(k), f, x), soliton_tensor(snap, f, x), atol=1e-12)
    rho = np.linspace(0.5, 2.5, 41)
    W = WarpedMetric(3, rho, 1 + 0.1 * rho**2, np.sin(rho) ** 2 + 0.5)
    np.testing.assert_allclose(soliton_tensor(W.scaled(k), f, rho[3:-3]), soliton_tensor(W, f, rho[3:-3]), atol=1e-9)


# -- potential fit --------------------------------------------------------------------------


def test_fit_recovers_gaussian():
    rep = fit_potential(FlatMetric(3))
    assert rep.sup <= 1e-8
    np.testing.assert_allclose(rep.coefficients, [0, 0, 0.25, 0, 0], atol=1e-10)


def test_fit_scaled_flat():
    rep = fit_potential(FlatMetric(3, 4.0))
    assert rep.sup <= 1e-8
    assert rep.coefficients[2] == pytest.approx(0.25)


def test_fit_einstein_sphere_constant():
    rep = fit_potential(SphereMetric(2, 2.0))
    assert rep.sup <= 1e-8
    np.testing.assert_allclose(rep.coefficients, 0.0, atol=1e-10)


def test_fit_no_worse_than_true_potential():
    for snap, truth in ((CylinderMetric(3, 2.3, 1.0), GAUSS), (FlatMetric(3), GAUSS), (SphereMetric(2, 1.5), 0.0)):
        assert fit_potential(snap).l2 <= shrinker_residual(snap, truth).l2 + 1e-12


def test_fit_ill_conditioned():
    with pytest.raises(IllConditioned):
        fit_potential(FlatMetric(3), grid=np.array([1.0]))
    with pytest.raises(IllConditioned):
        fit_potential(FlatMetric(3), grid=np.array([1.0, 1.0 + 1e-9, 1.0 + 2e-9]))


def test_rescaled_cylinder_fit_converges():
    spec = bl.cylinder_breather()
    flow = bl.build_ancient_flow(spec, 10)
    xs = bl.base_point_sequence(spec, spec.geometry.point(0.0, 1.0), 9)
    seq = bl.rescaled_sequence(flow, xs, range(9))
    sups = []
    for rf in seq:
        rep = fit_potential(rf.snapshot(1.0))
        sups.append(rep.sup)
        assert rep.coefficients[2] == pytest.approx(0.25, rel=1e-9)
        # only the sphere directions miss: 1/(2 + 1/tau_i) - 1/2
        assert rep.sup == pytest.approx(0.5 - 1 / (2 + 1 / rf.tau_i), rel=1e-9)
    assert all(b < a for a, b in zip(sups, sups[1:]))
    assert sups[8] <= 1e-3


def test_unsupported_snapshot():
    with pytest.raises(Unsupported):
        shrinker_residual(object(), 0.0)


# -- F-functional ---------------------------------------------------------------------------------


def _gauss_moment(p):
    val, _ = integrate.quad(lambda x: x**p * math.exp(-x * x / 4), -np.inf, np.inf)
    return val


@pytest.mark.parametrize("n", [2, 3, 4])
def test_f_functional_gaussian(n):
    """|grad f|^2 = sum x_j^2 / 4 integrates coordinate-wise to Gaussian moments."""
    oracle = n * (_gauss_moment(2) / 4) * _gauss_moment(0) ** (n - 1)
    assert f_functional(FlatMetric(n), GAUSS) == pytest.approx(oracle, rel=1e-10)


def test_f_functional_sphere():
    assert f_functional(SphereMetric(2, 1.0), 0.0) == pytest.approx(8 * math.pi, rel=1e-12)
    assert f_functional(SphereMetric(2, 4.0), 0.0) == pytest.approx(8 * math.pi, rel=1e-12)
    assert f_functional(SphereMetric(2, 1.0), 1.5) == pytest.approx(8 * math.pi * math.exp(-1.5), rel=1e-12)


def test_f_functional_cylinder():
    snap = CylinderMetric(3, 2.0, 1.0)
    # R = 1; int e^{-x^2/4} (x^2/4 + 1) dx = 3 sqrt(pi) over the cross-section 8 pi
    assert f_functional(snap, GAUSS) == pytest.approx(8 * math.pi * 3 * math.sqrt(math.pi), rel=1e-10)


def test_f_functional_warped_compact():
    rho = np.linspace(-3.0, 3.0, 61)
    W = WarpedMetric(3, rho, np.ones_like(rho), np.full_like(rho, 2.0))
    val = f_functional(W, 0.0)
    # R = 1, volume = length * area of the radius-sqrt(2) sphere
    assert val == pytest.approx(6.0 * 8 * math.pi, rel=1e-10)


def test_f_functional_tail():
    with pytest.raises(TailNotNegligible):
        f_functional(FlatMetric(3), GAUSS, cutoff=2.0)
    with pytest.raises(TailNotNegligible):
        f_functional(CylinderMetric(3, 2.0), 0.0)


def test_f_functional_needs_polynomial():
    with pytest.raises(Unsupported):
        f_functional(FlatMetric(2), np.zeros(4))


# -- probes ------------------------------------------------------------------------------------------


def test_noncollapse_flat():
    flow = ClosedFormFlow(EuclideanSpace(3), 2.0)
    probe = noncollapse_probe(flow, (1.0, 2.0, 3.0), 1.0, ball_volume(3) / 2)
    assert probe.verdict == "pass"
    assert probe.vol_ratio == pytest.approx(ball_volume(3))
    assert noncollapse_probe(flow, (0, 0, 0), 1.0, 5.0).verdict == "fail"


def test_noncollapse_sphere_vacuous():
    flow = ClosedFormFlow(RoundSphere(2), 200.0)
    probe = noncollapse_probe(flow, RoundSphere(2).point(0.0), 10.0, 0.1)
    assert probe.vacuous and probe.verdict == "vacuous-pass"
    # whole sphere of area 4 pi
    assert probe.vol_ratio == pytest.approx(4 * math.pi / 100)


def test_noncollapse_cylinder_small_ball():
    flow = ClosedFormFlow(RoundCylinder(3), 1.0)
    probe = noncollapse_probe(flow, RoundCylinder(3).point(), 0.1, 0.5)
    assert probe.vol_ratio == pytest.approx(ball_volume(3), rel=1e-2)
    # second-order volume expansion with R = 2
    assert probe.vol_ratio / ball_volume(3) - 1 == pytest.approx(-2 * 0.01 / 30, rel=1e-2)


def test_noncollapse_window_in_domain():
    flow = ClosedFormFlow(RoundCylinder(3), 1.0)
    with pytest.raises(OutOfDomain):
        noncollapse_probe(flow, None, 2.0, 0.1)


def test_noncollapse_warped_unsupported():
    flow = evolve(WarpedProduct.cylinder_profile(3, 1.0, 2.0, 21), 1.0, 0.1)
    with pytest.raises(Unsupported):
        noncollapse_probe(flow, None, 0.1, 0.1)


def test_injectivity_radius():
    assert injectivity_radius(FlatMetric(3)) == math.inf
    assert injectivity_radius(SphereMetric(2, 4.0)) == pytest.approx(2 * math.pi)
    assert injectivity_radius(CylinderMetric(3, 1.0)) == pytest.approx(math.pi)
    W = WarpedMetric.from_geometry(WarpedProduct.cylinder_profile())
    assert injectivity_radius(W) == pytest.approx(math.pi)
    with pytest.raises(Unsupported):
        injectivity_radius("not a metric")


def test_injectivity_floor_on_cylinder_sequence():
    spec = bl.cylinder_breather()
    flow = bl.build_ancient_flow(spec, 13)
    xs = bl.base_point_sequence(spec, spec.geometry.point(0.0, 1.0), 13)
    delta, radii = injectivity_floor(bl.rescaled_sequence(flow, xs, range(13)))
    np.testing.assert_allclose(radii, [math.pi * math.sqrt(2 + 1 / t) for t in flow.ladder.taus[:13]])
    assert delta > math.pi * math.sqrt(2)
