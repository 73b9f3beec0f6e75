import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parakernel import geometry, schrodinger
from parakernel.errors import BracketError, DegenerateInputError, NonParabolicError, ParakernelError
from parakernel.geometry import GridFunction, log_grid
from parakernel.potentials import Bump, PowerDecay, Zero


def band(values):
    values = np.asarray(values)
    return values.max() / values.min()


# ---------------------------------------------------------------- operator


def test_operator_kills_constants(plane):
    r = log_grid(0.1, 100, 16)
    res = schrodinger.apply_operator(plane, Zero(), GridFunction(r, np.ones_like(r))).values
    assert np.isnan(res[0]) and np.isnan(res[-1])
    np.testing.assert_allclose(res[1:-1], 0.0, atol=1e-14)


def test_operator_on_log_is_small(plane):
    r = log_grid(2.0, 100.0, 16)
    spacing = math.log(r[1] / r[0])
    res = schrodinger.apply_operator(plane, Zero(), GridFunction(r, np.log(r))).values
    assert np.nanmax(np.abs(res)) <= spacing**2


def test_operator_needs_three_nodes(plane):
    with pytest.raises(ValueError):
        schrodinger.apply_operator(plane, Zero(), GridFunction(np.array([1.0, 2.0]), np.ones(2)))


def test_profile_residual_converges_at_second_order(plane):
    q = Bump(2.0, 1.0, 1.0)
    prof = schrodinger.solve_profile(plane, q)
    errs = []
    for pd in (128, 256, 512):
        r = log_grid(0.5, 10.0, pd)
        errs.append(np.nanmax(np.abs(schrodinger.apply_operator(plane, q, GridFunction(r, prof(r))).values)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


# ---------------------------------------------------------------- profiles


def test_zero_potential_profile_is_constant(plane):
    prof = schrodinger.solve_profile(plane, Zero())
    np.testing.assert_array_equal(prof.h, 1.0)
    np.testing.assert_array_equal(prof.flux, 0.0)


def test_harmonic_continuation_beyond_support(plane):
    prof = schrodinger.solve_profile(plane, Bump(2.0, 1.0, 1.0))
    h3 = float(prof(np.array([3.0]))[0])
    r = log_grid(3.0, 1e8, 4)
    expected = h3 + prof.terminal_flux / (2 * math.pi) * np.log(r / 3.0)
    np.testing.assert_allclose(prof(r), expected, rtol=1e-6)


def test_profile_tracks_big_h(plane):
    prof = schrodinger.solve_profile(plane, Bump(2.0, 1.0, 1.0))
    r = log_grid(1e2, 1e4, 8)
    assert band(prof(r) / plane.big_h(r)) <= 2.0


def test_profile_scales_with_initial_value(plane, small_bump):
    a = schrodinger.solve_profile(plane, small_bump)
    b = schrodinger.solve_profile(plane, small_bump, h0=3.0)
    np.testing.assert_allclose(b.h, 3.0 * a.h, rtol=1e-8)


def test_profile_argument_checks(plane):
    with pytest.raises(ValueError):
        schrodinger.solve_profile(plane, Zero(), r_max=0.5)
    with pytest.raises(ValueError):
        schrodinger.solve_profile(plane, Zero(), tol=0.0)


# ---------------------------------------------------------------- classification


def test_nonnegative_bump_is_subcritical(plane):
    assert schrodinger.classify(plane, Bump(2.0, 1.0, 1.0)).kind == schrodinger.SUBCRITICAL


def test_zero_potential_is_critical(plane):
    assert schrodinger.classify(plane, Zero()).kind == schrodinger.CRITICAL


def test_negative_bump_has_logarithmic_node(plane):
    W = -0.05 * Bump(2.0, 1.0, 1.0)
    cl = schrodinger.classify(plane, W)
    assert cl.kind == schrodinger.SUPERCRITICAL
    # beyond the support h(r) = h(3) - |a| log(r/3) / 2 pi
    prof = schrodinger.solve_profile(plane, W)
    h3 = float(prof(np.array([3.0]))[0])
    a = float(prof.flux_at(np.array([3.0]))[0])
    oracle = 3.0 * math.exp(2 * math.pi * h3 / abs(a))
    assert cl.node_radius == pytest.approx(oracle, rel=1e-6)


def test_node_beyond_horizon_is_extrapolated(plane):
    # the node sits near r = 1e15, far past r_max
    W = -0.01 * Bump(2.0, 1.0, 1.0)
    cl = schrodinger.classify(plane, W, r_max=1e6)
    assert cl.kind == schrodinger.SUPERCRITICAL
    assert cl.extrapolated and cl.node_radius > 1e6


def test_classify_requires_parabolic_base():
    with pytest.raises(NonParabolicError):
        schrodinger.classify(geometry.model_manifold(3, 0.9), Zero())


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.5, 3.0))
def test_nonnegative_bumps_are_subcritical(amplitude, center):
    g = geometry.flat_plane()
    assert schrodinger.classify(g, Bump(center, 0.5, amplitude)).kind == schrodinger.SUBCRITICAL


# ---------------------------------------------------------------- coupling


def test_coupling_degenerate_inputs(plane):
    q = Bump(2.0, 1.0, 1.0)
    with pytest.raises(DegenerateInputError):
        schrodinger.critical_coupling(plane, q, q, q, 0.0, 3.0)
    with pytest.raises(DegenerateInputError):
        schrodinger.critical_coupling(plane, q, q, 2 * q, 0.0, 3.0)


def test_coupling_bad_bracket(plane):
    q = Bump(2.0, 1.0, 1.0)
    with pytest.raises(BracketError):
        schrodinger.critical_coupling(plane, q, 2 * q, q, 0.0, 0.5, tol=0.1)
    with pytest.raises(ParakernelError):
        schrodinger.critical_coupling(plane, Zero(), 2 * q, q, 0.0, 3.0, tol=0.1)


def test_coupling_exact_family(plane):
    # Delta + (1 - c) q: critical exactly at c = 1
    q = Bump(2.0, 1.0, 1.0)
    res = schrodinger.critical_coupling(plane, q, 2 * q, q, 0.0, 3.0, tol=1e-2)
    assert abs(res.coupling - 1.0) <= 1e-2
    assert res.lower_evidence.kind == schrodinger.SUBCRITICAL
    assert res.upper_evidence.kind == schrodinger.SUPERCRITICAL


# ---------------------------------------------------------------- transforms


def test_unit_profile_transform_keeps_density(plane):
    prof = schrodinger.solve_profile(plane, Zero())
    tg = schrodinger.h_transform(plane, prof)
    r = log_grid(1e-3, 1e5, 4)
    np.testing.assert_allclose(tg.m(r), plane.m(r), rtol=1e-14)


def test_transform_volume_law(plane, plane_transform):
    r = log_grid(1.0, 1e4, 8)
    assert band(plane_transform.volume(r) / (plane.volume(r) * plane.big_h(r) ** 2)) <= 3.0


def test_transform_is_non_parabolic(plane_transform):
    assert geometry.is_parabolic(plane_transform).status == "non-parabolic"


def test_transform_rejects_nodal_profile(plane):
    prof = schrodinger.solve_profile(plane, -0.05 * Bump(2.0, 1.0, 1.0))
    with pytest.raises(ParakernelError):
        schrodinger.h_transform(plane, prof)


def test_scale_tail_matches_quadrature(plane_transform):
    from parakernel import quadrature

    r = np.array([1.0, 10.0])
    tail = plane_transform.scale_tail(r)
    R = plane_transform.profile.r_end
    inner, _ = quadrature.integrate(lambda s: 1.0 / plane_transform.m(s), r, [R, R], rtol=1e-10)
    far = 1.0 / (plane_transform.profile.terminal_flux * plane_transform.profile.h[-1])
    np.testing.assert_allclose(tail, inner + far, rtol=1e-8)


def test_compose_with_unit_profile(plane, plane_profile):
    g = schrodinger.solve_profile(plane, Zero())
    gh = schrodinger.compose_profiles(plane_profile, g)
    np.testing.assert_allclose(gh.values, plane_profile(g.r), rtol=1e-12)


def test_subcritical_composed_profile_tracks_big_h(plane, plane_transform, small_bump):
    W = 2.0 * small_bump
    g, _ = schrodinger.gauge_profile(plane_transform, W - small_bump)
    gh = schrodinger.compose_profiles(plane_transform.profile, g)
    sel = (gh.r >= 10.0) & (gh.r <= 1e4)
    assert band(gh.values[sel] / plane.big_h(gh.r[sel])) <= 3.0


def test_critical_composed_profile_is_bounded(plane, plane_transform, small_bump):
    # a critical W: Delta + W has a bounded, positive profile
    w1, w2, qq = Bump(2.0, 1.0, 0.1), PowerDecay(1.0, 4.0), Bump(4.0, 1.0, 0.001)
    res = schrodinger.critical_coupling(plane, w1, w2, qq, 0.0, 50.0, tol=1e-4)
    W = w1 - res.lower * (w2 - qq)
    g, _ = schrodinger.gauge_profile(plane_transform, W - small_bump)
    gh = schrodinger.compose_profiles(plane_transform.profile, g)
    sel = (gh.r >= 10.0) & (gh.r <= 1e4)
    assert band(gh.values[sel]) <= 2.0
