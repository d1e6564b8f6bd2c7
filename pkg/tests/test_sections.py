import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bykovlab.errors import BelowN0, ConfigError, LeftDomain, NoPassage, OnStableManifold, TooFewSamples
from bykovlab.integrator import IntegratorOptions, Trajectory, flow_to_event, integrate
from bykovlab.manifolds import section, stable_height
from bykovlab.model import ModelParams, equilibria
from bykovlab.scanner import REFERENCE_X0
from bykovlab.sections import (CylinderChart, SectionGeometry, TopPoint, WallPoint, check_turning_orientation,
                               classify_curve, eta, first_return, first_strip, gain_K, phi_v, phi_w, psi_wv,
                               strip_bounds, turning_signs, verify_horseshoe, vertical_segment, wrap)

EQS = equilibria(ModelParams())
EV, EW = EQS


def linear_v(x, y, C, E):
    """Linear cylinder flow at v from the wall (rho = 1) to the top (z = 1)."""
    hit = lambda t, s: s[2] - 1.0
    hit.terminal = True
    sol = solve_ivp(lambda t, s: [-C * s[0], 1.0, E * s[2]], (0, 200), [1.0, x, y], events=hit,
                    rtol=1e-13, atol=1e-15, method="DOP853")
    rho, th, _ = sol.y_events[0][0]
    return rho, th % (2 * math.pi)


def linear_w(r, ph, C, E):
    """Linear cylinder flow at w from the top (z = 1) to the wall (rho = 1)."""
    hit = lambda t, s: s[0] - 1.0
    hit.terminal = True
    sol = solve_ivp(lambda t, s: [E * s[0], 1.0, -C * s[2]], (0, 200), [r, ph, 1.0], events=hit,
                    rtol=1e-13, atol=1e-15, method="DOP853")
    _, th, z = sol.y_events[0][0]
    return th % (2 * math.pi), z


def test_phi_v_trivial_values():
    out = phi_v(WallPoint(0.7, 1.0), EV)
    assert (out.r, out.varphi) == pytest.approx((1.0, 0.7))
    out = phi_v(WallPoint(0.0, math.exp(-0.9)), EV)
    assert out.r == pytest.approx(math.exp(-1.1), abs=1e-15)
    assert out.varphi == pytest.approx(1.0, abs=1e-15)


def test_phi_w_trivial_value():
    out = phi_w(TopPoint(1.0, 2.0), EW)
    assert (out.x, out.y) == pytest.approx((2.0, 1.0))


@pytest.mark.parametrize("x,y", [(0.0, 0.5), (1.0, 1e-2), (3.0, 1e-4)])
def test_phi_v_matches_linear_flow(x, y):
    rho, th = linear_v(x, y, EV.C, EV.E)
    out = phi_v(WallPoint(x, y), EV)
    assert abs(out.r - rho) < 1e-10
    assert abs(wrap(out.varphi - th)) < 1e-10


@pytest.mark.parametrize("r,ph", [(0.5, 0.0), (1e-2, 2.0), (1e-4, 5.0)])
def test_phi_w_matches_linear_flow(r, ph):
    th, z = linear_w(r, ph, EW.C, EW.E)
    out = phi_w(TopPoint(r, ph), EW)
    assert abs(out.y - z) < 1e-10
    assert abs(wrap(out.x - th)) < 1e-10


def test_local_map_errors():
    with pytest.raises(OnStableManifold):
        phi_v(WallPoint(0.0, 0.0), EV)
    with pytest.raises(LeftDomain):
        phi_v(WallPoint(0.0, 1.5), EV)
    with pytest.raises(OnStableManifold):
        phi_w(TopPoint(0.0, 0.0), EW)


def test_phi_v_angle_is_affine_in_log_height():
    y = np.geomspace(1, 1e-6, 200)
    ang = np.unwrap(phi_v(WallPoint(np.zeros_like(y), y), EV).varphi)
    slope, icpt = np.polyfit(-np.log(y), ang, 1)
    assert slope == pytest.approx(1 / EV.E, abs=1e-10)
    assert np.max(np.abs(slope * -np.log(y) + icpt - ang)) < 1e-8


def test_eta_unwrapped_matches_composition():
    y = np.geomspace(0.5, 1e-5, 50)
    a = eta(WallPoint(np.full_like(y, 0.3), y), EQS)
    b = eta(WallPoint(np.full_like(y, 0.3), y), EQS, unwrap=True)
    assert np.allclose(np.mod(b.x, 2 * np.pi), a.x, atol=1e-9)
    assert np.allclose(a.y, b.y, rtol=1e-12)
    assert gain_K(EQS) == pytest.approx(200 / 81, abs=1e-14)


def test_first_return_composition():
    geom = SectionGeometry()
    sb = strip_bounds(first_strip(0.0, geom, EQS) + 1, 0.0, geom, EQS)
    y = math.exp(0.5 * (sb.a_n + sb.b_n))   # centre of a strip: eta lands at angle 0 of R_w
    out = first_return(WallPoint(0.0, y), geom, EQS)
    mid = eta(WallPoint(0.0, y), EQS)
    assert abs(wrap(mid.x)) < 1e-9
    exp = psi_wv(mid, geom)
    assert (out.x, out.y) == pytest.approx((exp.x, exp.y))
    assert out.y == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(LeftDomain):
        first_return(WallPoint(0.0, 0.9), geom, EQS)
    with pytest.raises(OnStableManifold):
        first_return(WallPoint(0.0, 0.0), geom, EQS)


def test_strip_arithmetic():
    geom = SectionGeometry()
    K = 200 / 81
    n0 = first_strip(0.0, geom, EQS)
    prev = None
    for n in range(n0, n0 + 6):
        s = strip_bounds(n, 0.0, geom, EQS)
        assert s.b_n - s.a_n == pytest.approx(2 * geom.eps / K, abs=1e-12)
        assert math.exp(s.b_n) <= geom.tau
        if prev is not None:
            assert s.a_n - prev.a_n == pytest.approx(-2 * math.pi / K, abs=1e-12)
        prev = s
        # eta carries the strip's horizontal edges onto the angular boundary of R_w
        lo = eta(WallPoint(0.0, math.exp(s.a_n)), EQS)
        hi = eta(WallPoint(0.0, math.exp(s.b_n)), EQS)
        assert wrap(lo.x) == pytest.approx(geom.eps, abs=1e-9)
        assert wrap(hi.x) == pytest.approx(-geom.eps, abs=1e-9)
    with pytest.raises(BelowN0):
        strip_bounds(n0 - 1, 0.0, geom, EQS)


@pytest.mark.parametrize("rot", [0.0, math.pi / 3, math.pi])
def test_full_shift_on_four_strips(rot):
    rep = verify_horseshoe(SectionGeometry(eps=0.1, rotation_wv=rot), EQS)
    assert rep.valid and rep.full_shift
    assert rep.transition_matrix.shape == (4, 4)
    assert rep.word_count_lower_bound == 16


@pytest.mark.parametrize("k,eps", [(2, 0.05), (6, math.pi / 8)])
def test_full_shift_other_sizes(k, eps):
    geom = SectionGeometry(eps=eps)
    n0 = first_strip(geom.center_v + eps, geom, EQS)
    rep = verify_horseshoe(geom, EQS, n_range=range(n0, n0 + k))
    assert rep.full_shift and rep.transition_matrix.shape == (k, k)


def test_overlapping_strips_are_invalid():
    rep = verify_horseshoe(SectionGeometry(eps=math.pi - 1e-12), EQS)
    assert not rep.valid and not rep.full_shift


def test_geometry_validation():
    with pytest.raises(ConfigError):
        SectionGeometry(eps=4.0)
    with pytest.raises(ConfigError):
        SectionGeometry(tau=0.0)


def test_chart_round_trip():
    ch = CylinderChart(-1.0, 0.2, 0.2)
    X = ch.wall_state(1.2, -0.4)
    assert np.linalg.norm(X) == pytest.approx(1.0)
    w = ch.to_wall(X)
    assert (w.x, w.y) == pytest.approx((1.2, -0.4))
    t = ch.to_top(ch.top_state(0.3, -2.0))
    assert (t.r, t.varphi) == pytest.approx((0.3, -2.0))


def test_curve_classes_on_reference():
    seg = vertical_segment(0.0, 1e-6)
    assert classify_curve(np.c_[seg.x, seg.y], "cylinder").kind == "Segment"
    # phi_v winds (-ln y) / E_v radians: 2.4 turns down to 1e-6, so go deeper for the spiral
    assert classify_curve(np.c_[phi_v(seg, EV).r, phi_v(seg, EV).varphi], "disc").winding == pytest.approx(
        math.log(1e6) / EV.E / (2 * math.pi))
    sp = phi_v(vertical_segment(0.0, 1e-9), EV)
    c = classify_curve(np.c_[sp.r, sp.varphi], "disc")
    assert c.kind == "Spiral" and c.winding > 3
    hx = eta(seg, EQS)
    c = classify_curve(np.c_[hx.x, hx.y], "cylinder")
    assert c.kind == "Helix" and abs(c.radial_limit) < 1e-6


def test_classify_curve_errors():
    with pytest.raises(TooFewSamples):
        classify_curve(np.zeros((10, 2)), "disc")
    with pytest.raises(ConfigError):
        classify_curve(np.zeros((60, 2)), "sphere")


def test_nonlinear_return_has_the_model_log_gain():
    """Angle gained between I_v_in and O_w_out grows like K (-ln d), d the offset from W^s(v)."""
    p = ModelParams(lambda1=0.05)
    geom = SectionGeometry()
    src, dst = section(geom, "I_v_in"), section(geom, "O_w_out")
    opts = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, renormalize=True)
    h = stable_height(p, geom.chart_v, 0.0, geom)
    gain = []
    for d in (1e-3, 1e-5):
        x0 = src.state(0.0, h + d)
        _, T, _ = flow_to_event(p, x0, dst.event, 400.0, opts)
        tr, _ = integrate(p, x0, (0, T), opts)
        gain.append(np.unwrap(np.arctan2(tr.x[:, 1], tr.x[:, 0]))[-1])
    slope = (gain[1] - gain[0]) / (math.log(1e-3) - math.log(1e-5))
    assert slope == pytest.approx(gain_K(EQS), rel=0.2)


def _reference_traj(p, T=300.0):
    x0 = REFERENCE_X0 / np.linalg.norm(REFERENCE_X0)
    tr, _ = integrate(p, x0, (0, T), t_eval=np.arange(0, T, 0.01))
    return tr


@pytest.mark.parametrize("l1", [0.0, 0.05])
def test_turning_orientation(l1):
    p = ModelParams(lambda1=l1)
    rep = turning_signs(_reference_traj(p))
    assert rep.agree and rep.sign_v == 1
    assert check_turning_orientation(p, _reference_traj(p))


def test_reversed_turning_is_detected():
    tr = _reference_traj(ModelParams())
    X = tr.x.copy()
    near_w = X[:, 3] < 0
    X[near_w, 1] *= -1   # mirror the w half: turns the other way there
    fake = Trajectory(tr.t, X, tr.params, tr.options)
    assert not turning_signs(fake).agree


def test_turning_needs_both_passages():
    t = np.linspace(0, 1, 50)
    X = np.tile([1.0, 0, 0, 0], (50, 1))
    with pytest.raises(NoPassage):
        turning_signs(Trajectory(t, X, ModelParams(), IntegratorOptions()))
