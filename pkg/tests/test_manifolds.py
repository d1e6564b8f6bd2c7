import math

import numpy as np
import pytest

from bykovlab.errors import ConfigError, PartialCurve
from bykovlab.manifolds import (ManifoldTrace, curve_crossings, detect_transverse_connections, eigen_directions,
                                fold_distance, gamma1_pairs, section, seed_loop, stable_height, trace_1d, trace_2d,
                                trace_2d_on_section)
from bykovlab.model import ModelParams
from bykovlab.sections import SectionGeometry, wrap

GEOM = SectionGeometry()
P05 = ModelParams(lambda1=0.05)


@pytest.fixture(scope="module")
def rep05():
    return detect_transverse_connections(P05, GEOM)


@pytest.mark.parametrize("l1", [0.0, 0.05])
def test_one_dim_connections_stay_on_the_circle(l1):
    tr = trace_1d("v", "unstable", ModelParams(lambda1=l1))
    assert isinstance(tr, ManifoldTrace) and tr.dimension == 1
    assert len(tr.branches) == 2
    for b in tr.branches:
        assert b.reached
        assert b.circle_deviation < 1e-8
        assert b.min_distance < 1e-3
    # the two branches run along opposite half circles
    assert tr.branches[0].trajectory.x[50, 2] * tr.branches[1].trajectory.x[50, 2] < 0


def test_stable_one_dim_manifold_of_w():
    tr = trace_1d("w", "stable", ModelParams(lambda1=0.05))
    assert all(b.reached for b in tr.branches)


def test_one_dim_connection_breaks_under_lambda2():
    tr = trace_1d("v", "unstable", ModelParams(lambda1=0.05, lambda2=0.05))
    assert any(b.circle_deviation > 1e-3 for b in tr.branches)


def test_input_checks():
    with pytest.raises(ConfigError):
        trace_1d("v", "stable", P05)          # W^s(v) is 2D
    with pytest.raises(ConfigError):
        trace_1d("v", "unstable", P05, delta0=1e-2)
    with pytest.raises(ConfigError):
        seed_loop(P05, "w", "unstable", n=64)
    with pytest.raises(ConfigError):
        section(GEOM, "nowhere")


def test_eigen_directions_are_invariant():
    from bykovlab.model import jacobian, equilibria

    for eq in equilibria(P05):
        for d in ("stable", "unstable"):
            E = eigen_directions(P05, eq, d)
            J = jacobian(P05, eq.location)
            # J maps the span into itself and the span is tangent to the sphere
            resid = J @ E - E @ np.linalg.lstsq(E, J @ E, rcond=None)[0]
            assert np.max(np.abs(resid)) < 1e-12
            assert np.max(np.abs(eq.location @ E)) < 1e-12


def test_seed_loop_geometry():
    a, S = seed_loop(P05, "w", "unstable", 128, 1e-6)
    assert len(S) == 128
    d = np.linalg.norm(S - np.array([0, 0, 0, -1.0]), axis=1)
    assert np.allclose(d, 1e-6, rtol=1e-3)
    assert np.allclose(np.linalg.norm(S, axis=1), 1.0, atol=1e-15)


def test_organizing_center_unstable_w_lies_on_the_sphere_x3():
    cu = trace_2d_on_section("w", "unstable", ModelParams(), section(GEOM, "I_v_in"), n_seeds=128)
    assert cu.complete and np.max(np.abs(cu.y)) < 1e-3


def test_unstable_w_is_closed_and_crosses_level_zero(rep05):
    cu = rep05.unstable_curve
    assert cu.closed
    s = np.sign(cu.y)
    assert np.sum(s != np.roll(s, 1)) >= 2


def test_gamma1_symmetry_of_traces(rep05):
    for c in (rep05.unstable_curve, rep05.stable_curve):
        # gamma1 turns the wall by pi: every point has a partner at x + pi, same height
        for x, y in zip(c.x[::16], c.y[::16]):
            dx = np.abs(wrap(c.x - (x + math.pi)))
            near = dx < 0.05
            assert near.any()
            assert np.min(np.hypot(dx[near], (c.y[near] - y) * 5)) < 0.05


def test_transverse_connections(rep05):
    cert = rep05.certified
    assert len(cert) >= 2
    assert rep05.even
    assert all(c.angle >= 1e-3 for c in cert)
    assert len(rep05.pairs) * 2 == len(rep05.crossings)


def test_transversality_stable_under_resolution(rep05):
    fine = detect_transverse_connections(P05, GEOM, n_seeds=512)
    assert len(fine.crossings) == len(rep05.crossings)
    for a, b in zip(rep05.crossings, fine.crossings):
        assert abs(a.angle - b.angle) < 0.1 * a.angle
        assert abs(wrap(a.x - b.x)) < 1e-3


def test_no_certified_connection_at_the_organizing_center():
    rep = detect_transverse_connections(ModelParams(), GEOM, n_seeds=128)
    assert len(rep.certified) == 0


def test_seed_offset_robustness():
    sec = section(GEOM, "I_v_in")
    a = trace_2d_on_section("v", "stable", P05, sec, 128, 1e-6)
    b = trace_2d_on_section("v", "stable", P05, sec, 128, 5e-7)
    xs = np.linspace(-3, 3, 13)
    diff = [abs(a.height_at(x) - b.height_at(x)) * GEOM.chart_height for x in xs]
    assert max(diff) < 10 * 1e-6


def test_stable_height_matches_trace(rep05):
    for x in (0.3, 2.0):
        h = stable_height(P05, GEOM.chart_v, x, GEOM)
        assert h == pytest.approx(rep05.stable_curve.height_at(x), abs=1e-5)


def test_crossings_of_synthetic_curves():
    from bykovlab.manifolds import SectionCurve

    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    flat = SectionCurve("s", t, t, 0 * t, np.zeros((200, 4)), t)
    wave = SectionCurve("u", t, t, 0.1 * np.sin(2 * t + 0.3), np.zeros((200, 4)), t)
    cr = curve_crossings(wave, flat)
    assert len(cr) == 4
    xs = sorted(c.x % (2 * np.pi) for c in cr)
    assert np.allclose(xs, np.sort((np.arange(4) * np.pi / 2 - 0.15) % (2 * np.pi)), atol=1e-3)
    assert len(gamma1_pairs(cr)) == 2


def test_strict_partial_curve():
    with pytest.raises(PartialCurve):
        trace_2d_on_section("w", "unstable", P05, section(GEOM, "I_v_in"), 128, t_max=1.0, strict=True)


def test_trace_2d_collects_sections():
    tr = trace_2d("w", "unstable", P05, [section(GEOM, "I_v_in")], n_seeds=128)
    assert set(tr.section_curves) == {"I_v_in"} and tr.dimension == 2


def test_fold_distance_needs_lambda2_zero():
    with pytest.raises(ConfigError):
        fold_distance(ModelParams(lambda1=0.05, lambda2=0.01))


def test_fold_exists():
    f = fold_distance(P05, GEOM)
    assert math.isfinite(f.distance) and f.lambda1 == 0.05
