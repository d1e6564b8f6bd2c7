"""Acceptance criteria 1-15 at their stated tolerances and time budgets.

Each test carries a ``criterion`` mark; the conftest prints one PASS/FAIL
line per criterion after the run.  Reference parameters a1 = 1, a2 = -0.1
throughout.
"""

import json
import math
import time

import numpy as np
import pytest

from bykovlab.integrator import EventSpec, IntegratorOptions, find_periodic_orbit, integrate
from bykovlab.manifolds import detect_tangency, detect_transverse_connections, linking_number
from bykovlab.melnikov import compute_connection, measure_splitting, melnikov_coefficients, melnikov_direct
from bykovlab.model import (V, W, ModelParams, classify_symmetry, equilibria, eval_field, jacobian, load_catalog,
                            saddle_ratio, tangential_spectrum)
from bykovlab.scanner import (REFERENCE_X0, GridSpec, boundary_point, find_codim2_points, loop_linking,
                              ratio_decreases_toward_origin, run_sweep, trace_tongue_boundary)
from bykovlab.sections import (SectionGeometry, classify_curve, eta, first_strip, gain_K, phi_v, strip_bounds,
                               verify_horseshoe, vertical_segment, wrap)
from bykovlab.switching import (FollowFailure, Network, NetworkPath, NeighborhoodSystem, SwitchingWitness,
                                check_witness, find_shadowing_ic, follows_path, itinerary, path_from_itinerary)

REF = ModelParams()
RHO = (1.1 / 0.9) ** 2
X0 = REFERENCE_X0 / np.linalg.norm(REFERENCE_X0)
criterion = pytest.mark.criterion


class Clock:
    def __init__(self):
        self.t0 = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0


# ---------------------------------------------------------------------------
# 1-4: model and integrator


@criterion(1, "radial identity")
def test_c01_radial_identity():
    clock = Clock()
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10_000, 4))
    x *= rng.uniform(0.0, 1.5, (10_000, 1)) / np.linalg.norm(x, axis=1, keepdims=True)
    r2 = np.sum(x * x, axis=1)
    for l1 in (0.0, 0.05):
        for l2 in (0.0, 0.05):
            f = eval_field(ModelParams(lambda1=l1, lambda2=l2), x)
            assert np.max(np.abs(np.sum(x * f, axis=1) - (1 - r2) * r2)) <= 1e-12
    assert clock.elapsed < 1.0


@criterion(2, "eigenvalue closed form")
def test_c02_eigenvalues():
    clock = Clock()
    a1, a2 = REF.alpha1, REF.alpha2
    for x, eps in ((V, 1.0), (W, -1.0)):
        # tangential spectrum of a central-difference Jacobian
        h = 1e-6
        J = np.column_stack([(eval_field(REF, x + h * e) - eval_field(REF, x - h * e)) / (2 * h) for e in np.eye(4)])
        assert np.allclose(J, jacobian(REF, x), atol=1e-8)
        vals, _ = tangential_spectrum(REF, x)
        expect = [complex(a2 - eps * a1, 1), complex(a2 - eps * a1, -1), complex(a2 + eps * a1, 0)]
        for z in expect:
            assert np.min(np.abs(np.asarray(vals) - z)) <= 1e-9
    assert abs(saddle_ratio(REF) - RHO) <= 1e-12
    assert clock.elapsed < 1.0


@criterion(3, "sphere invariance")
def test_c03_sphere_invariance():
    clock = Clock()
    opts = IntegratorOptions(rel_tol=1e-10, renormalize=False)
    tr, _ = integrate(REF, X0, (0.0, 1000.0), opts, t_eval=np.linspace(0.0, 1000.0, 100_001))
    assert tr.t[-1] == 1000.0
    assert np.max(np.abs(np.linalg.norm(tr.x, axis=1) - 1.0)) <= 1e-6
    assert tr.drift_max <= 1e-6
    assert clock.elapsed < 30.0


@criterion(4, "organizing-center sojourn growth")
def test_c04_sojourn_growth():
    clock = Clock()
    evs = [EventSpec.ball(c, 0.15, d, 0, f"{n}{'+' if d > 0 else '-'}") for n, c in (("v", V), ("w", W))
           for d in (-1, 1)]
    _, ev = integrate(REF, X0, (0.0, 1000.0), IntegratorOptions(rel_tol=1e-10), evs, store_steps=False)
    sojourns = {"v": [], "w": []}
    for a, b in zip(ev, ev[1:]):
        if a.name[1] == "-" and b.name == a.name[0] + "+":
            sojourns[a.name[0]].append(b.t - a.t)
    for node, s in sojourns.items():
        s = np.array(s)
        assert len(s) >= 6, node
        # durations must keep growing; a plateau would mean numerical saturation
        assert np.all(np.diff(s) > 0)
        ratios = s[1:] / s[:-1]
        assert np.all(np.abs(ratios[-4:] / RHO - 1) <= 0.1), (node, ratios)
    assert clock.elapsed < 60.0


# ---------------------------------------------------------------------------
# 5-6: Melnikov


@criterion(5, "Melnikov structure")
def test_c05_melnikov_structure():
    clock = Clock()
    conn = compute_connection(REF)
    res = melnikov_coefficients(conn, REF)
    t0 = np.linspace(0.0, 2 * math.pi, 200)
    assert np.max(np.abs(melnikov_direct(conn, t0) - res.M(t0))) <= res.quadrature_error_estimate
    z = np.array(res.zeros)
    assert len(z) == 4 and np.all((z >= 0) & (z < 2 * math.pi))
    assert np.max(np.abs(np.diff(z) - math.pi / 2)) <= 1e-10
    assert np.max(np.abs(np.abs(res.dM(z)) - 2 * res.rho_M)) <= 1e-10
    # no other zeros: sign alternates between consecutive listed zeros
    s = np.sign(res.M(z + math.pi / 4))
    assert np.all(s != np.roll(s, 1))
    assert clock.elapsed < 10.0


@criterion(6, "splitting follows Melnikov")
def test_c06_splitting():
    clock = Clock()
    t0 = np.linspace(0.0, math.pi, 64, endpoint=False)
    g = {}
    for l1 in (0.04, 0.02, 0.01):
        s = measure_splitting(ModelParams(lambda1=l1), t0)
        if l1 == 0.02:
            assert s.sign_changes() == 2
        g[l1] = s.gap / l1
    for a, b in ((0.04, 0.02), (0.02, 0.01)):
        assert np.max(np.abs(g[a] - g[b])) <= 0.1 * np.max(np.abs(g[b]))
    assert clock.elapsed < 300.0


# ---------------------------------------------------------------------------
# 7-9: manifolds and local maps


@criterion(7, "transverse connections")
def test_c07_transverse_connections():
    clock = Clock()
    p = ModelParams(lambda1=0.05)
    rep = detect_transverse_connections(p, n_seeds=256)
    fine = detect_transverse_connections(p, n_seeds=512)
    cert = rep.certified
    assert len(cert) >= 2
    assert all(c.angle >= 1e-3 for c in cert)
    paired = {i for pair in rep.pairs for i in pair}
    assert paired == set(range(len(rep.crossings)))
    assert len(fine.certified) == len(cert)
    for a, b in zip(rep.crossings, fine.crossings):
        assert abs(wrap(a.x - b.x)) < 1e-3 and abs(a.angle - b.angle) < 0.1 * a.angle
    assert clock.elapsed < 300.0


@criterion(8, "linear horseshoe")
def test_c08_horseshoe():
    clock = Clock()
    eqs = equilibria(REF)
    for rot in (0.0, math.pi / 3, math.pi):
        geom = SectionGeometry(eps=0.1, rotation_wv=rot)
        rep = verify_horseshoe(geom, eqs)
        assert rep.transition_matrix.shape == (4, 4)
        assert np.all(rep.transition_matrix == 1)
    geom = SectionGeometry(eps=0.1)
    K = gain_K(eqs)
    n0 = first_strip(0.0, geom, eqs)
    s = [strip_bounds(n, 0.0, geom, eqs) for n in range(n0, n0 + 4)]
    for a, b in zip(s, s[1:]):
        assert abs((a.b_n - a.a_n) - 2 * geom.eps / K) <= 1e-12
        assert abs((a.a_n - b.a_n) - 2 * math.pi / K) <= 1e-12
    assert clock.elapsed < 10.0


@criterion(9, "curve geometry under the local maps")
def test_c09_curve_geometry():
    clock = Clock()
    rng = np.random.default_rng(9)
    for _ in range(10):
        a1 = rng.uniform(0.5, 2.0)
        p = ModelParams(alpha1=a1, alpha2=-rng.uniform(0.05, 0.6) * a1)
        eqs = equilibria(p)
        ev = eqs[0]
        # deep enough for three and a half turns under both maps
        y_min = math.exp(-7 * math.pi * max(ev.E, 1.0 / gain_K(eqs)))
        seg = vertical_segment(rng.uniform(-math.pi, math.pi), y_min)
        assert classify_curve(np.c_[seg.x, seg.y], "cylinder").kind == "Segment"
        sp = phi_v(seg, ev)
        assert classify_curve(np.c_[sp.r, sp.varphi], "disc").kind == "Spiral"
        hx = eta(seg, eqs)
        assert classify_curve(np.c_[hx.x, hx.y], "cylinder").kind == "Helix"
    assert clock.elapsed < 10.0


# ---------------------------------------------------------------------------
# 10-11: periodic orbits and tangencies


@criterion(10, "periodic attractor branch")
def test_c10_periodic_branch():
    clock = Clock()
    sec = EventSpec.plane([0, 0, 0, 1.0], 0.0, -1, 1, "x4")
    periods = []
    for l2 in (0.05, 0.03, 0.02, 0.01):
        orb = find_periodic_orbit(ModelParams(lambda2=l2), sec, X0, transient=300.0)
        assert orb.residual < 1e-8
        assert np.all(np.abs(orb.multipliers) < 1.0)
        periods.append(orb.period)
    assert all(b > a for a, b in zip(periods, periods[1:]))
    assert clock.elapsed < 300.0


@criterion(11, "tangency brackets")
def test_c11_tangency_brackets():
    clock = Clock()
    rep = detect_tangency(np.geomspace(0.005, 0.1, 30), tol=1e-6)
    assert len(rep.brackets) >= 2
    assert len(rep.refined) == len(rep.brackets)
    for (lo, hi), f in zip(rep.brackets, rep.refined):
        assert lo <= f.lambda1 <= hi
        assert abs(f.distance) < 1e-6
    assert clock.elapsed < 600.0


# ---------------------------------------------------------------------------
# 12: atlas


@pytest.fixture(scope="module")
def atlas(tmp_path_factory):
    path = tmp_path_factory.mktemp("atlas") / "atlas.jsonl"
    clock = Clock()
    summary = run_sweep(GridSpec(), path, workers=8)
    return path, summary, clock.elapsed


@pytest.fixture(scope="module")
def boundaries():
    clock = Clock()
    sv = boundary_point("hom_v", (0.1, 0.00287), (0.1, 0.00349))
    cv = trace_tongue_boundary("hom_v", sv, steps=120, step=0.15, window=(1e-5, 0.11))
    sw = boundary_point("hom_w", (0.1, 0.0043), (0.1, 0.0052))
    cw = trace_tongue_boundary("hom_w", sw, steps=120, step=0.15, window=(1e-5, 0.11))
    return cv, cw, clock.elapsed


@criterion(12, "bifurcation atlas")
def test_c12_sweep_budget(atlas):
    path, summary, elapsed = atlas
    assert summary.computed == 2500
    assert summary.counts["unresolved"] == 0
    assert elapsed < 30 * 60


@criterion(12, "bifurcation atlas")
def test_c12_sweep_worker_independence(atlas, tmp_path):
    path, _, _ = atlas
    full = {(r["i"], r["j"]): line for line in path.read_text().splitlines() for r in [json.loads(line)]}
    sub = {(i, j) for i in range(2, 50, 6) for j in range(3, 50, 6)}
    for workers in (1, 3):
        out = tmp_path / f"sub{workers}.jsonl"
        run_sweep(GridSpec(), out, workers=workers, select=sub)
        lines = out.read_text().splitlines()
        assert len(lines) == len(sub)
        for line in lines:
            r = json.loads(line)
            assert line == full[(r["i"], r["j"])]


@criterion(12, "bifurcation atlas")
def test_c12_strip_count_monotone_in_lambda2(atlas):
    path, _, _ = atlas
    cells = [json.loads(line) for line in path.read_text().splitlines()]
    col = sorted((c for c in cells if abs(c["lambda1"] - 0.05) < 1e-12), key=lambda c: c["lambda2"])
    assert len(col) == 50
    counts = [c["strip_count"] for c in col]
    assert all(b <= a for a, b in zip(counts, counts[1:])), counts


@criterion(12, "bifurcation atlas")
def test_c12_hom_w_boundary_tangent_to_lambda1_axis(boundaries):
    _, cw, _ = boundaries
    assert all(pt.residual < 1e-6 for pt in cw)
    assert ratio_decreases_toward_origin(cw, "hom_w")


@criterion(12, "bifurcation atlas")
def test_c12_hom_v_boundary_tangent_to_lambda2_axis(boundaries):
    cv, _, _ = boundaries
    assert all(pt.residual < 1e-6 for pt in cv)
    assert ratio_decreases_toward_origin(cv, "hom_v")


# ---------------------------------------------------------------------------
# 13: codimension-two points and linking


@criterion(13, "codimension-two points and linking")
def test_c13_codim2_and_linking(boundaries):
    cv, cw, _ = boundaries
    pts = find_codim2_points([cv], [cw], with_linking=False)
    assert len(pts) >= 1
    c2 = pts[0]
    assert c2.residual_v < 1e-6 and c2.residual_w < 1e-6
    q = ModelParams(lambda1=c2.point.lambda1, lambda2=c2.point.lambda2)
    # the Gauss method raises unless the sum is within 0.1 of an integer
    lk, loop_v, loop_w = loop_linking(q, method="gauss")
    assert isinstance(lk, int) and lk != 0
    assert np.linalg.norm(loop_v[0] - V) == 0 and np.linalg.norm(loop_w[0] - W) == 0


@criterion(13, "codimension-two points and linking")
def test_c13_reference_links():
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    a = np.c_[np.cos(t), np.sin(t), 0 * t]
    b = np.c_[1 + np.cos(t[::-1]), 0 * t, np.sin(t[::-1])]
    far = b + [5.0, 0, 0]
    assert linking_number(a, b, method="gauss") == 1
    assert linking_number(a, far, method="gauss") == 0


# ---------------------------------------------------------------------------
# 14: switching


@pytest.fixture(scope="module")
def nbhds():
    return (NeighborhoodSystem(Network.build(REF)),
            NeighborhoodSystem(Network.build(ModelParams(lambda1=0.05))))


@criterion(14, "switching")
def test_c14_switching(nbhds):
    clock = Clock()
    nb0, nb5 = nbhds
    opts = IntegratorOptions(rel_tol=1e-10, abs_tol=1e-13, max_step=0.1)
    # round trip on 100 runs
    rng = np.random.default_rng(14)
    checked = 0
    for n in range(100):
        p, nb = (REF, nb0) if n % 2 == 0 else (ModelParams(lambda1=0.05), nb5)
        x0 = rng.standard_normal(4)
        tr, _ = integrate(p, x0 / np.linalg.norm(x0), (0.0, 150.0), opts, t_eval=np.arange(0.0, 150.0, 0.01))
        path = path_from_itinerary(itinerary(tr, nb))
        if path is None:
            continue
        checked += 1
        w = follows_path(tr, path, nb)
        assert isinstance(w, SwitchingWitness) and check_witness(tr, path, nb, w)
    assert checked >= 80
    # alternating-branch path of order 4 at lambda1 = 0.05
    path = NetworkPath.alternating(4)
    res = find_shadowing_ic(path, ModelParams(lambda1=0.05), nb5)
    assert check_witness(res.trajectory, path, nb5, res.witness)
    # branch mixing at the organizing center
    tr, _ = integrate(REF, X0, (0.0, 300.0), opts, t_eval=np.arange(0.0, 300.0, 0.01))
    mixed = NetworkPath(("[v->w]-", "[w->v]", "[v->w]+", "[w->v]"))
    r = follows_path(tr, mixed, nb0)
    assert isinstance(r, FollowFailure) and r.condition == 3
    assert clock.elapsed < 600.0


# ---------------------------------------------------------------------------
# 15: perturbation catalog


@criterion(15, "perturbation catalog")
def test_c15_catalog():
    clock = Clock()
    terms = load_catalog()
    assert len(terms) > 0
    wrong = [(t.label, t.claimed_symmetry, got) for t in terms
             for got in [classify_symmetry(t, tangency_tol=1e-14)] if got != t.claimed_symmetry]
    assert wrong == []
    assert clock.elapsed < 5.0
