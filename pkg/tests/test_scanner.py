"""Cell classification, sweeps, tongue tracing."""

import json

import numpy as np
import pytest

from bykovlab.errors import ConfigError
from bykovlab.model import ModelParams
from bykovlab.scanner import (CellBudget, GridSpec, SweepCell, TonguePoint, approach_ratios, boundary_point,
                              classify_cell, homoclinic_distance, load_sweep, ratio_decreases_toward_origin,
                              run_sweep, trace_tongue_boundary, _polyline_intersections)

FAST = CellBudget(periodic=False, strip_samples=60)


def test_grid_excludes_lower_edge():
    l1, l2 = GridSpec(n1=4, n2=5).values()
    assert l1[0] == pytest.approx(0.025) and l1[-1] == pytest.approx(0.1)
    assert l2[0] == pytest.approx(0.02) and len(l2) == 5
    assert len(GridSpec(n1=3, n2=2).cells()) == 6
    with pytest.raises(ConfigError):
        GridSpec(n1=0)


def test_budget_validation():
    with pytest.raises(ConfigError):
        CellBudget(max_returns=1)


def test_unbroken_network_cell_is_degenerate():
    c = classify_cell(ModelParams())
    assert c.degenerate and c.d_hom_v == 0.0 and c.d_hom_w == 0.0
    assert not c.horseshoe and not c.unresolved


def test_periodic_branch_cell():
    c = classify_cell(ModelParams(lambda1=0.0, lambda2=0.05))
    assert c.periodic_attractor and not c.horseshoe
    assert c.period > 0


def test_near_diagonal_cell():
    c = classify_cell(ModelParams(lambda1=0.05, lambda2=0.05), FAST)
    assert isinstance(c.strip_count, int) and c.strip_count >= 0
    assert not c.unresolved
    # flags agree with the distances
    assert c.near_homoclinic_w == (abs(c.d_hom_w) < FAST.near_threshold)
    assert c.near_homoclinic_v == (abs(c.d_hom_v) < FAST.near_threshold)
    assert c.horseshoe == (c.strip_count >= 2)


def test_cell_json_round_trip():
    c = SweepCell(1, 2, 0.01, 0.02, d_hom_v=0.1, d_hom_w=-0.2, strip_count=3, horseshoe=True)
    back = SweepCell.from_json(c.to_json())
    assert back == c
    assert json.loads(c.to_json())["strip_count"] == 3


def _grid():
    return GridSpec((0.02, 0.1), (0.02, 0.1), 2, 2)


def test_sweep_independent_of_worker_count(tmp_path):
    a = run_sweep(_grid(), tmp_path / "a.jsonl", workers=1, budget=FAST)
    b = run_sweep(_grid(), tmp_path / "b.jsonl", workers=2, budget=FAST)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert a.counts == b.counts and a.computed == 4
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert summary["n_cells"] == 4


def test_sweep_resumes_to_identical_output(tmp_path):
    full = tmp_path / "full.jsonl"
    run_sweep(_grid(), full, budget=FAST)
    part = tmp_path / "part.jsonl"
    s = run_sweep(_grid(), part, budget=FAST, limit=1)
    assert s.computed == 1
    with open(part, "a") as fh:
        fh.write('{"i": 1, "j"')  # torn line from an interrupted writer
    run_sweep(_grid(), part, budget=FAST)
    assert part.read_bytes() == full.read_bytes()
    cells = load_sweep(part)
    assert sorted((c.i, c.j) for c in cells) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_sweep_select(tmp_path):
    s = run_sweep(_grid(), tmp_path / "s.jsonl", budget=FAST, select={(1, 1)})
    assert s.computed == 1
    (c,) = load_sweep(tmp_path / "s.jsonl")
    assert (c.lambda1, c.lambda2) == pytest.approx((0.1, 0.1))


def test_unknown_boundary_kind():
    with pytest.raises(ConfigError):
        homoclinic_distance("hom_x", ModelParams(lambda1=0.1, lambda2=0.01))


def test_hom_w_boundary_point_and_short_trace():
    start = boundary_point("hom_w", (0.1, 0.0043), (0.1, 0.0052))
    assert start.residual < 1e-6 and start.kind == "hom_w"
    assert 0.0043 < start.lambda2 < 0.0052
    curve = trace_tongue_boundary("hom_w", start, steps=3, step=0.1)
    assert len(curve) == 4
    for pt in curve:
        assert pt.residual < 1e-6
        d = homoclinic_distance("hom_w", ModelParams(lambda1=pt.lambda1, lambda2=pt.lambda2))
        assert abs(d) < 1e-6
    # traced toward the origin
    assert curve[-1].radius < curve[0].radius


def test_trace_needs_a_converged_start():
    with pytest.raises(ConfigError):
        trace_tongue_boundary("hom_w", TonguePoint("hom_w", 0.1, 0.005, 1e-3), steps=1)


def test_distance_sign_change_is_bracketed():
    # along a fine lambda2 line every sign change of d_hom_w hides a zero
    l2 = np.linspace(0.0040, 0.0056, 5)
    d = [homoclinic_distance("hom_w", ModelParams(lambda1=0.1, lambda2=float(x))) for x in l2]
    k = [i for i in range(len(d) - 1) if np.sign(d[i]) != np.sign(d[i + 1])]
    assert k
    pt = boundary_point("hom_w", (0.1, float(l2[k[0]])), (0.1, float(l2[k[0] + 1])))
    assert l2[k[0]] < pt.lambda2 < l2[k[0] + 1]


def test_approach_ratios():
    curve = [TonguePoint("hom_w", 0.1 * s, 0.01 * s * s, 0.0) for s in (1.0, 0.5, 0.25, 0.125)]
    r, q = approach_ratios(curve, "hom_w")
    assert np.all(np.diff(r) < 0)
    assert q == pytest.approx([0.1, 0.05, 0.025, 0.0125])
    assert ratio_decreases_toward_origin(curve, "hom_w")
    assert not ratio_decreases_toward_origin(curve, "hom_v")
    assert not ratio_decreases_toward_origin(curve[:2], "hom_w")


def test_polyline_intersections():
    A = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    B = np.array([[0.0, 0.5], [2.0, 0.5]])
    hits = _polyline_intersections(A, B)
    assert len(hits) == 2
    assert hits[0] == pytest.approx([0.5, 0.5]) and hits[1] == pytest.approx([1.5, 0.5])
    assert _polyline_intersections(A, B + 5.0) == []
