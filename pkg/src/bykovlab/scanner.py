"""Two-parameter cartography of the (lambda1, lambda2) plane.

Each cell gets two signed homoclinic distances, a horseshoe strip count and
a periodic-attractor check.  Zero sets of the distances are traced as curves
(tongue boundaries) and intersected to find points where homoclinic loops of
both saddle-foci coexist.

Distance conventions (only their zeros matter):

``d_hom_w``
    The stable manifold of ``w`` is a single orbit; followed backward it
    passes ``v`` and crosses the entry wall ``I_v_in``.  The distance is its
    height there minus the height of W^u(w) at the same angle.  It vanishes
    exactly when W^u(w) and W^s(w) meet, i.e. on a homoclinic loop of ``w``.
``d_hom_v``
    The upper branch of W^u(v) passes ``w`` and crosses the exit wall
    ``O_w_out`` at the center of the helix.  The distance is its height
    minus the height of W^s(v) at the same angle.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigError, IoFailure, LostCurve, NoConvergence, NoReturn,
                     NumericalFailure)
from .integrator import EventSpec, IntegratorOptions, find_periodic_orbit, flow_to_event, integrate
from .manifolds import (TRACE_OPTIONS, eigen_directions, linking_number, projection_pole, section,
                        separation_ratios, stable_height, stereographic,
                        trace_2d_on_section, _equilibrium, _plane_basis, _onto_sphere)
from .model import V, W, ModelParams
from .sections import SectionGeometry, wrap

REFERENCE_X0 = np.array([-0.5, -0.1390, -0.8807, 0.3013])
SHOT_OFFSET = 1e-7


@dataclass(frozen=True)
class CellBudget:
    """Per-cell limits and thresholds."""

    max_time: float = 2000.0
    max_returns: int = 40
    strip_samples: int = 600
    strip_gap: tuple[float, float] = (1e-12, 0.5)
    stable_seeds: int = 128
    transient: float = 300.0
    near_threshold: float = 1e-2
    tangency_threshold: float = 1e-3
    periodic: bool = True

    def __post_init__(self):
        if self.max_time <= 0 or self.max_returns < 3 or self.strip_samples < 10:
            raise ConfigError("invalid cell budget")


@dataclass
class SweepCell:
    i: int
    j: int
    lambda1: float
    lambda2: float
    d_hom_v: float | None = None
    d_hom_w: float | None = None
    strip_count: int = 0
    period: float | None = None
    periodic_attractor: bool = False
    horseshoe: bool = False
    near_homoclinic_v: bool = False
    near_homoclinic_w: bool = False
    tangency_bracket: bool = False
    degenerate: bool = False
    unresolved: bool = False
    note: str = ""

    @property
    def overlap(self) -> bool:
        return self.periodic_attractor and self.horseshoe

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SweepCell":
        return cls(**json.loads(line))


# ---------------------------------------------------------------------------
# distances


def _shot(p: ModelParams, label: str, direction: str) -> np.ndarray:
    eq = _equilibrium(label, p)
    e = eigen_directions(p, eq, direction)[:, 0]
    e = e * (1.0 if e[2] >= 0 else -1.0)  # upper branch
    return _onto_sphere(eq.location + SHOT_OFFSET * e)


def unstable_w_height(p: ModelParams, x: float, geom: SectionGeometry | None = None,
                      tol: float = 1e-11, max_iter: int = 40) -> float:
    """Height of W^u(w) on ``I_v_in`` at angle ``x`` (secant solve in the seed angle)."""
    geom = geom or SectionGeometry()
    sec = section(geom, "I_v_in")
    u, vv = _plane_basis(eigen_directions(p, _equilibrium("w", p), "unstable"))

    def hit(a):
        x0 = _onto_sphere(W + 1e-6 * (math.cos(a) * u + math.sin(a) * vv))
        _, _, X = flow_to_event(p, x0, sec.event, 400.0, TRACE_OPTIONS)
        wp = geom.chart_v.to_wall(X)
        return float(wp.x), float(wp.y)

    x0_, _ = hit(0.0)
    a0 = wrap(x - x0_)
    f0 = wrap(hit(a0)[0] - x)
    a1 = a0 - f0
    for _ in range(max_iter):
        xa, ya = hit(a1)
        f1 = wrap(xa - x)
        if abs(f1) < tol:
            return ya
        if f1 == f0:
            break
        a0, a1, f0 = a1, a1 - f1 * (a1 - a0) / (f1 - f0), f1
    if abs(f1) < 1e3 * tol:
        return ya
    raise NoConvergence(f"W^u(w) angle solve failed at x = {x}")


def hom_w_distance(p: ModelParams, geom: SectionGeometry | None = None, t_max: float = 2000.0) -> float:
    """Signed distance ``d_hom_w`` (see module docstring)."""
    geom = geom or SectionGeometry()
    if p.lambda2 == 0.0:
        return 0.0
    opts = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, max_step=0.5, renormalize=True, max_time=t_max)
    _, _, X = flow_to_event(p, _shot(p, "w", "stable"), section(geom, "I_v_in").event, t_max, opts,
                            backward=True)
    wp = geom.chart_v.to_wall(X)
    return float(wp.y) - unstable_w_height(p, float(wp.x), geom)


def hom_v_distance(p: ModelParams, geom: SectionGeometry | None = None, t_max: float = 2000.0) -> float:
    """Signed distance ``d_hom_v`` (see module docstring)."""
    geom = geom or SectionGeometry()
    if p.lambda2 == 0.0:
        return 0.0 if p.lambda1 == 0.0 else math.nan
    opts = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, max_step=0.5, max_time=t_max)
    _, _, X = flow_to_event(p, _shot(p, "v", "unstable"), section(geom, "O_w_out").event, t_max, opts)
    wp = geom.chart_w.to_wall(X)
    return float(wp.y) - stable_height(p, geom.chart_w, float(wp.x), geom)


def homoclinic_distance(kind: str, p: ModelParams, geom: SectionGeometry | None = None) -> float:
    if kind == "hom_w":
        return hom_w_distance(p, geom)
    if kind == "hom_v":
        return hom_v_distance(p, geom)
    raise ConfigError(f"unknown boundary kind {kind!r}")


# ---------------------------------------------------------------------------
# strips and attractors


@dataclass
class StripSamples:
    gaps: np.ndarray
    x: np.ndarray
    y: np.ndarray
    distance: np.ndarray

    @property
    def count(self) -> int:
        d = self.distance[np.isfinite(self.distance)]
        return int(np.sum(np.sign(d[1:]) * np.sign(d[:-1]) < 0))

    def near_tangency(self, threshold: float) -> bool:
        """A local extremum of the distance comes within ``threshold`` of zero without crossing."""
        d = self.distance[np.isfinite(self.distance)]
        for k in range(1, len(d) - 1):
            ext = (d[k] - d[k - 1]) * (d[k + 1] - d[k]) < 0
            if ext and abs(d[k]) < threshold and np.sign(d[k - 1]) == np.sign(d[k]) == np.sign(d[k + 1]):
                return True
        return False


def strip_samples(p: ModelParams, geom: SectionGeometry | None = None, budget: CellBudget | None = None,
                  x0: float = 0.0) -> StripSamples:
    """Helix image on ``O_w_out`` of a vertical segment above W^s(v) on ``I_v_in``.

    The segment starts ``gap`` above W^s(v) at angle ``x0``; each sample is
    flowed past ``v`` (upper branch) and ``w`` to the exit wall and compared
    with the height of W^s(v) there.
    """
    geom = geom or SectionGeometry()
    budget = budget or CellBudget()
    hs = stable_height(p, geom.chart_v, x0, geom)
    gaps = np.geomspace(budget.strip_gap[0], budget.strip_gap[1], budget.strip_samples)
    starts = geom.chart_v.wall_state(np.full_like(gaps, x0), hs + gaps)
    out_sec = section(geom, "O_w_out")
    cs = trace_2d_on_section("v", "stable", p, out_sec, budget.stable_seeds)
    xs = np.full(len(gaps), np.nan)
    ys = np.full(len(gaps), np.nan)
    dist = np.full(len(gaps), np.nan)
    opts = IntegratorOptions(rel_tol=1e-10, abs_tol=1e-13, max_step=0.5, max_time=budget.max_time)
    for k, s0 in enumerate(starts):
        try:
            _, _, X = flow_to_event(p, s0, out_sec.event, 400.0, opts)
        except NoReturn:
            continue
        wp = geom.chart_w.to_wall(X)
        xs[k], ys[k] = float(wp.x), float(wp.y)
        dist[k] = ys[k] - cs.height_at(xs[k])
    return StripSamples(gaps, xs, ys, dist)


def periodic_attractor(p: ModelParams, budget: CellBudget | None = None) -> tuple[bool, float | None]:
    """Look for an attracting periodic orbit reached from the reference initial condition."""
    budget = budget or CellBudget()
    opts = IntegratorOptions(rel_tol=1e-10, abs_tol=1e-12, max_step=0.5, max_time=budget.max_time)
    sec = EventSpec.plane([0, 0, 0, 1.0], 0.0, -1, 1, "x4")
    try:
        tr, _ = integrate(p, REFERENCE_X0 / np.linalg.norm(REFERENCE_X0), (0.0, budget.transient), opts,
                          store_steps=False)
        orb = find_periodic_orbit(p, sec, tr.end, opts, transient=0.0,
                                  t_return=(budget.max_time - budget.transient) / budget.max_returns,
                                  max_iter=max(1, budget.max_returns // 3 - 1))
    except NumericalFailure:
        return False, None
    return bool(orb.attracting), float(orb.period)


def classify_cell(p: ModelParams, budget: CellBudget | None = None, geom: SectionGeometry | None = None,
                  i: int = 0, j: int = 0) -> SweepCell:
    """Classify one parameter cell; failures mark the cell unresolved instead of guessing."""
    budget = budget or CellBudget()
    geom = geom or SectionGeometry()
    cell = SweepCell(i, j, p.lambda1, p.lambda2)
    if p.lambda2 == 0.0:
        cell.degenerate = True
        cell.d_hom_w = 0.0
        cell.d_hom_v = 0.0 if p.lambda1 == 0.0 else None
        cell.note = "1D connections intact"
        return cell
    notes = []
    try:
        cell.d_hom_w = hom_w_distance(p, geom, budget.max_time)
        cell.near_homoclinic_w = abs(cell.d_hom_w) < budget.near_threshold
    except NumericalFailure as exc:
        cell.unresolved = True
        notes.append(f"d_hom_w: {type(exc).__name__}")
    try:
        cell.d_hom_v = hom_v_distance(p, geom, budget.max_time)
        cell.near_homoclinic_v = abs(cell.d_hom_v) < budget.near_threshold
    except NumericalFailure as exc:
        cell.unresolved = True
        notes.append(f"d_hom_v: {type(exc).__name__}")
    try:
        ss = strip_samples(p, geom, budget)
        cell.strip_count = ss.count
        cell.horseshoe = ss.count >= 2
        cell.tangency_bracket = ss.near_tangency(budget.tangency_threshold)
    except NumericalFailure as exc:
        cell.unresolved = True
        notes.append(f"strips: {type(exc).__name__}")
    if budget.periodic:
        cell.periodic_attractor, cell.period = periodic_attractor(p, budget)
    cell.note = "; ".join(notes)
    return cell


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``lo + (hi - lo) * k / n`` for ``k = 1..n`` on each axis (the lower edge is excluded)."""

    lambda1_range: tuple[float, float] = (0.0, 0.1)
    lambda2_range: tuple[float, float] = (0.0, 0.1)
    n1: int = 50
    n2: int = 50

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigError("grid needs at least one cell per axis")

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        (a, b), (c, d) = self.lambda1_range, self.lambda2_range
        return (a + (b - a) * np.arange(1, self.n1 + 1) / self.n1,
                c + (d - c) * np.arange(1, self.n2 + 1) / self.n2)

    def cells(self) -> list[tuple[int, int, float, float]]:
        l1, l2 = self.values()
        return [(i, j, float(l1[i]), float(l2[j])) for j in range(self.n2) for i in range(self.n1)]


@dataclass
class SweepSummary:
    n_cells: int
    computed: int
    counts: dict[str, int]
    path: str

    def table(self) -> str:
        rows = [f"{'flag':<22}{'cells':>8}"] + [f"{k:<22}{v:>8d}" for k, v in self.counts.items()]
        return "\n".join(rows)


FLAGS = ("periodic_attractor", "horseshoe", "near_homoclinic_v", "near_homoclinic_w", "tangency_bracket",
         "degenerate", "unresolved")


def _work(args):
    i, j, l1, l2, base, budget = args
    return classify_cell(base.with_(lambda1=l1, lambda2=l2), budget, None, i, j).to_json()


def _read_existing(path: Path) -> dict[tuple[int, int], str]:
    done = {}
    if not path.exists():
        return done
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # a torn final line from an interrupted run
                done[(rec["i"], rec["j"])] = json.dumps(rec, sort_keys=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return done


def _drop_torn_tail(path: Path) -> None:
    """Cut an unterminated last line so that appended records start on a fresh line."""
    if not path.exists():
        return
    with open(path, "rb+") as fh:
        data = fh.read()
        if data and not data.endswith(b"\n"):
            fh.truncate(data.rfind(b"\n") + 1)


def run_sweep(grid: GridSpec, out_path, workers: int = 1, base: ModelParams | None = None,
              budget: CellBudget | None = None, limit: int | None = None,
              select=None) -> SweepSummary:
    """Classify every grid cell and write sorted JSON lines to ``out_path``.

    Cells already present in the file are skipped, so an interrupted run can
    be resumed.  ``limit`` stops after that many new cells (used to simulate
    interruptions).  ``select``, a set of ``(i, j)`` indices, restricts the
    run to those cells.  The final file is sorted by ``(j, i)`` and does not
    depend on the worker count.
    """
    base = base or ModelParams()
    budget = budget or CellBudget()
    path = Path(out_path)
    done = _read_existing(path)
    todo = [(i, j, l1, l2, base, budget) for i, j, l1, l2 in grid.cells()
            if (i, j) not in done and (select is None or (i, j) in select)]
    if limit is not None:
        todo = todo[:limit]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _drop_torn_tail(path)
        with open(path, "a") as sink:
            if workers <= 1:
                results = map(_work, todo)
                for line in results:
                    sink.write(line + "\n")
                    sink.flush()
            else:
                with ProcessPoolExecutor(max_workers=workers) as ex:
                    for line in ex.map(_work, todo, chunksize=1):
                        sink.write(line + "\n")
                        sink.flush()
        records = _read_existing(path)
        order = sorted(records, key=lambda k: (k[1], k[0]))
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            for k in order:
                fh.write(records[k] + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    cells = [json.loads(records[k]) for k in order]
    counts = {f: int(sum(bool(c[f]) for c in cells)) for f in FLAGS}
    counts["overlap"] = int(sum(c["periodic_attractor"] and c["horseshoe"] for c in cells))
    summary = SweepSummary(grid.n1 * grid.n2, len(cells), counts, str(path))
    try:
        with open(path.with_suffix(".summary.json"), "w") as fh:
            json.dump(asdict(summary), fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return summary


def load_sweep(path) -> list[SweepCell]:
    return [SweepCell.from_json(line) for line in _read_existing(Path(path)).values()]


# ---------------------------------------------------------------------------
# tongue boundaries


@dataclass
class TonguePoint:
    kind: str
    lambda1: float
    lambda2: float
    residual: float

    @property
    def radius(self) -> float:
        return math.hypot(self.lambda1, self.lambda2)


def _log(pt) -> np.ndarray:
    return np.array([math.log(pt[0]), math.log(pt[1])])


def _bisect_segment(kind: str, base: ModelParams, a: np.ndarray, b: np.ndarray, fa: float, fb: float,
                    geom, tol: float, max_iter: int = 80) -> TonguePoint:
    """Bisection in log-parameter space between ``a`` and ``b`` (opposite signs)."""
    if np.sign(fa) == np.sign(fb):
        raise LostCurve("segment does not bracket a zero")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        l1, l2 = np.exp(m)
        fm = homoclinic_distance(kind, base.with_(lambda1=float(l1), lambda2=float(l2)), geom)
        if abs(fm) < tol or np.linalg.norm(b - a) < 1e-14:
            return TonguePoint(kind, float(l1), float(l2), abs(fm))
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    raise LostCurve("bisection did not reach the residual tolerance")


def boundary_point(kind: str, p_a: tuple[float, float], p_b: tuple[float, float],
                   base: ModelParams | None = None, geom: SectionGeometry | None = None,
                   tol: float = 1e-7) -> TonguePoint:
    """Zero of the ``kind`` distance on the segment between two parameter points of opposite sign."""
    base = base or ModelParams()
    fa = homoclinic_distance(kind, base.with_(lambda1=p_a[0], lambda2=p_a[1]), geom)
    fb = homoclinic_distance(kind, base.with_(lambda1=p_b[0], lambda2=p_b[1]), geom)
    return _bisect_segment(kind, base, _log(p_a), _log(p_b), fa, fb, geom, tol)


def trace_tongue_boundary(kind: str, start: TonguePoint, steps: int = 40, step: float = 0.08,
                          toward_origin: bool = True, base: ModelParams | None = None,
                          geom: SectionGeometry | None = None, tol: float = 1e-7,
                          window: tuple[float, float] = (1e-5, 0.1),
                          stop_after_growth: int | None = None) -> list[TonguePoint]:
    """Follow the zero set of the ``kind`` distance from ``start``.

    Works in log-parameter coordinates: a secant predictor of length
    ``step`` followed by a bisection corrector on the segment orthogonal to
    the predicted direction.  The first direction is the one that decreases
    the distance to the origin when ``toward_origin`` holds.  Stops when the
    curve leaves ``window`` (on either axis), or, if ``stop_after_growth`` is
    given, once the distance to the origin has grown that many steps in a row.
    """
    base = base or ModelParams()
    if start.residual >= 1e-6:
        raise ConfigError("start point residual must be below 1e-6")
    pts = [start]
    z = _log((start.lambda1, start.lambda2))
    # tangent from the local gradient of the distance
    h = 1e-4
    f0 = homoclinic_distance(kind, base.with_(lambda1=start.lambda1, lambda2=start.lambda2), geom)
    g = []
    for k in range(2):
        dz = np.zeros(2)
        dz[k] = h
        l1, l2 = np.exp(z + dz)
        g.append((homoclinic_distance(kind, base.with_(lambda1=float(l1), lambda2=float(l2)), geom) - f0) / h)
    g = np.array(g)
    if not np.all(np.isfinite(g)) or np.linalg.norm(g) == 0:
        raise LostCurve("degenerate gradient at the start point")
    tdir = np.array([-g[1], g[0]]) / np.linalg.norm(g)
    if toward_origin:
        # decrease |lambda|: d|lambda|^2 along tdir is 2 * sum(lambda_k^2 * tdir_k)
        if float(np.sum(np.exp(2 * z) * tdir)) > 0:
            tdir = -tdir
    lo, hi = math.log(window[0]), math.log(window[1])
    for _ in range(steps):
        s = step
        for _attempt in range(6):
            pred = z + s * tdir
            nrm = np.array([-tdir[1], tdir[0]])
            a, b = pred - 0.5 * s * nrm, pred + 0.5 * s * nrm
            fa = homoclinic_distance(kind, base.with_(lambda1=float(np.exp(a[0])), lambda2=float(np.exp(a[1]))), geom)
            fb = homoclinic_distance(kind, base.with_(lambda1=float(np.exp(b[0])), lambda2=float(np.exp(b[1]))), geom)
            if np.sign(fa) != np.sign(fb):
                break
            s *= 0.5
        else:
            raise LostCurve(f"corrector failed to re-bracket the {kind} curve near {np.exp(z)}")
        pt = _bisect_segment(kind, base, a, b, fa, fb, geom, tol)
        znew = _log((pt.lambda1, pt.lambda2))
        d = znew - z
        if np.linalg.norm(d) == 0:
            raise LostCurve("corrector stalled")
        tdir = d / np.linalg.norm(d)
        z = znew
        pts.append(pt)
        if not (lo <= z[0] <= hi and lo <= z[1] <= hi):
            break
        if stop_after_growth and len(pts) > stop_after_growth:
            r = [q.radius for q in pts[-stop_after_growth - 1:]]
            if all(b > a for a, b in zip(r, r[1:])):
                break
    return pts


def tongue_tip(kind: str, start: TonguePoint, step: float = 0.15, max_steps: int = 80,
               base: ModelParams | None = None, geom: SectionGeometry | None = None,
               tol: float = 1e-7, window: tuple[float, float] = (1e-6, 0.1),
               patience: int = 3) -> tuple[TonguePoint, list[TonguePoint]]:
    """Closest point to the origin on the hairpin through ``start``.

    Traces toward the origin and stops once the distance to the origin has
    grown for ``patience`` consecutive steps.  Returns the closest traced
    point together with the trace.
    """
    base = base or ModelParams()
    pts = trace_tongue_boundary(kind, start, steps=max_steps, step=step, base=base, geom=geom,
                                tol=tol, window=window, stop_after_growth=patience)
    curve = pts
    k = int(np.argmin([c.radius for c in curve]))
    if k == len(curve) - 1:
        raise LostCurve(f"{kind} trace ended before passing the tip")
    return curve[k], curve


def approach_ratios(curve: list[TonguePoint], kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Distance to the origin and the tangency ratio along a traced curve.

    The ratio is ``lambda2/lambda1`` for ``hom_w`` and ``lambda1/lambda2``
    for ``hom_v``.
    """
    r = np.array([c.radius for c in curve])
    if kind == "hom_w":
        q = np.array([c.lambda2 / c.lambda1 for c in curve])
    else:
        q = np.array([c.lambda1 / c.lambda2 for c in curve])
    return r, q


def ratio_decreases_toward_origin(curve: list[TonguePoint], kind: str) -> bool:
    """True when, ordered by decreasing distance to the origin, the tangency ratio decreases.

    Only the part of the curve that actually approaches the origin (the
    leading run of decreasing radius) is used.
    """
    r, q = approach_ratios(curve, kind)
    n = 1
    while n < len(r) and r[n] < r[n - 1]:
        n += 1
    if n < 3:
        return False
    return bool(np.all(np.diff(q[:n]) < 0))


# ---------------------------------------------------------------------------
# codimension-two points


@dataclass
class Codim2Point:
    point: TonguePoint
    residual_v: float
    residual_w: float
    loop_v: np.ndarray = field(repr=False)
    loop_w: np.ndarray = field(repr=False)
    linking: int | None = None


def _polyline_intersections(A: np.ndarray, B: np.ndarray) -> list[np.ndarray]:
    out = []
    for i in range(len(A) - 1):
        p, r = A[i], A[i + 1] - A[i]
        for j in range(len(B) - 1):
            q, s = B[j], B[j + 1] - B[j]
            den = r[0] * s[1] - r[1] * s[0]
            if den == 0:
                continue
            t = ((q - p)[0] * s[1] - (q - p)[1] * s[0]) / den
            u = ((q - p)[0] * r[1] - (q - p)[1] * r[0]) / den
            if 0 <= t <= 1 and 0 <= u <= 1:
                out.append(p + t * r)
    return out


def _both(base, z, geom):
    l1, l2 = np.exp(z)
    q = base.with_(lambda1=float(l1), lambda2=float(l2))
    return np.array([hom_v_distance(q, geom), hom_w_distance(q, geom)])


@dataclass
class _LoopOrbit:
    eq: np.ndarray
    x0: np.ndarray
    sign: float
    period: float
    end: np.ndarray
    opts: IntegratorOptions

    def sample(self, p: ModelParams, times: np.ndarray) -> np.ndarray:
        tr, _ = integrate(p, self.x0, (0.0, self.sign * self.period), self.opts,
                          t_eval=self.sign * times, check_sphere=False)
        return np.vstack([self.eq, tr.x, self.end])


def _loop_orbits(p: ModelParams, t_max: float, close_radius: float) -> list[_LoopOrbit]:
    out = []
    for label, eqx, direction, sgn in (("v", V, "unstable", 1.0), ("w", W, "stable", -1.0)):
        x0 = _shot(p, label, direction)
        # the seed sits inside the ball, so the first entering crossing is the return
        ret = EventSpec.ball(eqx, close_radius, -1 if sgn > 0 else 1, 1, "return")
        opts = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, max_step=0.5, renormalize=sgn < 0,
                                 max_time=t_max)
        _, ev = integrate(p, x0, (0.0, sgn * t_max), opts, [ret], store_steps=False, check_sphere=False)
        if not ev:
            raise NoConvergence(f"orbit of {label} did not return within t = {t_max}")
        out.append(_LoopOrbit(np.asarray(eqx, float), x0, sgn, abs(ev[0].t), ev[0].x, opts))
    return out


def homoclinic_loops(p: ModelParams, t_max: float = 400.0, close_radius: float = 1e-4,
                     dt: float = 0.005) -> tuple[np.ndarray, np.ndarray]:
    """Closed homoclinic loops of ``v`` and ``w`` at a codimension-two parameter.

    The loop of ``v`` follows the upper branch of W^u(v) forward until it is
    back within ``close_radius`` of ``v``; the loop of ``w`` follows W^s(w)
    backward until it is back near ``w``.  Both are closed through their
    equilibrium and sampled uniformly in time with step ``dt``.
    """
    ov, ow = _loop_orbits(p, t_max, close_radius)
    return ov.sample(p, np.arange(0.0, ov.period, dt)), ow.sample(p, np.arange(0.0, ow.period, dt))


def _subdivide(times: np.ndarray, period: float, ratios: np.ndarray, separation: float) -> np.ndarray:
    # polyline segment k + 1 joins times[k] and times[k + 1] (times[n] = period)
    knots = np.append(times, period)
    r = ratios[1:len(knots)]
    extra = []
    for k in np.nonzero(r <= 1.2 * separation)[0]:
        m = int(math.ceil(1.5 * separation / max(r[k], 1e-3)))
        extra.append(np.linspace(knots[k], knots[k + 1], m + 1)[1:-1])
    if not extra:
        return times
    return np.unique(np.concatenate([times] + extra))


def loop_linking(p: ModelParams, t_max: float = 400.0, close_radius: float = 1e-4, dt: float = 0.005,
                 separation: float = 10.0, max_refine: int = 8, method: str = "auto"
                 ) -> tuple[int, np.ndarray, np.ndarray]:
    """Linking number of the two homoclinic loops at a codimension-two parameter.

    The loops are sampled uniformly in time, then resampled more finely
    wherever a segment is not ``separation`` times shorter than its
    distance to the other loop (measured after stereographic projection).
    Raises CurvesTooClose if that cannot be achieved in ``max_refine``
    rounds.  ``method`` is passed to ``linking_number``.
    """
    orbits = _loop_orbits(p, t_max, close_radius)
    times = [np.arange(0.0, o.period, dt) for o in orbits]
    loops = [o.sample(p, t) for o, t in zip(orbits, times)]
    pole = projection_pole(*loops)
    for _ in range(max_refine):
        A, B = stereographic(loops[0], pole), stereographic(loops[1], pole)
        ra, rb = separation_ratios(np.vstack([A, A[:1]]), np.vstack([B, B[:1]]))
        if min(ra.min(), rb.min()) > separation:
            break
        new = [_subdivide(t, o.period, r, separation) for t, o, r in zip(times, orbits, (ra, rb))]
        if all(len(n) == len(t) for n, t in zip(new, times)):
            break
        times = new
        loops = [o.sample(p, t) for o, t in zip(orbits, times)]
    A, B = stereographic(loops[0], pole), stereographic(loops[1], pole)
    return linking_number(A, B, separation, method=method), loops[0], loops[1]


def find_codim2_points(hom_v_curves: list[list[TonguePoint]], hom_w_curves: list[list[TonguePoint]],
                       base: ModelParams | None = None, geom: SectionGeometry | None = None,
                       tol: float = 1e-10, max_iter: int = 30, with_linking: bool = True) -> list[Codim2Point]:
    """Intersections of traced hom_v and hom_w curves, polished by 2D Newton on both distances.

    The polish goes well below the residual needed to call a point
    codimension-two: the loops are extracted by shooting, and a small
    homoclinic defect near the origin makes them miss the return ball.
    """
    base = base or ModelParams()
    found: list[Codim2Point] = []
    for cv in hom_v_curves:
        A = np.array([_log((c.lambda1, c.lambda2)) for c in cv])
        for cw in hom_w_curves:
            B = np.array([_log((c.lambda1, c.lambda2)) for c in cw])
            for z in _polyline_intersections(A, B):
                try:
                    z, F = _newton2(base, z, geom, tol, max_iter)
                except NumericalFailure:
                    continue
                l1, l2 = (float(v) for v in np.exp(z))
                if any(abs(math.log(f.point.lambda1 / l1)) + abs(math.log(f.point.lambda2 / l2)) < 1e-6
                       for f in found):
                    continue
                q = base.with_(lambda1=l1, lambda2=l2)
                pt = TonguePoint("codim2", l1, l2, float(np.max(np.abs(F))))
                c2 = Codim2Point(pt, float(abs(F[0])), float(abs(F[1])), np.zeros((0, 4)), np.zeros((0, 4)))
                if with_linking:
                    try:
                        c2.linking, c2.loop_v, c2.loop_w = loop_linking(q)
                    except NumericalFailure:
                        c2.linking = None
                found.append(c2)
    return sorted(found, key=lambda c: -c.point.radius)


def _newton2(base, z, geom, tol, max_iter, h=1e-6):
    F = _both(base, z, geom)
    for _ in range(max_iter):
        if np.max(np.abs(F)) < tol:
            return z, F
        J = np.empty((2, 2))
        for k in range(2):
            dz = np.zeros(2)
            dz[k] = h
            J[:, k] = (_both(base, z + dz, geom) - F) / h
        step = np.linalg.solve(J, -F)
        lam = 1.0
        while lam > 1e-3:
            zn = z + lam * step
            Fn = _both(base, zn, geom)
            if np.max(np.abs(Fn)) < np.max(np.abs(F)):
                break
            lam *= 0.5
        else:
            raise NoConvergence("Newton line search failed")
        z, F = zn, Fn
    if np.max(np.abs(F)) < tol:
        return z, F
    raise NoConvergence("Newton did not converge")
