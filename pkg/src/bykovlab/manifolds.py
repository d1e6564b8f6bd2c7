"""Invariant manifolds of the saddle-foci in the full flow.

One-dimensional manifolds are shot along the real eigenvector, two-dimensional
ones are represented by a closed loop of seeds in the complex eigenplane and
followed to a cross-section.  Stable manifolds are traced with the
time-reversed field.  On top of the traces sit the connection, tangency and
linking diagnostics.

Section names used throughout:

``I_v_in``   wall of the block around ``v`` (orbits enter here)
``O_v_out``  top of the block around ``v``
``I_w_in``   top of the block around ``w``
``O_w_out``  wall of the block around ``w``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from ._backend import kernels
from .errors import (ConfigError, CurvesTooClose, EscapedSphere, FoldNotFound, NoConvergence, NoReturn,
                     NumericalFailure, PartialCurve)
from .integrator import EventSpec, IntegratorOptions, Trajectory, flow_to_event, integrate
from .model import Equilibrium, ModelParams, equilibria, jacobian
from .sections import CylinderChart, SectionGeometry, wrap

TRACE_OPTIONS = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, max_step=0.5)

# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class Section:
    """A wall or top of one of the blocks, with the forward-time crossing direction."""

    name: str
    chart: CylinderChart
    kind: str
    direction: int
    occurrence: int = 1

    @property
    def event(self) -> EventSpec:
        if self.kind == "wall":
            return self.chart.wall_event(self.direction, 1, self.name)
        return self.chart.top_event(self.direction, 1, self.name)

    def coords(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Chart coordinates ``(angle, height)`` on a wall, ``(angle, radius)`` on a top."""
        if self.kind == "wall":
            w = self.chart.to_wall(X)
            return w.x, w.y
        t = self.chart.to_top(X)
        return t.varphi, t.r

    def state(self, x, y) -> np.ndarray:
        if self.kind == "wall":
            return self.chart.wall_state(x, y)
        return self.chart.top_state(y, x)

    def with_occurrence(self, k: int) -> "Section":
        return Section(self.name, self.chart, self.kind, self.direction, k)


def section(geom: SectionGeometry, name: str, occurrence: int = 1) -> Section:
    """Named section of ``geom``; see the module docstring for the names."""
    table = {
        "I_v_in": (geom.chart_v, "wall", -1),
        "O_v_out": (geom.chart_v, "top", +1),
        "I_w_in": (geom.chart_w, "top", -1),
        "O_w_out": (geom.chart_w, "wall", +1),
    }
    if name not in table:
        raise ConfigError(f"unknown section {name!r}; expected one of {sorted(table)}")
    chart, kind, d = table[name]
    return Section(name, chart, kind, d, occurrence)


def _equilibrium(eq, p: ModelParams) -> Equilibrium:
    if isinstance(eq, Equilibrium):
        return eq
    for e in equilibria(p):
        if e.label == eq:
            return e
    raise ConfigError(f"unknown equilibrium {eq!r}")


def _other(eq: Equilibrium, p: ModelParams) -> Equilibrium:
    return next(e for e in equilibria(p) if e.label != eq.label)


def _direction_sign(direction: str) -> float:
    if direction not in ("stable", "unstable"):
        raise ConfigError("direction must be 'stable' or 'unstable'")
    return 1.0 if direction == "unstable" else -1.0


def eigen_directions(p: ModelParams, eq: Equilibrium, direction: str) -> np.ndarray:
    """Orthonormal tangent basis of the requested eigenspace at ``eq`` (columns).

    The radial eigenvector (parallel to the equilibrium itself) is excluded.
    """
    s = _direction_sign(direction)
    x = eq.location
    vals, vecs = np.linalg.eig(jacobian(p, x))
    keep = []
    for k in range(4):
        v = vecs[:, k]
        radial = abs(abs(np.vdot(v, x)) / np.linalg.norm(v) - 1.0) < 1e-8
        if not radial and s * vals[k].real > 0:
            keep.append(k)
    if not keep:
        raise ConfigError(f"{eq.label} has no {direction} tangent eigenspace")
    cols = []
    for k in keep:
        v = vecs[:, k]
        cols.extend([v.real, v.imag] if abs(vals[k].imag) > 0 else [v.real])
    A = np.array([c - (c @ x) * x for c in cols if np.linalg.norm(c) > 1e-12]).T
    q, r = np.linalg.qr(A)
    rank = int(np.sum(np.abs(np.diag(r)) > 1e-10))
    return q[:, :rank]


def _onto_sphere(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# traces


@dataclass
class SectionCurve:
    """Ordered crossing points of a seed family with one section."""

    section: str
    param: np.ndarray
    x: np.ndarray
    y: np.ndarray
    states: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    missing: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.x)

    @property
    def complete(self) -> bool:
        return len(self.missing) == 0

    @property
    def closed(self) -> bool:
        """All seeds crossed and the unwrapped angle returns to its start after one turn."""
        if not self.complete or len(self.x) < 3:
            return False
        xu = np.unwrap(np.append(self.x, self.x[0]))
        turns = (xu[-1] - xu[0]) / (2 * math.pi)
        return abs(turns - round(turns)) < 1e-9 and abs(round(turns)) == 1

    def unwrapped(self) -> tuple[np.ndarray, np.ndarray]:
        """Angle unwrapped along the seed order, oriented to increase."""
        xu = np.unwrap(self.x)
        return xu, self.y.copy()

    def height_at(self, x: float) -> float:
        """Height of a closed graph-like curve at angle ``x`` (periodic cubic interpolation)."""
        from scipy.interpolate import CubicSpline

        xu, y = self.unwrapped()
        if xu[-1] < xu[0]:
            xu, y = xu[::-1], y[::-1]
        if np.any(np.diff(xu) <= 0):
            raise NumericalFailure(f"{self.section} curve is not a graph over the angle")
        xs = np.append(xu, xu[0] + 2 * math.pi)
        ys = np.append(y, y[0])
        cs = CubicSpline(xs, ys, bc_type="periodic")
        return float(cs(xu[0] + (x - xu[0]) % (2 * math.pi)))


@dataclass
class Branch:
    """One side of a 1D manifold."""

    sign: int
    trajectory: Trajectory = field(repr=False)
    reached: bool
    t_reach: float
    min_distance: float
    circle_deviation: float


@dataclass
class ManifoldTrace:
    source: Equilibrium
    dimension: int
    direction: str
    seeds: np.ndarray = field(repr=False)
    delta0: float
    branches: list[Branch] = field(default_factory=list)
    section_curves: dict[str, SectionCurve] = field(default_factory=dict)


def _check_delta(delta0: float) -> None:
    if not 1e-7 <= delta0 <= 1e-4:
        raise ConfigError("seed offset delta0 must lie in [1e-7, 1e-4]")


def trace_1d(eq, direction: str, p: ModelParams, delta0: float = 1e-7, t_max: float = 200.0,
             target_tol: float = 1e-3, opts: IntegratorOptions | None = None,
             require_connection: bool = False) -> ManifoldTrace:
    """Shoot both signs of the 1D manifold of ``eq`` toward the other equilibrium.

    A branch counts as connecting when it enters the ``target_tol`` ball of
    the target and keeps approaching it.  Stable manifolds are followed in
    reversed time.  With ``require_connection`` a branch that never arrives
    raises NoConvergence.
    """
    _check_delta(delta0)
    eq = _equilibrium(eq, p)
    E = eigen_directions(p, eq, direction)
    if E.shape[1] != 1:
        raise ConfigError(f"{eq.label} has a {E.shape[1]}D {direction} manifold, not 1D")
    e = E[:, 0] * np.sign(E[2, 0] if abs(E[2, 0]) > 1e-12 else 1.0)
    target = _other(eq, p).location
    backward = direction == "stable"
    opts = opts or IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, max_step=0.1, renormalize=backward)
    # distance to the target shrinks in the direction of integration
    arrive = EventSpec.ball(target, target_tol, 1 if backward else -1, 1, "arrive")
    seeds, branches = [], []
    for sgn in (1, -1):
        x0 = _onto_sphere(eq.location + sgn * delta0 * e)
        seeds.append(x0)
        span = (0.0, -t_max if backward else t_max)
        traj, ev = integrate(p, x0, span, opts, [arrive], check_sphere=False)
        if traj.drift_max > 1e-6:
            raise EscapedSphere(f"branch {sgn:+d} drifted {traj.drift_max:.2e} off the sphere")
        d = np.linalg.norm(traj.x - target, axis=1)
        reached = bool(ev)
        if reached:
            # keep going briefly to confirm the linear-regime decay
            tail, _ = integrate(p, traj.end, (0.0, -5.0 if backward else 5.0), opts, check_sphere=False)
            dt = np.linalg.norm(tail.x - target, axis=1)
            reached = bool(dt[-1] < dt[0])
        if require_connection and not reached:
            raise NoConvergence(f"branch {sgn:+d} of W^{direction[0]}({eq.label}) did not reach the target")
        branches.append(Branch(sgn, traj, reached, float(abs(ev[0].t)) if ev else math.inf,
                               float(d.min()), float(np.abs(traj.x[:, :2]).max())))
    return ManifoldTrace(eq, 1, direction, np.array(seeds), delta0, branches)


def _plane_basis(E: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of the eigenplane spanned by ``E``, aligned with (e1, e2) when possible."""
    u = E @ (E.T @ np.array([1.0, 0, 0, 0]))
    if np.linalg.norm(u) < 1e-8:
        return E[:, 0], E[:, 1]
    u /= np.linalg.norm(u)
    vv = E @ (E.T @ np.array([0, 1.0, 0, 0]))
    vv -= (vv @ u) * u
    return u, vv / np.linalg.norm(vv)


def seed_loop(p: ModelParams, eq, direction: str, n: int = 256, delta0: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Closed loop of ``n`` seeds in the 2D eigenplane of ``eq``; returns ``(angles, states)``."""
    _check_delta(delta0)
    if n < 128:
        raise ConfigError("a 2D seed loop needs at least 128 points")
    eq = _equilibrium(eq, p)
    E = eigen_directions(p, eq, direction)
    if E.shape[1] != 2:
        raise ConfigError(f"{eq.label} has a {E.shape[1]}D {direction} manifold, not 2D")
    u, vv = _plane_basis(E)
    a = 2 * math.pi * np.arange(n) / n
    X = eq.location[None, :] + delta0 * (np.cos(a)[:, None] * u + np.sin(a)[:, None] * vv)
    return a, _onto_sphere(X)


def flow_seeds(p: ModelParams, states: np.ndarray, sec: Section, backward: bool = False,
               t_max: float = 300.0, opts: IntegratorOptions | None = None,
               strict: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flow each state to ``sec``; returns ``(hit_mask, crossing_states, times)``."""
    opts = opts or (TRACE_OPTIONS if not backward else
                    IntegratorOptions(rel_tol=1e-11, abs_tol=1e-14, max_step=0.5, renormalize=True))
    n = len(states)
    ok = np.zeros(n, bool)
    Xs = np.full((n, 4), np.nan)
    ts = np.full(n, np.nan)
    for i, x0 in enumerate(states):
        try:
            _, t, X = flow_to_event(p, x0, sec.event, t_max, opts, backward=backward, occurrence=sec.occurrence)
        except (NoReturn, NumericalFailure):
            if strict:
                raise
            continue
        ok[i], Xs[i], ts[i] = True, X, t
    return ok, Xs, ts


def trace_2d_on_section(eq, direction: str, p: ModelParams, sec: Section, n_seeds: int = 256,
                        delta0: float = 1e-6, t_max: float = 300.0, opts: IntegratorOptions | None = None,
                        strict: bool = False) -> SectionCurve:
    """Integrate the seed loop of the 2D manifold of ``eq`` to ``sec``.

    Stable manifolds are followed in reversed time.  Seeds that never cross
    are listed in ``missing``; with ``strict`` they raise PartialCurve.
    """
    a, S = seed_loop(p, eq, direction, n_seeds, delta0)
    ok, Xs, ts = flow_seeds(p, S, sec, backward=(direction == "stable"), t_max=t_max, opts=opts)
    if strict and not ok.all():
        raise PartialCurve(f"{int((~ok).sum())} of {n_seeds} seeds never reached {sec.name}")
    x, y = sec.coords(Xs[ok])
    return SectionCurve(sec.name, a[ok], np.asarray(x), np.asarray(y), Xs[ok], ts[ok], a[~ok])


def trace_2d(eq, direction: str, p: ModelParams, sections: list[Section], n_seeds: int = 256,
             delta0: float = 1e-6) -> ManifoldTrace:
    eqo = _equilibrium(eq, p)
    a, S = seed_loop(p, eqo, direction, n_seeds, delta0)
    tr = ManifoldTrace(eqo, 2, direction, S, delta0)
    for sec in sections:
        tr.section_curves[sec.name] = trace_2d_on_section(eqo, direction, p, sec, n_seeds, delta0)
    return tr


# ---------------------------------------------------------------------------
# stable heights by bisection


def _exit_side(p: ModelParams, x0: np.ndarray, geom: SectionGeometry, opts: IntegratorOptions,
               t_max: float) -> int:
    """+1 if the orbit of ``x0`` leaves the block of ``v`` through its top, -1 through the bottom."""
    up = geom.chart_v.top_event(+1, 1, "up")
    down = geom.chart_v.top_event(-1, 1, "down", sign=-1.0)
    i, _, _ = flow_to_event(p, x0, up, t_max, opts, stops=[down])
    return 1 if i == 0 else -1


def stable_height(p: ModelParams, chart: CylinderChart, x: float, geom: SectionGeometry | None = None,
                  guess: float = 0.0, width: float = 0.02, tol: float = 1e-13, t_max: float = 300.0,
                  opts: IntegratorOptions | None = None) -> float:
    """Height of W^s(v) on the wall of ``chart`` at angle ``x``.

    Points above W^s(v) leave the block of ``v`` through its top, points
    below through its bottom; the bracket around ``guess`` is widened until
    the exit side flips and then bisected down to ``tol``.
    """
    geom = geom or SectionGeometry()
    opts = opts or TRACE_OPTIONS

    def side(y):
        return _exit_side(p, chart.wall_state(x, y), geom, opts, t_max)

    # an asymmetric bracket keeps the midpoints off invariant planes such as x3 = 0
    lo, hi = guess - width, guess + 1.3 * width
    for _ in range(8):
        if side(lo) < 0 and side(hi) > 0:
            break
        width *= 2
        lo, hi = guess - width, guess + 1.3 * width
        if width > 1.0:
            break
    if not (side(lo) < 0 < side(hi)):
        raise NumericalFailure(f"W^s(v) not bracketed at angle {x}")
    while hi - lo > tol:
        m = 0.5 * (lo + hi)
        if side(m) > 0:
            hi = m
        else:
            lo = m
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# transverse connections


@dataclass
class Crossing:
    x: float
    y: float
    angle: float
    certified: bool
    param_u: float
    param_s: float


def _polyline(c: SectionCurve) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xu = np.unwrap(np.append(c.x, c.x[0]))
    y = np.append(c.y, c.y[0])
    par = np.append(c.param, c.param[0] + 2 * math.pi)
    return xu, y, par


def curve_crossings(cu: SectionCurve, cs: SectionCurve, aspect: float = 1.0,
                    angle_tol: float = 1e-3) -> list[Crossing]:
    """Transverse intersections of two closed section curves on a cylinder chart.

    ``aspect`` is the ratio of metric scales (height unit over angle unit),
    so that crossing angles are measured in the ambient metric.
    """
    xa, ya, pa = _polyline(cu)
    xb0, yb, pb = _polyline(cs)
    out = []
    for shift in (-4 * math.pi, -2 * math.pi, 0.0, 2 * math.pi, 4 * math.pi):
        xb = xb0 + shift
        # vectorised segment-pair intersection
        P, R = np.stack([xa[:-1], ya[:-1]], 1), np.stack([np.diff(xa), np.diff(ya)], 1)
        Q, S = np.stack([xb[:-1], yb[:-1]], 1), np.stack([np.diff(xb), np.diff(yb)], 1)
        lo = np.maximum(np.minimum(xa[:-1], xa[1:])[:, None], np.minimum(xb[:-1], xb[1:])[None, :])
        hi = np.minimum(np.maximum(xa[:-1], xa[1:])[:, None], np.maximum(xb[:-1], xb[1:])[None, :])
        ii, jj = np.nonzero(lo <= hi)
        for i, j in zip(ii, jj):
            den = R[i, 0] * S[j, 1] - R[i, 1] * S[j, 0]
            if den == 0.0:
                continue
            d = Q[j] - P[i]
            t = (d[0] * S[j, 1] - d[1] * S[j, 0]) / den
            u = (d[0] * R[i, 1] - d[1] * R[i, 0]) / den
            if 0.0 <= t < 1.0 and 0.0 <= u < 1.0:
                pt = P[i] + t * R[i]
                ta = np.array([R[i, 0], aspect * R[i, 1]])
                tb = np.array([S[j, 0], aspect * S[j, 1]])
                cosang = abs(ta @ tb) / (np.linalg.norm(ta) * np.linalg.norm(tb))
                ang = float(math.acos(min(1.0, cosang)))
                out.append(Crossing(float(wrap(pt[0])), float(pt[1]), ang, ang >= angle_tol,
                                    float(pa[i] + t * (pa[i + 1] - pa[i])),
                                    float(pb[j] + u * (pb[j + 1] - pb[j]))))
    # the shifted copies can report the same point twice
    uniq: list[Crossing] = []
    for c in sorted(out, key=lambda c: c.x):
        if not any(abs(wrap(c.x - d.x)) < 1e-9 and abs(c.y - d.y) < 1e-9 for d in uniq):
            uniq.append(c)
    return uniq


def gamma1_pairs(crossings: list[Crossing], tol: float = 1e-3) -> list[tuple[int, int]]:
    """Pairs of crossings exchanged by gamma1, which turns the wall by half a revolution."""
    pairs, used = [], set()
    for i, c in enumerate(crossings):
        if i in used:
            continue
        for j, d in enumerate(crossings):
            if j != i and j not in used and abs(wrap(c.x + math.pi - d.x)) < tol and abs(c.y - d.y) < tol:
                pairs.append((i, j))
                used.update((i, j))
                break
    return pairs


@dataclass
class ConnectionReport:
    crossings: list[Crossing]
    unstable_curve: SectionCurve = field(repr=False)
    stable_curve: SectionCurve = field(repr=False)

    @property
    def certified(self) -> list[Crossing]:
        return [c for c in self.crossings if c.certified]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return gamma1_pairs(self.crossings)

    @property
    def even(self) -> bool:
        return len(self.crossings) % 2 == 0


def detect_transverse_connections(p: ModelParams, geom: SectionGeometry | None = None, n_seeds: int = 256,
                                  delta0: float = 1e-6, angle_tol: float = 1e-3) -> ConnectionReport:
    """Intersect W^u(w) and W^s(v) on the entry wall of ``v``.

    Each crossing is a heteroclinic orbit from ``w`` to ``v``; it is certified
    transverse when the angle between the two curves is at least ``angle_tol``.
    """
    geom = geom or SectionGeometry()
    sec = section(geom, "I_v_in")
    cu = trace_2d_on_section("w", "unstable", p, sec, n_seeds, delta0)
    cs = trace_2d_on_section("v", "stable", p, sec, n_seeds, delta0)
    aspect = geom.chart_height / geom.chart_radius
    return ConnectionReport(curve_crossings(cu, cs, aspect, angle_tol), cu, cs)


# ---------------------------------------------------------------------------
# heteroclinic tangencies


@dataclass
class FoldResult:
    lambda1: float
    distance: float
    x_fold: float
    y_fold: float
    stable_height: float
    seed_angle: float


def _unstable_w_to(p: ModelParams, a: float, sec: Section, delta0: float) -> np.ndarray:
    u, vv = _plane_basis(eigen_directions(p, _equilibrium("w", p), "unstable"))
    x0 = _onto_sphere(np.array([0, 0, 0, -1.0]) + delta0 * (math.cos(a) * u + math.sin(a) * vv))
    _, _, X = flow_to_event(p, x0, sec.event, 400.0, TRACE_OPTIONS, occurrence=sec.occurrence)
    return X


def fold_distance(p: ModelParams, geom: SectionGeometry | None = None, n_seeds: int = 128,
                  delta0: float = 1e-6, xatol: float = 1e-11) -> FoldResult:
    """Signed distance from the fold of the W^u(w) helix on ``O_w_out`` to W^s(v).

    The arc of W^u(w) that lies above W^s(v) on ``I_v_in`` passes ``v`` along
    the upper connection and reaches the exit wall of ``w`` as a curve whose
    ends wind toward the circle W^u_loc(w).  Its highest point (the fold) is
    located by a discrete maximum over the seed loop followed by a bounded
    scalar search in the seed angle.  A zero of the returned distance is a
    heteroclinic tangency.
    """
    geom = geom or SectionGeometry()
    if p.lambda2 != 0.0:
        raise ConfigError("fold distances are defined for lambda2 = 0")
    s_in = section(geom, "I_v_in")
    s_out = section(geom, "O_w_out", occurrence=2)
    cu = trace_2d_on_section("w", "unstable", p, s_in, n_seeds, delta0, strict=True)
    cs = trace_2d_on_section("v", "stable", p, s_in, n_seeds, delta0, strict=True)
    gap = np.array([yy - cs.height_at(xx) for xx, yy in zip(cu.x, cu.y)])
    if gap.max() <= 0:
        raise FoldNotFound("W^u(w) never rises above W^s(v)")
    i0 = int(np.argmax(gap))
    da = 2 * math.pi / n_seeds

    def neg_height(a):
        return -float(geom.chart_w.to_wall(_unstable_w_to(p, a, s_out, delta0)).y)

    # discrete maximum over seeds around the highest point of the arc
    heights = {}
    lo, hi = -2, 2
    for _ in range(n_seeds // 4):
        for k in range(lo, hi + 1):
            if k not in heights:
                heights[k] = -neg_height(cu.param[i0] + k * da)
        k = max(heights, key=heights.get)
        if lo < k < hi:
            break
        lo, hi = (lo - 2, hi) if k == lo else (lo, hi + 2)
    else:
        raise FoldNotFound("no interior height maximum along the arc")
    a_c = cu.param[i0] + k * da
    res = minimize_scalar(neg_height, bounds=(a_c - da, a_c + da), method="bounded",
                          options={"xatol": xatol})
    Xf = _unstable_w_to(p, res.x, s_out, delta0)
    wp = geom.chart_w.to_wall(Xf)
    xf, yf = float(wp.x), float(wp.y)
    c_out = trace_2d_on_section("v", "stable", p, section(geom, "O_w_out"), n_seeds, delta0)
    sh = stable_height(p, geom.chart_w, xf, geom, guess=c_out.height_at(xf), width=1e-4)
    return FoldResult(p.lambda1, yf - sh, xf, yf, sh, float(res.x))


@dataclass
class TangencyReport:
    samples: list[FoldResult]
    brackets: list[tuple[float, float]]
    refined: list[FoldResult] = field(default_factory=list)

    @property
    def spacings(self) -> list[float]:
        mids = sorted(0.5 * (a + b) for a, b in self.brackets)
        return list(np.diff(mids))


def detect_tangency(lambda1_grid, p: ModelParams | None = None, geom: SectionGeometry | None = None,
                    n_seeds: int = 128, refine: bool = True, tol: float = 1e-6,
                    max_bisections: int = 60) -> TangencyReport:
    """Fold-distance sign changes along ``lambda1_grid`` at ``lambda2 = 0``.

    Each bracket is refined by bisection in ``lambda1`` until the fold
    distance drops below ``tol``.
    """
    base = (p or ModelParams()).with_(lambda2=0.0)
    grid = np.sort(np.asarray(lambda1_grid, float))
    if grid[0] <= 0:
        raise ConfigError("lambda1 grid must be positive")
    samples = [fold_distance(base.with_(lambda1=float(l)), geom, n_seeds) for l in grid]
    brackets = [(samples[i].lambda1, samples[i + 1].lambda1) for i in range(len(samples) - 1)
                if np.sign(samples[i].distance) != np.sign(samples[i + 1].distance)]
    rep = TangencyReport(samples, brackets)
    if refine:
        for lo, hi in brackets:
            flo = fold_distance(base.with_(lambda1=lo), geom, n_seeds)
            best = flo
            for _ in range(max_bisections):
                mid = 0.5 * (lo + hi)
                fm = fold_distance(base.with_(lambda1=mid), geom, n_seeds)
                best = fm
                if abs(fm.distance) < tol:
                    break
                if np.sign(fm.distance) == np.sign(flo.distance):
                    lo, flo = mid, fm
                else:
                    hi = mid
            rep.refined.append(best)
    return rep


# ---------------------------------------------------------------------------
# linking numbers


def _closed(c) -> np.ndarray:
    c = np.asarray(c, float)
    if c.ndim != 2 or c.shape[1] != 3 or len(c) < 3:
        raise ConfigError("curves must be (n, 3) arrays with n >= 3")
    if np.linalg.norm(c[0] - c[-1]) > 0:
        c = np.vstack([c, c[:1]])
    return c


def separation_ratios(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment ratio of the distance to the other curve over the segment length.

    Distances are between segment midpoints.  The smallest entry over both
    arrays equals the minimum over all segment pairs of distance divided by
    the longer segment of the pair.
    """
    ma, la = 0.5 * (A[1:] + A[:-1]), np.linalg.norm(np.diff(A, axis=0), axis=1)
    mb, lb = 0.5 * (B[1:] + B[:-1]), np.linalg.norm(np.diff(B, axis=0), axis=1)
    da, _ = cKDTree(mb).query(ma)
    db, _ = cKDTree(ma).query(mb)
    with np.errstate(divide="ignore"):
        return da / la, db / lb


def _check_separation(A: np.ndarray, B: np.ndarray, factor: float) -> float:
    ra, rb = separation_ratios(A, B)
    worst = float(min(ra.min(), rb.min()))
    if worst <= factor:
        raise CurvesTooClose(f"curves come within {worst:.2f} segment lengths (need > {factor})")
    return worst


def gauss_linking(curve_a, curve_b) -> float:
    """Gauss double sum over segment pairs of two closed polylines in R^3.

    Each pair contributes its exact signed solid angle, so the sum is an
    integer up to rounding for any two disjoint closed polygons.
    """
    A, B = _closed(curve_a), _closed(curve_b)
    return float(kernels.gauss_sum(np.ascontiguousarray(A), np.ascontiguousarray(B)))


def linking_number(curve_a, curve_b, separation: float = 10.0, residual_tol: float = 0.1,
                   method: str = "auto", max_pairs: float = 2e9, seed: int = 0) -> int:
    """Integer linking number of two disjoint closed polylines in R^3.

    Every pair of segments must be farther apart (midpoint distance) than
    ``separation`` times the longer of the two, otherwise CurvesTooClose.
    ``method`` is ``"gauss"`` (double sum, residual checked against
    ``residual_tol``), ``"crossings"`` (signed crossing count) or ``"auto"``,
    which uses the double sum unless it has more than ``max_pairs`` terms.
    ``seed`` picks the projection direction of the crossing count.
    """
    A, B = _closed(curve_a), _closed(curve_b)
    if method not in ("auto", "gauss", "crossings"):
        raise ConfigError(f"unknown linking method {method!r}")
    _check_separation(A, B, separation)
    if method == "crossings" or method == "auto" and (len(A) - 1) * (len(B) - 1) > max_pairs:
        return crossing_linking(A, B, seed)
    lk = gauss_linking(A, B)
    n = int(round(lk))
    if abs(lk - n) >= residual_tol:
        raise NumericalFailure(f"Gauss sum {lk:.4f} is not close to an integer")
    return n


def _projected_segments(C: np.ndarray, basis: np.ndarray):
    P = C @ basis
    a, b = P[:-1], P[1:]
    return a, b, 0.5 * (a[:, :2] + b[:, :2]), 0.5 * np.linalg.norm(b[:, :2] - a[:, :2], axis=1)


def _near_pairs(ca, ra, cb, rb) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs whose 2D bounding discs (centre, radius) overlap."""
    out_i, out_j = [], []
    ka = np.floor(np.log2(np.maximum(ra, 1e-300))).astype(int)
    kb = np.floor(np.log2(np.maximum(rb, 1e-300))).astype(int)
    groups_a = [(np.nonzero(ka == k)[0]) for k in np.unique(ka)]
    groups_b = [(np.nonzero(kb == k)[0]) for k in np.unique(kb)]
    trees_b = [(g, cKDTree(cb[g]), rb[g].max()) for g in groups_b]
    for ga in groups_a:
        ta, rmax_a = cKDTree(ca[ga]), ra[ga].max()
        for gb, tb, rmax_b in trees_b:
            m = ta.sparse_distance_matrix(tb, rmax_a + rmax_b, output_type="ndarray")
            if len(m):
                out_i.append(ga[m["i"]])
                out_j.append(gb[m["j"]])
    if not out_i:
        return np.zeros(0, int), np.zeros(0, int)
    return np.concatenate(out_i), np.concatenate(out_j)


def crossing_linking(curve_a, curve_b, seed: int = 0) -> int:
    """Linking number as the signed count of crossings of A over B in a generic projection.

    An exact integer for disjoint closed polygons, computed in roughly
    N log N time, so it scales to polylines far too long for the Gauss
    double sum.  The projection direction is drawn from ``seed``.
    """
    A, B = _closed(curve_a), _closed(curve_b)
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    a0, a1, ca, ra = _projected_segments(A, q)
    b0, b1, cb, rb = _projected_segments(B, q)
    i, j = _near_pairs(ca, ra, cb, rb)
    p, r = a0[i], a1[i] - a0[i]
    s0, s = b0[j], b1[j] - b0[j]
    den = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    ok = den != 0
    qp = s0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / den
        u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / den
    hit = ok & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
    ha = p[hit, 2] + t[hit] * r[hit, 2]
    hb = s0[hit, 2] + u[hit] * s[hit, 2]
    over = ha > hb
    return int(np.sum(np.sign(den[hit][over])))


def stereographic(points, pole) -> np.ndarray:
    """Project points of S^3 to R^3 from ``pole`` (which must not lie on the curve)."""
    X = np.asarray(points, float)
    p = np.asarray(pole, float) / np.linalg.norm(pole)
    q, _ = np.linalg.qr(np.hstack([p[:, None], np.eye(4)]))
    basis = q[:, 1:4].copy()
    # keep (pole, basis) positively oriented so linking signs agree across poles
    if np.linalg.det(np.column_stack([p, basis])) < 0:
        basis[:, 0] *= -1.0
    s = X @ p
    if np.any(1.0 - s < 1e-9):
        raise ConfigError("projection pole lies on the curve")
    return (X @ basis) / (1.0 - s)[:, None]


def projection_pole(*curves, n_candidates: int = 4096, seed: int = 0) -> np.ndarray:
    """Point of S^3 as far as possible from all given curves (deterministic candidate search)."""
    rng = np.random.default_rng(seed)
    C = _onto_sphere(rng.normal(size=(n_candidates, 4)))
    pts = np.vstack([np.asarray(c, float) for c in curves])
    sub = pts[:: max(1, len(pts) // 4000)]
    dmin = np.min(np.linalg.norm(C[:, None, :] - sub[None, :, :], axis=-1), axis=1)
    return C[int(np.argmax(dmin))]


def linking_on_sphere(loop_a, loop_b, separation: float = 10.0, method: str = "auto", seed: int = 0) -> int:
    """Linking number of two closed curves on S^3 via stereographic projection."""
    pole = projection_pole(loop_a, loop_b, seed=seed)
    return linking_number(stereographic(loop_a, pole), stereographic(loop_b, pole), separation,
                          method=method, seed=seed)
