"""Isolating blocks around v and w, the linearised local maps and the
horseshoe built from them.

Linearised units: each cylinder has radius 1 and height 2.  The wall is
parametrised by an angle ``x`` and a height ``y`` in [-1, 1], the top by a
radius ``r`` in [0, 1] and an angle.  ``CylinderChart`` places these
coordinates in the ambient space: the axis of both cylinders is the x3
direction (the real eigenvector) and the wall angle is ``atan2(x2, x1)``
(the plane of the complex pair).

Model return map on the upper wall of V::

    Psi = Psi_wv o Phi_w o Psi_vw o Phi_v,    Psi_vw = identity.

``Psi_wv`` is the flow-box transition from the exit wall of W to the entry
wall of V.  Once the 2D manifolds intersect transversely, the flow box
carries the W^s(v) segment on the W wall onto the circle y = 0 of the V
wall.  We therefore model it as a quarter turn in the normalised rectangle
coordinates ``(u, s) = (x / eps, y / tau)``, placed at angle ``rotation_wv``
on the V wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BelowN0, ConfigError, LeftDomain, NoPassage, OnStableManifold, TooFewSamples
from .integrator import EventSpec, Trajectory
from .model import Equilibrium, ModelParams, equilibria

TWO_PI = 2.0 * math.pi


def wrap(a):
    """Reduce angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


@dataclass(frozen=True)
class WallPoint:
    x: np.ndarray | float
    y: np.ndarray | float


@dataclass(frozen=True)
class TopPoint:
    r: np.ndarray | float
    varphi: np.ndarray | float


@dataclass(frozen=True)
class CylinderChart:
    """Ambient placement of a linearised cylinder around ``v`` (pole +1) or ``w`` (pole -1).

    Wall: ``x1^2 + x2^2 = radius^2``, height coordinate ``x3 / height``.
    Top: the plane ``x3 = +height``.
    """

    pole: float
    radius: float = 0.2
    height: float = 0.2

    def wall_state(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        x3 = self.height * y
        x4 = self.pole * np.sqrt(1.0 - self.radius**2 - x3**2)
        return np.stack([self.radius * np.cos(x), self.radius * np.sin(x), x3, x4], axis=-1)

    def top_state(self, r, varphi) -> np.ndarray:
        r, varphi = np.broadcast_arrays(np.asarray(r, float), np.asarray(varphi, float))
        rho = self.radius * r
        x4 = self.pole * np.sqrt(1.0 - rho**2 - self.height**2)
        return np.stack([rho * np.cos(varphi), rho * np.sin(varphi), np.full_like(rho, self.height), x4], axis=-1)

    def to_wall(self, X) -> WallPoint:
        X = np.asarray(X, float)
        return WallPoint(np.arctan2(X[..., 1], X[..., 0]), X[..., 2] / self.height)

    def to_top(self, X) -> TopPoint:
        X = np.asarray(X, float)
        return TopPoint(np.hypot(X[..., 0], X[..., 1]) / self.radius, np.arctan2(X[..., 1], X[..., 0]))

    def wall_event(self, direction: int, max_events: int = 1, name: str = "wall") -> EventSpec:
        return EventSpec.cylinder((0, 1), self.radius, direction, max_events, name)

    def top_event(self, direction: int, max_events: int = 1, name: str = "top", sign: float = 1.0) -> EventSpec:
        return EventSpec.plane([0, 0, 1.0, 0], sign * self.height, direction, max_events, name)

    def ball_event(self, direction: int = 1, max_events: int = 1, name: str = "leave") -> EventSpec:
        """Sphere around the pole that encloses the cylinder; crossing outward means leaving the block."""
        rad = 1.6 * math.hypot(self.radius, self.height)
        return EventSpec.ball([0, 0, 0, self.pole], rad, direction, max_events, name)


@dataclass(frozen=True)
class SectionGeometry:
    eps: float = 0.1
    tau: float = 0.5
    rotation_wv: float = 0.0
    chart_radius: float = 0.2
    chart_height: float = 0.2
    radius: float = 1.0
    height: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.eps < math.pi:
            raise ConfigError(f"eps must lie in (0, pi), got {self.eps}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if not (0.0 < self.chart_radius < 0.5 and 0.0 < self.chart_height < 0.5):
            raise ConfigError("chart radius and height must lie in (0, 0.5)")

    @property
    def chart_v(self) -> CylinderChart:
        return CylinderChart(1.0, self.chart_radius, self.chart_height)

    @property
    def chart_w(self) -> CylinderChart:
        return CylinderChart(-1.0, self.chart_radius, self.chart_height)

    @property
    def center_v(self) -> float:
        """Angular centre of the rectangle R_v on the V wall."""
        return float(wrap(self.rotation_wv))


def _eqs(eqs) -> tuple[Equilibrium, Equilibrium]:
    if isinstance(eqs, ModelParams):
        eqs = equilibria(eqs)
    d = {e.label: e for e in eqs}
    return d["v"], d["w"]


def phi_v(pt: WallPoint, eq: Equilibrium) -> TopPoint:
    """Local map from the entry wall of V to its top: ``(y^delta, x - ln y / E)``.

    Points on the lower wall (y < 0) go to the bottom disc; they are handled
    by reflecting y and the output is reported with negative radius.
    """
    x, y = np.asarray(pt.x, float), np.asarray(pt.y, float)
    if np.any(y == 0.0):
        raise OnStableManifold("y = 0 lies on the local stable manifold of v")
    if np.any(np.abs(y) > 1.0):
        raise LeftDomain("wall height outside [-1, 1]")
    s, ay = np.sign(y), np.abs(y)
    return TopPoint(s * ay**eq.delta, np.mod(x - np.log(ay) / eq.E, TWO_PI))


def phi_w(pt: TopPoint, eq: Equilibrium) -> WallPoint:
    """Local map from the entry top of W to its wall: ``(varphi - ln r / E, r^delta)``."""
    r, ph = np.asarray(pt.r, float), np.asarray(pt.varphi, float)
    if np.any(r == 0.0):
        raise OnStableManifold("r = 0 lies on the local stable manifold of w")
    if np.any(np.abs(r) > 1.0):
        raise LeftDomain("top radius outside [0, 1]")
    s, ar = np.sign(r), np.abs(r)
    return WallPoint(np.mod(ph - np.log(ar) / eq.E, TWO_PI), s * ar**eq.delta)


def eta(pt: WallPoint, eqs, unwrap: bool = False) -> WallPoint:
    """``Phi_w o Phi_v`` (the v-to-w transition is the identity).

    With ``unwrap`` the angle is returned as the real number ``x - K ln y``
    instead of modulo 2 pi.
    """
    ev, ew = _eqs(eqs)
    y = np.asarray(pt.y, float)
    if np.any(y == 0.0):
        raise OnStableManifold("y = 0 lies on the local stable manifold of v")
    if unwrap:
        ay = np.abs(y)
        K = (ev.C + ew.E) / (ev.E * ew.E)
        return WallPoint(np.asarray(pt.x, float) - K * np.log(ay), np.sign(y) * ay ** (ev.delta * ew.delta))
    return phi_w(phi_v(pt, ev), ew)


def psi_wv(pt: WallPoint, geom: SectionGeometry) -> WallPoint:
    """Flow-box transition from the W exit wall to the V entry wall (quarter turn)."""
    u = wrap(pt.x) / geom.eps
    s = np.asarray(pt.y, float) / geom.tau
    return WallPoint(wrap(geom.rotation_wv - geom.eps * s), geom.tau * u)


def first_return(pt: WallPoint, geom: SectionGeometry, eqs) -> WallPoint:
    """Model first-return map to the upper entry wall of V."""
    y = np.asarray(pt.y, float)
    if np.any(y <= 0.0) or np.any(y > 1.0):
        if np.any(y == 0.0):
            raise OnStableManifold("y = 0 lies on the local stable manifold of v")
        raise LeftDomain("first_return needs 0 < y <= 1")
    mid = eta(pt, eqs)
    if np.any(np.abs(wrap(mid.x)) > geom.eps * (1 + 1e-12)) or np.any(mid.y > geom.tau):
        raise LeftDomain("eta image leaves the rectangle R_w")
    return psi_wv(mid, geom)


def gain_K(eqs) -> float:
    ev, ew = _eqs(eqs)
    return (ev.C + ew.E) / (ev.E * ew.E)


@dataclass(frozen=True)
class StripBounds:
    n: int
    a_n: float
    b_n: float
    n0: int
    K: float

    @property
    def interval(self) -> tuple[float, float]:
        return math.exp(self.a_n), math.exp(self.b_n)


def first_strip(x0: float, geom: SectionGeometry, eqs) -> int:
    """Least n with ``exp(b_n) <= tau``."""
    K = gain_K(eqs)
    return max(0, math.ceil((geom.eps + x0 - K * math.log(geom.tau)) / TWO_PI - 1e-12))


def strip_bounds(n: int, x0: float, geom: SectionGeometry, eqs, p: ModelParams | None = None) -> StripBounds:
    """Log-height interval ``[a_n, b_n]`` of the strip whose eta-image returns to angle [-eps, eps].

    ``x0`` is the wall angle of the vertical segment.
    """
    K = gain_K(eqs)
    n0 = first_strip(x0, geom, eqs)
    if n < n0:
        raise BelowN0(f"n = {n} is below n0 = {n0}")
    return StripBounds(n, (-geom.eps - TWO_PI * n + x0) / K, (geom.eps - TWO_PI * n + x0) / K, n0, K)


@dataclass
class HorseshoeReport:
    valid: bool
    strips: list[StripBounds]
    transition_matrix: np.ndarray
    crossings: dict[int, dict] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def full_shift(self) -> bool:
        return self.valid and bool(np.all(self.transition_matrix == 1))

    @property
    def word_count_lower_bound(self) -> int:
        k = len(self.strips)
        return 2**k if self.full_shift and k >= 2 else 0

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "full_shift": self.full_shift,
            "strips": [vars(s) for s in self.strips],
            "transition_matrix": self.transition_matrix.tolist(),
            "crossings": {str(k): v for k, v in self.crossings.items()},
            "failures": self.failures,
            "word_count_lower_bound": self.word_count_lower_bound,
        }


def verify_horseshoe(geom: SectionGeometry, eqs, p: ModelParams | None = None,
                     n_range: Sequence[int] | None = None, samples: int = 400,
                     gap_tol: float = 1e-9) -> HorseshoeReport:
    """Check Conley-Moser crossing of the model return map on consecutive strips.

    The strip ``R_n`` is the part of ``R_v = [c - eps, c + eps] x (0, tau]``
    (``c`` = ``geom.center_v``) where ``ln y`` lies in ``[a_n(x), b_n(x)]``.
    Its horizontal boundaries are graphs over x and eta maps it onto R_w.
    For each n we map the four boundary curves and check:

    * the images of the vertical boundaries sweep the whole angle range
      [-eps, eps] of R_w;
    * after the transition, the horizontal boundaries land on the horizontal
      boundaries ``y = +-tau`` and the vertical boundaries stay inside the
      angle range of R_v.

    Then ``T[n, m] = 1`` when the image of R_n fully crosses R_m vertically.
    """
    c = geom.center_v
    eps, tau = geom.eps, geom.tau
    K = gain_K(eqs)
    n0 = first_strip(c + eps, geom, eqs)
    if n_range is None:
        n_range = range(n0, n0 + 4)
    n_range = list(n_range)
    k = len(n_range)
    failures: list[str] = []
    valid = True
    if (TWO_PI - 2.0 * eps) / K <= gap_tol:
        valid = False
        failures.append("strips overlap: eps too close to pi")
    for n in n_range:
        if n < n0:
            valid = False
            failures.append(f"strip {n} is below n0 = {n0}")

    xs = np.linspace(c - eps, c + eps, samples)
    a = lambda n, x: (-eps - TWO_PI * n + x) / K
    b = lambda n, x: (eps - TWO_PI * n + x) / K

    # Strips must be pairwise disjoint and sit inside (0, tau].
    for i, n in enumerate(n_range):
        if np.any(b(n, xs) > math.log(tau) + 1e-15):
            valid = False
            failures.append(f"strip {n} pokes above tau")
        for m in n_range[i + 1:]:
            lo, hi = (n, m) if n < m else (m, n)
            if np.any(b(hi, xs) >= a(lo, xs) - gap_tol):
                valid = False
                failures.append(f"strips {n} and {m} overlap")

    images = {}
    crossings: dict[int, dict] = {}
    for n in n_range:
        s = np.linspace(0.0, 1.0, samples)
        bottom = (xs, a(n, xs))
        top = (xs, b(n, xs))
        left = (np.full(samples, c - eps), a(n, c - eps) + s * (b(n, c - eps) - a(n, c - eps)))
        right = (np.full(samples, c + eps), a(n, c + eps) + s * (b(n, c + eps) - a(n, c + eps)))
        info = {}
        mid = {}
        for name, (bx, blog) in (("bottom", bottom), ("top", top), ("left", left), ("right", right)):
            mid[name] = eta(WallPoint(bx, np.exp(blog)), eqs)
        for name in ("left", "right"):
            ang = wrap(mid[name].x)
            info[f"{name}_covers_Rw"] = bool(ang.min() <= -eps + 1e-9 and ang.max() >= eps - 1e-9
                                             and np.all(np.abs(ang) <= eps + 1e-9))
        out = {name: psi_wv(mid[name], geom) for name in mid}
        info["horizontal_on_boundary"] = bool(
            np.allclose(np.abs(out["bottom"].y), tau, atol=1e-9)
            and np.allclose(np.abs(out["top"].y), tau, atol=1e-9)
            and np.sign(out["bottom"].y[0]) != np.sign(out["top"].y[0])
        )
        vert_ang = np.concatenate([wrap(out["left"].x - c), wrap(out["right"].x - c)])
        vert_y = np.concatenate([out["left"].y, out["right"].y])
        info["vertical_inside_Rv"] = bool(np.all(np.abs(vert_ang) <= eps))
        info["spans_height"] = bool(vert_y.min() <= 0.0 and vert_y.max() >= tau - 1e-9)
        info["angle_range"] = [float(vert_ang.min() + c), float(vert_ang.max() + c)]
        info["full_crossing"] = all(bool(v) for kk, v in info.items() if kk != "angle_range")
        crossings[n] = info
        images[n] = out

    T = np.zeros((k, k), dtype=int)
    for i, n in enumerate(n_range):
        if not crossings[n]["full_crossing"]:
            continue
        lo_x, hi_x = crossings[n]["angle_range"]
        for j, m in enumerate(n_range):
            # R_m's horizontal boundaries over the angular footprint of the image
            xm = np.linspace(lo_x, hi_x, 50)
            inside = np.all(np.exp(b(m, xm)) < tau) and lo_x >= c - eps and hi_x <= c + eps
            T[i, j] = int(bool(inside))
    return HorseshoeReport(valid, [strip_bounds(n, c + eps, geom, eqs) if n >= n0 else
                                   StripBounds(n, a(n, c + eps), b(n, c + eps), n0, K) for n in n_range],
                           T, crossings, failures)


# -- curve geometry ---------------------------------------------------------------

@dataclass(frozen=True)
class CurveClass:
    kind: str
    radial_monotone: bool
    angle_monotone: bool
    winding: float
    radial_limit: float

    def __str__(self) -> str:
        return self.kind


def _monotone(v: np.ndarray, tol: float) -> bool:
    d = np.diff(v)
    return bool(np.all(d >= -tol) or np.all(d <= tol))


def classify_curve(samples, domain: str, min_turns: float = 3.0, tol: float = 1e-6) -> CurveClass:
    """Label an ordered curve as Segment, Spiral (disc), Helix (cylinder) or Other.

    ``samples`` is an (N, 2) array of ``(angle, height)`` on a cylinder or
    ``(r, angle)`` on a disc.  Angles are unwrapped before testing.
    """
    pts = np.asarray(samples, float)
    if pts.ndim != 2 or pts.shape[0] < 50:
        raise TooFewSamples("classify_curve needs at least 50 ordered samples")
    if domain == "cylinder":
        ang, rad = pts[:, 0], pts[:, 1]
    elif domain == "disc":
        rad, ang = pts[:, 0], pts[:, 1]
    else:
        raise ConfigError(f"unknown domain {domain!r}")
    ang = np.unwrap(ang)
    rmono = _monotone(rad, tol)
    amono = _monotone(ang, tol)
    turns = abs(ang[-1] - ang[0]) / TWO_PI
    kind = "Other"
    if rmono and amono:
        if turns >= min_turns:
            kind = "Helix" if domain == "cylinder" else "Spiral"
        elif turns < 1.0:
            kind = "Segment"
    return CurveClass(kind, rmono, amono, turns, float(rad[-1]))


def vertical_segment(x0: float, y_min: float, y_max: float = 1.0, n: int = 400) -> WallPoint:
    """Log-spaced vertical segment on the wall, ordered toward y = y_min."""
    return WallPoint(np.full(n, float(x0)), np.geomspace(y_max, y_min, n))


# -- turning direction ---------------------------------------------------------

@dataclass(frozen=True)
class TurningReport:
    sign_v: int
    sign_w: int
    samples_v: int
    samples_w: int

    @property
    def agree(self) -> bool:
        return self.sign_v == self.sign_w


def turning_signs(traj: Trajectory, radius: float = 0.3) -> TurningReport:
    """Sign of the (x1, x2) angular velocity inside the balls around v and w.

    The angular velocity is taken from finite differences of the unwrapped
    angle along the stored samples, so the check depends on the trajectory
    only.
    """
    t, X = np.asarray(traj.t), np.asarray(traj.x)
    ang = np.unwrap(np.arctan2(X[:, 1], X[:, 0]))
    rate = np.gradient(ang, t)
    rho2 = X[:, 0] ** 2 + X[:, 1] ** 2
    ok = rho2 > 1e-24
    signs = []
    counts = []
    for pole in (1.0, -1.0):
        near = ok & (np.linalg.norm(X - np.array([0, 0, 0, pole]), axis=1) < radius)
        counts.append(int(near.sum()))
        if not near.any():
            raise NoPassage(f"trajectory never enters the ball around {'v' if pole > 0 else 'w'}")
        signs.append(int(np.sign(np.median(rate[near]))))
    return TurningReport(signs[0], signs[1], counts[0], counts[1])


def check_turning_orientation(p: ModelParams, traj: Trajectory, radius: float = 0.3) -> bool:
    """True iff the trajectory turns the same way around the x3 axis near v and near w."""
    return turning_signs(traj, radius).agree
