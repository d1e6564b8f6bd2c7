"""Adaptive Dormand-Prince integration with dense output and quadric events.

The stepping loop lives in the compiled kernel (or its pure-Python twin, see
``_backend``).  Event surfaces are quadrics ``x^T Q x + b.x + c``; planes,
balls and the cylinder walls used by the isolating blocks are all of this
form, which lets the kernel evaluate them without calling back into Python.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import (
    BudgetExceeded,
    ConfigError,
    MaxTimeExceeded,
    NewtonDiverged,
    NoReturn,
    StepSizeUnderflow,
)
from .model import ModelParams

EVENT_TOL = 1e-12


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.5
    renormalize: bool = False
    max_time: float = 1e4
    max_steps: int = 20_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0.0 < v <= 1e-2:
                raise ConfigError(f"{name} must lie in (0, 1e-2], got {v}")
        if not self.max_step > 0.0:
            raise ConfigError("max_step must be positive")
        if not self.max_time > 0.0:
            raise ConfigError("max_time must be positive")


@dataclass(frozen=True)
class EventSpec:
    """Signed quadric surface ``s(x) = x^T Q x + b.x + c``.

    ``direction`` is +1 (s increasing), -1 (decreasing) or 0 (both).
    ``max_events`` > 0 stops the integration at that many crossings.
    """

    Q: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: float
    direction: int = 0
    max_events: int = 0
    name: str = ""

    def surface(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., :4]
        return np.einsum("...i,ij,...j->...", x, self.Q, x) + x @ self.b + self.c

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., :4]
        return x @ (self.Q + self.Q.T) + self.b

    def with_(self, **kw) -> "EventSpec":
        d = dict(Q=self.Q, b=self.b, c=self.c, direction=self.direction,
                 max_events=self.max_events, name=self.name)
        d.update(kw)
        return EventSpec(**d)

    @classmethod
    def plane(cls, normal, offset=0.0, direction=0, max_events=0, name="plane") -> "EventSpec":
        """Surface ``normal . x - offset``."""
        return cls(np.zeros((4, 4)), np.asarray(normal, dtype=float), -float(offset),
                   direction, max_events, name)

    @classmethod
    def ball(cls, center, radius, direction=0, max_events=0, name="ball") -> "EventSpec":
        """Surface ``|x - center|^2 - radius^2`` (negative inside)."""
        c = np.asarray(center, dtype=float)
        return cls(np.eye(4), -2.0 * c, float(c @ c - radius**2), direction, max_events, name)

    @classmethod
    def cylinder(cls, axes=(0, 1), radius=1.0, direction=0, max_events=0, name="cylinder") -> "EventSpec":
        """Surface ``x_i^2 + x_j^2 - radius^2`` for the coordinate pair ``axes``."""
        Q = np.zeros((4, 4))
        for a in axes:
            Q[a, a] = 1.0
        return cls(Q, np.zeros(4), -float(radius) ** 2, direction, max_events, name)


@dataclass(frozen=True)
class SectionEvent:
    index: int
    name: str
    t: float
    x: np.ndarray = field(repr=False)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    params: ModelParams
    options: IntegratorOptions
    drift_max: float = 0.0
    status: int = 0
    n_steps: int = 0
    monodromy: np.ndarray | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def samples(self):
        return list(zip(self.t, self.x))

    @property
    def end(self) -> np.ndarray:
        return self.x[-1]

    def to_csv(self, path: str | Path, header_lines: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "x3", "x4"])
            for ti, xi in zip(self.t, self.x):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi[:4]])


def events_to_csv(events: Sequence[SectionEvent], path: str | Path, local=None,
                  header_lines: Sequence[str] = ()) -> None:
    """Write events as ``section,t,c1,c2,...``; ``local`` maps a state to chart coordinates."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        rows = []
        for ev in events:
            coords = list(local(ev.x)) if local is not None else list(ev.x[:4])
            rows.append([ev.name or ev.index, repr(ev.t)] + [repr(float(c)) for c in coords])
        n = max((len(r) for r in rows), default=2) - 2
        w.writerow(["section", "t"] + [f"c{i + 1}" for i in range(n)])
        w.writerows(rows)


def _pack_events(events: Sequence[EventSpec]):
    n = len(events)
    Q = np.zeros((n, 4, 4))
    b = np.zeros((n, 4))
    c = np.zeros(n)
    d = np.zeros(n, dtype=np.int64)
    m = np.zeros(n, dtype=np.int64)
    for i, ev in enumerate(events):
        Q[i], b[i], c[i], d[i], m[i] = ev.Q, ev.b, ev.c, ev.direction, ev.max_events
    return Q, b, c, d, m


def integrate(p: ModelParams, x0, span: tuple[float, float], opts: IntegratorOptions | None = None,
              events: Sequence[EventSpec] = (), t_eval=None, store_steps: bool = True,
              variational: bool = False, check_sphere: bool = True):
    """Integrate the flow of ``p`` from ``x0`` over ``span = (t0, t1)``.

    ``t1 < t0`` integrates backward in time (the kernel runs the negated
    field forward).  With ``variational`` the fundamental matrix is carried
    along and returned as ``Trajectory.monodromy``.

    Returns
    -------
    traj : Trajectory
        Accepted steps (or the ``t_eval`` samples when given).
    events : list of SectionEvent
    """
    opts = opts or IntegratorOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (4,) or not np.all(np.isfinite(x0)):
        raise ConfigError("x0 must be a finite 4-vector")
    if check_sphere and abs(float(x0 @ x0) - 1.0) > 2e-6:
        raise ConfigError(f"x0 is off the unit sphere: |x|^2 = {x0 @ x0}")
    t0, t1 = float(span[0]), float(span[1])
    dur = abs(t1 - t0)
    if dur > opts.max_time:
        raise MaxTimeExceeded(f"span {dur} exceeds max_time {opts.max_time}")
    sign = 1.0 if t1 >= t0 else -1.0
    y0 = np.concatenate([x0, np.eye(4).ravel()]) if variational else x0.copy()
    events = list(events)
    Q, b, c, d, m = _pack_events(events)
    if sign < 0:
        d = -d  # s increasing in t means s decreasing in reversed time
    if t_eval is None:
        te = np.zeros(0)
    else:
        te = sign * (np.asarray(t_eval, dtype=float) - t0)
    res = kernels.integrate(p.as_array(), y0, 0.0, dur, opts.rel_tol, opts.abs_tol, opts.max_step, 0.0,
                            sign, bool(opts.renormalize), Q, b, c, d, m, EVENT_TOL, te,
                            bool(store_steps), int(opts.max_steps))
    if res["status"] == -1:
        raise StepSizeUnderflow(f"step size underflow at t = {t0 + sign * res['t']}")
    if res["status"] == -2:
        raise BudgetExceeded(f"step budget {opts.max_steps} exhausted at t = {t0 + sign * res['t']}")
    if t_eval is not None:
        ts, ys = np.asarray(t_eval, dtype=float), res["t_eval_y"]
    elif store_steps:
        ts, ys = t0 + sign * res["steps_t"], res["steps_y"]
    else:
        ts, ys = np.array([t0, t0 + sign * res["t"]]), np.vstack([y0, res["y"]])
    traj = Trajectory(ts, ys[:, :4].copy(), p, opts, float(res["drift_max"]), int(res["status"]),
                      int(res["n_accepted"]))
    if variational:
        traj.monodromy = res["y"][4:].reshape(4, 4).copy()
    evs = [
        SectionEvent(int(i), events[int(i)].name, t0 + sign * float(te_), y[:4].copy())
        for i, te_, y in zip(res["ev_index"], res["ev_t"], res["ev_y"])
    ]
    traj.final_state = res["y"]
    return traj, evs


def flow_to_event(p: ModelParams, x0, event: EventSpec, t_max: float, opts: IntegratorOptions | None = None,
                  backward: bool = False, stops: Sequence[EventSpec] = (), check_sphere: bool = False,
                  t_min: float = 0.0, occurrence: int = 1):
    """Flow until the ``occurrence``-th crossing of ``event`` (or the first of any ``stops`` surface).

    Crossings before ``t_min`` are ignored, which matters when ``x0`` already
    sits on the surface.  Returns ``(index, t, x)`` where ``index`` is 0 for
    ``event`` and ``k + 1`` for ``stops[k]``.  Raises NoReturn when nothing is
    hit within ``t_max``.
    """
    if occurrence < 1:
        raise ConfigError("occurrence must be >= 1")
    evs = [event.with_(max_events=occurrence)] + [s.with_(max_events=1) for s in stops]
    opts = opts or IntegratorOptions()
    if t_max > opts.max_time:
        opts = IntegratorOptions(opts.rel_tol, opts.abs_tol, opts.max_step, opts.renormalize, t_max, opts.max_steps)
    sgn = -1.0 if backward else 1.0
    if t_min > 0.0:
        tr, _ = integrate(p, x0, (0.0, sgn * t_min), opts, store_steps=False, check_sphere=check_sphere)
        x0 = tr.end
    _, hits = integrate(p, x0, (0.0, sgn * (t_max - t_min)), opts, evs, store_steps=False,
                        check_sphere=check_sphere)
    hits = [h for h in hits if h.index != 0] + [h for h in hits if h.index == 0][occurrence - 1:]
    if not hits:
        raise NoReturn(f"no crossing of {event.name!r} within t = {t_max}")
    h = min(hits, key=lambda e: abs(e.t))
    return h.index, abs(h.t) + t_min, h.x


def _section_basis(x: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Orthonormal 4x2 basis of vectors orthogonal to ``x`` and ``normal``."""
    A = np.vstack([x, normal]).T
    q, _ = np.linalg.qr(np.hstack([A, np.eye(4)]))
    return q[:, 2:4]


@dataclass
class PeriodicOrbit:
    orbit: Trajectory
    period: float
    multipliers: np.ndarray
    trivial_multipliers: np.ndarray
    point: np.ndarray
    residual: float
    newton_iterations: int

    @property
    def attracting(self) -> bool:
        return bool(np.all(np.abs(self.multipliers) < 1.0))


def find_periodic_orbit(p: ModelParams, section: EventSpec, guess, opts: IntegratorOptions | None = None,
                        transient: float = 0.0, t_return: float = 500.0, tol: float = 1e-10,
                        max_iter: int = 25, fd_step: float = 1e-7, t_min: float = 1.0) -> PeriodicOrbit:
    """Newton iteration for a fixed point of the first-return map to ``section``.

    The return-map Jacobian is taken by finite differences along the two
    directions tangent to both the sphere and the section plane.  Floquet
    multipliers come from the variational flow over one period.

    Parameters
    ----------
    section : EventSpec
        A plane with a fixed crossing direction.
    transient : float
        Time to flow ``guess`` forward before the search starts.
    t_min : float
        Returns faster than this are ignored.
    """
    opts = opts or IntegratorOptions()
    if section.direction == 0:
        raise ConfigError("periodic-orbit section needs a crossing direction")
    x = np.asarray(guess, dtype=float)
    x = x / np.linalg.norm(x)
    if transient > 0:
        tr, _ = integrate(p, x, (0.0, transient), opts, store_steps=False, check_sphere=False)
        x = tr.end / np.linalg.norm(tr.end)
    _, _, x = flow_to_event(p, x, section, t_return, opts)
    normal = section.gradient(x)

    def P(z):
        _, T, y = flow_to_event(p, z, section, t_return, opts, t_min=t_min)
        return T, y

    residual = np.inf
    for it in range(1, max_iter + 1):
        T, y = P(x)
        r = y - x
        residual = float(np.linalg.norm(r))
        if residual <= tol:
            break
        E = _section_basis(x, normal)
        DPE = np.empty((4, 2))
        for k in range(2):
            h = fd_step
            _, yp = P(x + h * E[:, k])
            _, ym = P(x - h * E[:, k])
            DPE[:, k] = (yp - ym) / (2 * h)
        u, *_ = np.linalg.lstsq(DPE - E, -r, rcond=None)
        step = E @ u
        if np.linalg.norm(step) > 0.2:
            step *= 0.2 / np.linalg.norm(step)
        x = x + step
        x = x / np.linalg.norm(x)
        if not np.all(np.isfinite(x)):
            raise NewtonDiverged("non-finite iterate")
    else:
        raise NewtonDiverged(f"return-map residual {residual:.3e} after {max_iter} iterations")
    T, y = P(x)
    orbit, _ = integrate(p, x, (0.0, T), opts, variational=True, check_sphere=False)
    M = orbit.monodromy
    vals, vecs = np.linalg.eig(M)
    radial = int(np.argmax(np.abs(vecs.T.conj() @ x) / np.linalg.norm(vecs, axis=0)))
    rest = [i for i in range(4) if i != radial]
    along = min(rest, key=lambda i: abs(vals[i] - 1.0))
    nontrivial = np.array([vals[i] for i in rest if i != along])
    return PeriodicOrbit(orbit, float(T), nontrivial, np.array([vals[along], vals[radial]]), x,
                         float(np.linalg.norm(y - x)), it)
