"""Switching near the heteroclinic network: path following and itineraries.

A path is a finite sequence of heteroclinic connections, consecutive ones
sharing a node.  A trajectory follows a path of order k when there are
times t_1 < z_1 < t_2 < ... < z_k < t_{k+1} such that

1. the trajectory stays in a tubular neighbourhood of the network on
   (t_1, t_{k+1}),
2. it is in the neighbourhood of the source node of connection i at t_i
   and in the neighbourhood V_i of a marked point of connection i at z_i,
3. on (z_i, z_{i+1}) it visits no node neighbourhood other than the one
   of the target of connection i.

Everything here is decided from stored samples, so a witness can be
re-checked from the trajectory alone.

Connection labels
-----------------
``[v->w]+`` and ``[v->w]-``
    the two branches of the one-dimensional connection from ``v`` to ``w``
    (``+`` is the branch with x3 > 0).
``[w->v]_j``
    the j-th transverse connection from ``w`` to ``v`` (``lambda1 != 0``),
    ordered by the angle of its marked point.
``[w->v]``
    any connection from ``w`` to ``v``.  At ``lambda1 = 0`` the connection
    is the two-sphere x3 = 0 and this is the only label.

Marked points sit where a connection crosses the hyperplane x4 = 0, midway
between the nodes.  For the two-dimensional connection the marked points
form the circle x3 = x4 = 0 and V is a tube around it.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, ShadowingNotFound
from .integrator import EventSpec, IntegratorOptions, Trajectory, flow_to_event, integrate
from .manifolds import TRACE_OPTIONS, detect_transverse_connections, section, stable_height
from .model import V, W, ModelParams
from .sections import SectionGeometry

NODES = {"v": V, "w": W}
_LABEL = re.compile(r"^\[(v|w)->(v|w)\](?:([+-])|_(\d+))?$")


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Connection:
    source: str
    target: str
    branch: str | None = None   # "+" / "-" for v->w
    index: int | None = None    # j for w->v

    @classmethod
    def parse(cls, label: str) -> "Connection":
        m = _LABEL.match(label.replace(" ", "").replace("→", "->"))
        if not m:
            raise ConfigError(f"bad connection label {label!r}")
        src, dst, br, j = m.groups()
        if src == dst:
            raise ConfigError(f"{label!r} connects a node to itself")
        if src == "v" and br is None:
            raise ConfigError(f"{label!r}: v->w connections need a branch sign")
        if src == "v" and j is not None or src == "w" and br is not None:
            raise ConfigError(f"{label!r}: wrong qualifier for this connection")
        return cls(src, dst, br, None if j is None else int(j))

    @property
    def label(self) -> str:
        base = f"[{self.source}->{self.target}]"
        if self.branch:
            return base + self.branch
        if self.index is not None:
            return f"{base}_{self.index}"
        return base

    def matches(self, other: "Connection") -> bool:
        """True if a visit to ``other`` counts as a visit to this (possibly wildcard) connection."""
        if (self.source, self.target, self.branch) != (other.source, other.target, other.branch):
            return False
        return self.index is None or self.index == other.index


@dataclass(frozen=True)
class NetworkPath:
    connections: tuple[str, ...]

    def __post_init__(self):
        if len(self.connections) == 0:
            raise ConfigError("a path needs at least one connection")
        parsed = [Connection.parse(c) for c in self.connections]
        for a, b in zip(parsed, parsed[1:]):
            if a.target != b.source:
                raise ConfigError(f"{a.label} is not followed by a connection out of {a.target}")
        object.__setattr__(self, "connections", tuple(c.label for c in parsed))

    @property
    def order(self) -> int:
        return len(self.connections)

    @property
    def parsed(self) -> list[Connection]:
        return [Connection.parse(c) for c in self.connections]

    @property
    def nodes(self) -> list[str]:
        """Visited nodes A_1, ..., A_{k+1}."""
        c = self.parsed
        return [x.source for x in c] + [c[-1].target]

    @classmethod
    def alternating(cls, k: int, w_to_v: str = "[w->v]") -> "NetworkPath":
        """``[v->w]+, [w->v], [v->w]-, [w->v], ...`` of order ``k``."""
        out = []
        for i in range(k):
            if i % 2 == 0:
                out.append("[v->w]+" if i % 4 == 0 else "[v->w]-")
            else:
                out.append(w_to_v)
        return cls(tuple(out))


# ---------------------------------------------------------------------------
# network geometry and neighbourhoods


class _Polylines:
    """Exact point-to-polyline distance, nearest vertex found with a KD-tree."""

    def __init__(self, lines: list[np.ndarray]):
        pts, nxt, prv = [], [], []
        off = 0
        for L in lines:
            n = len(L)
            pts.append(L)
            idx = np.arange(off, off + n)
            nxt.append(np.minimum(idx + 1, off + n - 1))
            prv.append(np.maximum(idx - 1, off))
            off += n
        self.P = np.vstack(pts)
        self.nxt = np.concatenate(nxt)
        self.prv = np.concatenate(prv)
        self.tree = cKDTree(self.P)

    @staticmethod
    def _seg(X, A, B):
        d = B - A
        L2 = np.einsum("ij,ij->i", d, d)
        t = np.where(L2 > 0, np.einsum("ij,ij->i", X - A, d) / np.where(L2 > 0, L2, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        return np.linalg.norm(X - (A + t[:, None] * d), axis=1)

    def distance(self, X: np.ndarray) -> np.ndarray:
        _, i = self.tree.query(X)
        A = self.P[i]
        return np.minimum(self._seg(X, A, self.P[self.nxt[i]]), self._seg(X, A, self.P[self.prv[i]]))


def _sphere_x3_distance(X: np.ndarray) -> np.ndarray:
    # chord distance to the great two-sphere {x3 = 0} of S^3
    s = np.sqrt(np.clip(1.0 - X[:, 2] ** 2, 0.0, 1.0))
    return np.sqrt(np.clip(2.0 - 2.0 * s, 0.0, None))


def _circle_distance(X: np.ndarray) -> np.ndarray:
    # distance to the circle x3 = x4 = 0, |(x1, x2)| = 1
    rho = np.hypot(X[:, 0], X[:, 1])
    return np.sqrt((rho - 1.0) ** 2 + X[:, 2] ** 2 + X[:, 3] ** 2)


@dataclass
class ConnectionGeometry:
    connection: Connection
    marked: np.ndarray | None          # a single marked point, or None for the sphere
    orbit: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Network:
    """Geometry of the network used for neighbourhoods.

    The ``v -> w`` connections are the two half circles of x1 = x2 = 0
    (exact when ``lambda2 = 0``; for ``lambda2 != 0`` they are the
    unperturbed ones).  The ``w -> v`` part is the sphere x3 = 0 when
    ``lambda1 = 0``, else the transverse connections found on the entry
    wall of ``v``.
    """

    params: ModelParams
    connections: list[ConnectionGeometry]
    w_to_v_sphere: bool

    @property
    def labels(self) -> list[str]:
        return [c.connection.label for c in self.connections]

    @classmethod
    def build(cls, p: ModelParams, geom: SectionGeometry | None = None, n_seeds: int = 256) -> "Network":
        th = np.linspace(0.0, math.pi, 2001)
        conns = []
        for br, s in (("+", 1.0), ("-", -1.0)):
            arc = np.stack([0 * th, 0 * th, s * np.sin(th), np.cos(th)], axis=1)
            conns.append(ConnectionGeometry(Connection("v", "w", br), np.array([0, 0, s, 0.0]), arc))
        if p.lambda1 == 0.0:
            conns.append(ConnectionGeometry(Connection("w", "v"), None))
            return cls(p, conns, True)
        geom = geom or SectionGeometry()
        rep = detect_transverse_connections(p, geom, n_seeds=n_seeds)
        sec = section(geom, "I_v_in")
        mid = EventSpec.plane([0, 0, 0, 1.0], 0.0, 0, 1, "mid")
        found = []
        for c in rep.crossings:
            x = sec.state(c.x, c.y)
            orbit = _connection_orbit(p, x)
            _, _, m = flow_to_event(p, x, mid, 200.0, replace(TRACE_OPTIONS, renormalize=True), backward=True)
            found.append((math.atan2(m[1], m[0]) % (2 * math.pi), m, orbit))
        found.sort(key=lambda f: f[0])
        for j, (_, m, orbit) in enumerate(found):
            conns.append(ConnectionGeometry(Connection("w", "v", index=j), m, orbit))
        return cls(p, conns, False)


def _connection_orbit(p: ModelParams, x: np.ndarray, t_max: float = 60.0, dt: float = 0.01) -> np.ndarray:
    """Dense polyline of the w -> v orbit through ``x``, closed off at both equilibria."""
    opts = replace(TRACE_OPTIONS, renormalize=True)
    back, _ = integrate(p, x, (0.0, -t_max), opts, t_eval=-np.arange(0.0, t_max, dt), check_sphere=False)
    fwd, _ = integrate(p, x, (0.0, t_max), opts, t_eval=np.arange(0.0, t_max, dt), check_sphere=False)
    return np.vstack([W, back.x[::-1], fwd.x[1:], V])


@dataclass
class NeighborhoodSystem:
    """Node balls U, connection neighbourhoods V and the network tube.

    Radii are ambient (chord) distances.
    """

    network: Network
    r_U: float = 0.15
    r_V: float = 0.1
    tube: float = 0.3

    def __post_init__(self):
        if min(self.r_U, self.r_V, self.tube) <= 0:
            raise ConfigError("neighbourhood radii must be positive")
        lines = [c.orbit for c in self.network.connections if c.orbit is not None]
        self._lines = _Polylines(lines)
        self._check_disjoint()

    def _check_disjoint(self):
        if np.linalg.norm(V - W) <= 2 * self.r_U:
            raise ConfigError("node neighbourhoods overlap")
        pts = [c.marked for c in self.network.connections if c.marked is not None]
        for x in pts:
            for e in (V, W):
                if np.linalg.norm(x - e) <= self.r_U + self.r_V:
                    raise ConfigError("a connection neighbourhood meets a node neighbourhood")
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.linalg.norm(pts[i] - pts[j]) <= 2 * self.r_V:
                    raise ConfigError("connection neighbourhoods overlap")
        if self.network.w_to_v_sphere:
            # tube around the circle x3 = x4 = 0 against the balls and the v->w marked points
            for x in pts + [V, W]:
                r = self.r_U if any(x is e for e in (V, W)) else self.r_V
                if _circle_distance(x[None])[0] <= r + self.r_V:
                    raise ConfigError("connection neighbourhoods overlap")

    # membership -----------------------------------------------------------

    def in_node(self, X: np.ndarray, node: str) -> np.ndarray:
        return np.linalg.norm(X - NODES[node], axis=1) < self.r_U

    def in_connection(self, X: np.ndarray, c: ConnectionGeometry) -> np.ndarray:
        if c.marked is None:
            return _circle_distance(X) < self.r_V
        return np.linalg.norm(X - c.marked, axis=1) < self.r_V

    def in_tube(self, X: np.ndarray) -> np.ndarray:
        d = self._lines.distance(X)
        if self.network.w_to_v_sphere:
            d = np.minimum(d, _sphere_x3_distance(X))
        return d < self.tube

    def connection_mask(self, X: np.ndarray, wanted: Connection) -> np.ndarray:
        m = np.zeros(len(X), bool)
        for c in self.network.connections:
            if wanted.matches(c.connection):
                m |= self.in_connection(X, c)
        return m

    def with_radii(self, **kw) -> "NeighborhoodSystem":
        d = dict(r_U=self.r_U, r_V=self.r_V, tube=self.tube)
        d.update(kw)
        return NeighborhoodSystem(self.network, **d)


# ---------------------------------------------------------------------------
# following a path


@dataclass
class SwitchingWitness:
    path: tuple[str, ...]
    t_times: list[float]
    z_times: list[float]

    def __post_init__(self):
        t, z = self.t_times, self.z_times
        if len(t) != len(z) + 1:
            raise ConfigError("need k + 1 node times for k connection times")
        if not all(t[i] < z[i] < t[i + 1] for i in range(len(z))):
            raise ConfigError("times do not interleave")

    def to_dict(self) -> dict:
        return {"path": list(self.path), "t_times": list(self.t_times), "z_times": list(self.z_times)}


@dataclass
class FollowFailure:
    path: tuple[str, ...]
    condition: int       # 1 tube, 2 visits, 3 foreign node
    step: int            # 1-based index of the connection being followed
    completed: int       # connections fully followed before the failure
    message: str

    def __bool__(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return asdict(self)


class _Masks:
    def __init__(self, traj: Trajectory, path: NetworkPath, nbhd: NeighborhoodSystem):
        X = np.asarray(traj.x, float)
        self.t = np.asarray(traj.t, float)
        self.node = {n: nbhd.in_node(X, n) for n in NODES}
        self.conn = [nbhd.connection_mask(X, c) for c in path.parsed]
        self.tube = nbhd.in_tube(X)
        self.any_node = self.node["v"] | self.node["w"]


def _first(mask: np.ndarray, start: int, stop: int | None = None) -> int | None:
    seg = mask[start:stop]
    i = int(np.argmax(seg)) if seg.size else 0
    return start + i if seg.size and seg[i] else None


def _last(mask: np.ndarray, start: int, stop: int) -> int | None:
    seg = mask[start:stop]
    if not seg.any():
        return None
    return start + len(seg) - 1 - int(np.argmax(seg[::-1]))


def _follow_from(m: _Masks, path: NetworkPath, z1: int) -> SwitchingWitness | FollowFailure:
    """Greedy witness with z_1 at sample ``z1``: every later time as early as possible."""
    nodes = path.nodes
    k = path.order
    t1 = _last(m.node[nodes[0]], 0, z1)
    if t1 is None:
        return FollowFailure(path.connections, 2, 1, 0, f"no visit to U_{nodes[0]} before z_1")
    ti, zi = [t1], [z1]
    for i in range(k):
        target = nodes[i + 1]
        others = m.any_node & ~m.node[target]
        # next node visit after z_i must be the target
        nt = _first(m.node[target], zi[-1] + 1)
        nf = _first(others, zi[-1] + 1)
        if nt is None:
            return FollowFailure(path.connections, 2, i + 1, i, f"no visit to U_{target} after z_{i + 1}")
        if nf is not None and nf < nt:
            return FollowFailure(path.connections, 3, i + 1, i,
                                 f"visits another node before U_{target} (t = {m.t[nf]:.3f})")
        if i == k - 1:
            ti.append(nt)
            break
        zn = _first(m.conn[i + 1], nt + 1)
        if zn is None and nf is None:
            return FollowFailure(path.connections, 2, i + 2, i + 1, f"no visit to V_{i + 2}")
        if nf is not None and (zn is None or nf < zn):
            return FollowFailure(path.connections, 3, i + 2, i + 1,
                                 f"visits another node before V_{i + 2} (t = {m.t[nf]:.3f})")
        ti.append(_last(m.node[target], nt, zn))
        zi.append(zn)
    bad = _first(~m.tube, ti[0] + 1, ti[-1])
    if bad is not None:
        done = sum(1 for t in ti[1:] if t < bad)
        return FollowFailure(path.connections, 1, done + 1, done, f"leaves the tube at t = {m.t[bad]:.3f}")
    return SwitchingWitness(path.connections, [float(m.t[i]) for i in ti], [float(m.t[i]) for i in zi])


def _run_starts(mask: np.ndarray) -> np.ndarray:
    return np.nonzero(mask & ~np.concatenate([[False], mask[:-1]]))[0]


def follows_path(traj: Trajectory, path: NetworkPath, nbhd: NeighborhoodSystem,
                 first_visit_only: bool = False) -> SwitchingWitness | FollowFailure:
    """Witness that ``traj`` follows ``path``, or the first violated condition.

    Each entry into V_1 is tried as z_1 (only the first one with
    ``first_visit_only``); the remaining times are chosen greedily
    (earliest admissible), which is optimal for a fixed z_1.  The failure
    returned is the one that got furthest along the path.
    """
    m = _Masks(traj, path, nbhd)
    best: FollowFailure | None = None
    starts = _run_starts(m.conn[0])
    for z1 in starts[:1] if first_visit_only else starts:
        r = _follow_from(m, path, int(z1))
        if isinstance(r, SwitchingWitness):
            return r
        if best is None or r.completed > best.completed:
            best = r
    return best if best is not None else FollowFailure(path.connections, 2, 1, 0, "never visits V_1")


def check_witness(traj: Trajectory, path: NetworkPath, nbhd: NeighborhoodSystem,
                  witness: SwitchingWitness) -> bool:
    """Re-check the three conditions of a witness against the stored samples."""
    m = _Masks(traj, path, nbhd)
    idx = {float(t): i for i, t in enumerate(m.t)}
    try:
        ti = [idx[float(t)] for t in witness.t_times]
        zi = [idx[float(z)] for z in witness.z_times]
    except KeyError:
        return False
    nodes = path.nodes
    if len(zi) != path.order:
        return False
    if not m.tube[ti[0] + 1:ti[-1]].all():
        return False
    for i in range(path.order):
        if not (m.node[nodes[i]][ti[i]] and m.conn[i][zi[i]]):
            return False
    if not m.node[nodes[-1]][ti[-1]]:
        return False
    ends = zi[1:] + [ti[-1]]
    for i in range(path.order):
        others = m.any_node & ~m.node[nodes[i + 1]]
        if others[zi[i] + 1:ends[i]].any():
            return False
    return True


# ---------------------------------------------------------------------------
# itineraries


@dataclass(frozen=True)
class Visit:
    kind: str        # "node", "connection" or "exit" (left the tube)
    label: str
    t_in: float
    t_out: float


def itinerary(traj: Trajectory, nbhd: NeighborhoodSystem) -> list[Visit]:
    """Ordered visits to node balls, connection neighbourhoods and tube exits."""
    X = np.asarray(traj.x, float)
    t = np.asarray(traj.t, float)
    sets = [("node", n, nbhd.in_node(X, n)) for n in NODES]
    sets += [("connection", c.connection.label, nbhd.in_connection(X, c)) for c in nbhd.network.connections]
    sets.append(("exit", "tube", ~nbhd.in_tube(X)))
    visits = []
    for kind, label, mask in sets:
        starts = _run_starts(mask)
        ends = _run_starts(~mask)
        for s in starts:
            e = ends[ends > s]
            stop = int(e[0]) - 1 if e.size else len(t) - 1
            visits.append((int(s), kind, label, float(t[s]), float(t[stop])))
    visits.sort(key=lambda v: (v[0], v[1]))
    return [Visit(k, lab, a, b) for _, k, lab, a, b in visits]


def path_from_itinerary(visits: list[Visit]) -> NetworkPath | None:
    """First maximal run of connections followed node to node inside the tube."""
    path: list[Connection] = []
    node: str | None = None
    pending: Connection | None = None
    for v in visits:
        if v.kind == "exit":
            if path:
                break
            node, pending = None, None
        elif v.kind == "node":
            if pending is not None:
                if v.label == pending.target:
                    path.append(pending)
                    node, pending = v.label, None
                elif path:
                    break
                else:
                    node, pending = v.label, None
            elif node is None or v.label == node or not path:
                node = v.label
            else:
                break
        else:
            c = Connection.parse(v.label)
            if pending is not None:
                if c == pending:
                    continue
                if path:
                    break
                pending = None
            if node == c.source:
                pending = c
            elif path:
                break
    if not path:
        return None
    return NetworkPath(tuple(c.label for c in path))


# ---------------------------------------------------------------------------
# shadowing search


@dataclass
class ShadowingBudget:
    samples: int = 400          # trial points per interval and level
    levels: int = 12            # refinement levels
    keep: int = 6               # intervals kept per level
    loop_time: float = 80.0     # integration time allowed per connection
    dt: float = 0.01            # sampling step of the trajectories
    log_range: tuple[float, float] = (-12.0, -1.0)   # log10 of the offset from W^s(v)


@dataclass
class ShadowingResult:
    x0: np.ndarray
    offset: float
    witness: SwitchingWitness
    trajectory: Trajectory = field(repr=False)
    evaluations: int = 0


def _progress(traj: Trajectory, path: NetworkPath, nbhd: NeighborhoodSystem) -> tuple[int, SwitchingWitness | FollowFailure]:
    r = follows_path(traj, path, nbhd, first_visit_only=True)
    return (path.order if isinstance(r, SwitchingWitness) else r.completed), r


def find_shadowing_ic(path: NetworkPath, p: ModelParams, nbhd: NeighborhoodSystem,
                      budget: ShadowingBudget | None = None, geom: SectionGeometry | None = None,
                      x_angle: float = 0.0, opts: IntegratorOptions | None = None) -> ShadowingResult:
    """Initial condition on the entry wall of ``v`` whose trajectory follows ``path``.

    Nested-interval search on the vertical segment of the entry wall at
    angle ``x_angle``, parametrized by the signed offset from W^s(v): the
    sign fixes the first ``v -> w`` branch, and each level keeps the
    sub-intervals whose trajectories follow the longest prefix of the path,
    then resamples them.  Only witnesses starting at the first visit to
    V_1 count, so the path is followed from the initial condition on.  The
    search order is deterministic.
    """
    budget = budget or ShadowingBudget()
    geom = geom or SectionGeometry()
    if path.order > 6:
        raise ConfigError("path order is limited to 6")
    first = path.parsed[0]
    if first.source != "v":
        raise ConfigError("paths must start at v")
    sign = 1.0 if first.branch == "+" else -1.0
    sec = section(geom, "I_v_in")
    h = stable_height(p, sec.chart, x_angle, geom)
    opts = opts or IntegratorOptions(rel_tol=1e-10, abs_tol=1e-13, max_step=0.1)
    T = budget.loop_time * (path.order + 1)
    times = np.arange(0.0, T, budget.dt)
    evals = 0

    def run(s: float):
        nonlocal evals
        evals += 1
        x0 = sec.state(x_angle, h + sign * 10.0 ** s)
        tr, _ = integrate(p, x0, (0.0, T), opts, t_eval=times, check_sphere=False)
        return x0, tr

    intervals = [budget.log_range]
    for _level in range(budget.levels):
        scored = []
        for a, b in intervals:
            ss = np.linspace(a, b, budget.samples)
            prog = []
            for s in ss:
                x0, tr = run(float(s))
                n, r = _progress(tr, path, nbhd)
                if isinstance(r, SwitchingWitness):
                    return ShadowingResult(x0, sign * 10.0 ** float(s), r, tr, evals)
                prog.append(n)
            prog = np.array(prog)
            step = ss[1] - ss[0]
            # runs of samples at this interval's best progress
            top = prog == prog.max()
            for i in _run_starts(top):
                j = i
                while j + 1 < len(top) and top[j + 1]:
                    j += 1
                scored.append((int(prog.max()), ss[i] - step, ss[j] + step))
        if not scored:
            break
        best = max(s[0] for s in scored)
        intervals = [(a, b) for n, a, b in scored if n == best][:budget.keep]
    raise ShadowingNotFound(f"no initial condition follows {list(path.connections)} within the budget "
                            f"({evals} trajectories)")
