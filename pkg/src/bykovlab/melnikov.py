"""Melnikov function for the splitting of the w -> v connection under lambda1.

In spherical coordinates with ``varphi = t`` the lambda2 = 0 system reduces to a
time-periodic planar system in ``(theta, phi)``.  For lambda1 = 0 the line
``phi = pi/2`` (and ``3 pi/2``) carries a connection from ``theta = pi`` (w)
to ``theta = 0`` (v), and the Melnikov integral

    M(t0) = int f(q0(t)) ^ g(q0(t), t + t0) exp(-int_0^t tr Df) dt
          = A cos 2 t0 + B sin 2 t0

measures how lambda1 splits it.  We write ``M = rho cos(2 t0 - sigma)`` with
``rho = hypot(A, B)`` and ``sigma = atan2(B, A)``, so the zeros sit at
``t0 = (pi + 2 sigma + 2 n pi) / 4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DegenerateAmplitude, ManifoldEscape, TruncationTooShort
from .model import ModelParams, eval_reduced

BRANCHES = {0: 0.5 * math.pi, 1: 1.5 * math.pi}


@dataclass(frozen=True)
class ConnectionProfile:
    """The unperturbed connection theta(t), theta(0) = pi/2, on one branch.

    ``t_minus < 0 < t_plus`` are the truncation times at which theta is
    within ``end_tol`` of pi and of 0.  ``trace_integral(t)`` is
    ``int_0^t tr Df``.
    """

    branch: int
    alpha1: float
    alpha2: float
    t_minus: float
    t_plus: float
    _fwd: object = field(repr=False)
    _bwd: object = field(repr=False)

    @property
    def phi(self) -> float:
        return BRANCHES[self.branch]

    @property
    def T(self) -> float:
        return max(-self.t_minus, self.t_plus)

    def _eval(self, t):
        t = np.asarray(t, float)
        out = np.empty((2,) + t.shape)
        pos = t >= 0
        if np.any(pos):
            out[:, pos] = self._fwd(np.clip(t[pos], 0.0, self.t_plus))
        if np.any(~pos):
            out[:, ~pos] = self._bwd(np.clip(t[~pos], self.t_minus, 0.0))
        return out

    def theta(self, t):
        return self._eval(t)[0]

    def trace_integral(self, t):
        return self._eval(t)[1]


def _connection_rhs(a1, a2):
    def rhs(t, y):
        th = y[0]
        return [-a1 * math.sin(th) + 0.5 * a2 * math.sin(2 * th), a1 * math.cos(th) + a2 * math.cos(2 * th)]
    return rhs


def compute_connection(p: ModelParams, branch: int = 0, end_tol: float = 1e-8, max_T: float = 200.0,
                       rtol: float = 1e-13, atol: float = 1e-15) -> ConnectionProfile:
    """Integrate ``theta' = -a1 sin(theta) + (a2/2) sin(2 theta)`` both ways from pi/2.

    The running integral of ``tr Df = a1 cos(theta) + a2 cos(2 theta)`` is
    carried as a second state so the exponential weight has the same
    accuracy as theta itself.
    """
    if branch not in BRANCHES:
        raise ConfigError("branch must be 0 (phi = pi/2) or 1 (phi = 3 pi/2)")
    a1, a2 = p.alpha1, p.alpha2
    rhs = _connection_rhs(a1, a2)

    def reach_zero(t, y):
        return y[0] - end_tol
    reach_zero.terminal = True

    def reach_pi(t, y):
        return (math.pi - y[0]) - end_tol
    reach_pi.terminal = True

    fwd = solve_ivp(rhs, (0.0, max_T), [0.5 * math.pi, 0.0], method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=reach_zero)
    bwd = solve_ivp(rhs, (0.0, -max_T), [0.5 * math.pi, 0.0], method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=reach_pi)
    if fwd.status != 1 or bwd.status != 1:
        raise TruncationTooShort(f"connection endpoints not reached within T = {max_T}")
    return ConnectionProfile(branch, a1, a2, float(bwd.t[-1]), float(fwd.t[-1]), fwd.sol, bwd.sol)


def connection_time_of_theta(p: ModelParams, theta):
    """Closed-form time at which the connection passes ``theta`` (partial fractions in cos theta)."""
    a1, a2 = p.alpha1, p.alpha2
    th = np.asarray(theta, float)
    c = np.cos(th)
    A = 1.0 / (2 * (a1 - a2))
    B = 1.0 / (2 * (a1 + a2))
    C = a2**2 / (a2**2 - a1**2)
    # 1 - c = 2 sin^2(theta/2) and 1 + c = 2 cos^2(theta/2), kept accurate near the ends
    return (-A * np.log(2 * np.sin(th / 2) ** 2) + B * np.log(2 * np.cos(th / 2) ** 2)
            - (C / a2) * np.log((a1 - a2 * c) / a1))


def E_profile(conn: ConnectionProfile, t) -> np.ndarray:
    """The t0-independent factor ``E(t)`` of the Melnikov integrand."""
    th = conn.theta(t)
    f1 = -conn.alpha1 * np.sin(th) + 0.5 * conn.alpha2 * np.sin(2 * th)
    sgn = -1.0 if conn.branch == 0 else 1.0
    return sgn * f1 * 0.25 * np.sin(2 * th) * np.exp(-conn.trace_integral(t))


def melnikov_integrand(conn: ConnectionProfile, t, t0) -> np.ndarray:
    """``f ^ g`` along the connection at phase ``t + t0`` times ``exp(-int_0^t tr Df)``."""
    t = np.asarray(t, float)
    th = conn.theta(t)
    phi = conn.phi
    f1 = -conn.alpha1 * np.sin(th) + 0.5 * conn.alpha2 * np.sin(2 * th)
    f2 = -conn.alpha1 * np.cos(th) * np.sin(2 * phi)
    s = np.sin(2 * (t + t0))
    g1 = 0.5 * np.sin(phi) ** 2 * np.sin(th) ** 2 * np.cos(phi) * s
    g2 = -0.25 * np.sin(phi) ** 3 * np.sin(2 * th) * s
    return (f1 * g2 - f2 * g1) * np.exp(-conn.trace_integral(t))


@dataclass(frozen=True)
class MelnikovResult:
    A: float
    B: float
    rho_M: float
    sigma: float
    zeros: tuple[float, ...]
    truncation_T: float
    quadrature_error_estimate: float
    branch: int = 0

    def M(self, t0) -> np.ndarray:
        t0 = np.asarray(t0, float)
        return self.A * np.cos(2 * t0) + self.B * np.sin(2 * t0)

    def dM(self, t0) -> np.ndarray:
        t0 = np.asarray(t0, float)
        return -2 * self.A * np.sin(2 * t0) + 2 * self.B * np.cos(2 * t0)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(self).items()}


def _gauss_nodes(a: float, b: float, panels: int, order: int):
    x, w = leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mids[:, None] + 0.5 * h[:, None] * x[None, :]).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _coefficients(conn: ConnectionProfile, panels: int, order: int = 16):
    t, w = _gauss_nodes(conn.t_minus, conn.t_plus, panels, order)
    E = E_profile(conn, t)
    return float(np.sum(w * np.sin(2 * t) * E)), float(np.sum(w * np.cos(2 * t) * E)), E


def melnikov_coefficients(conn: ConnectionProfile, p: ModelParams | None = None,
                          panels: int = 200) -> MelnikovResult:
    """Composite Gauss-Legendre quadrature of ``A = int sin(2t) E`` and ``B = int cos(2t) E``.

    The error estimate combines the difference to a half-resolution rule with
    a tail bound from the decay rates measured at both truncation ends.
    """
    A, B, E = _coefficients(conn, panels)
    A2, B2, _ = _coefficients(conn, panels // 2)
    quad_err = math.hypot(A - A2, B - B2)
    tail = 0.0
    for t_end, inner in ((conn.t_plus, conn.t_plus - 1.0), (conn.t_minus, conn.t_minus + 1.0)):
        e_end, e_in = abs(float(E_profile(conn, t_end))), abs(float(E_profile(conn, inner)))
        rate = math.log(e_in / e_end) if e_end > 0 and e_in > e_end else 0.0
        tail += e_end / rate if rate > 0 else e_end * conn.T
    err = quad_err + tail + 1e-16 * (abs(A) + abs(B))
    rho = math.hypot(A, B)
    if rho <= 10 * err:
        raise DegenerateAmplitude(f"rho_M = {rho:.3e} does not exceed 10x the error {err:.3e}")
    sigma = math.atan2(B, A)
    zeros = sorted(float(np.mod(0.25 * (math.pi + 2 * sigma + 2 * n * math.pi), 2 * math.pi)) for n in range(4))
    return MelnikovResult(A, B, rho, sigma, tuple(zeros), conn.T, err, conn.branch)


def melnikov_direct(conn: ConnectionProfile, t0, panels: int = 200) -> np.ndarray:
    """Evaluate M(t0) by quadrature of the full integrand at each phase."""
    t, w = _gauss_nodes(conn.t_minus, conn.t_plus, panels, 16)
    t0 = np.atleast_1d(np.asarray(t0, float))
    out = np.array([np.sum(w * melnikov_integrand(conn, t, s)) for s in t0])
    return out


# -- direct measurement of the splitting ---------------------------------------------

@dataclass(frozen=True)
class SplittingSamples:
    t0: np.ndarray
    gap: np.ndarray
    lambda1: float
    phi_unstable: np.ndarray = field(repr=False)
    phi_stable: np.ndarray = field(repr=False)

    def sign_changes(self) -> int:
        """Sign changes of the gap over one period pi (cyclically)."""
        s = np.sign(self.gap)
        s = s[s != 0]
        return int(np.sum(s != np.roll(s, 1)))


def _reduced_rhs(p: ModelParams):
    def rhs(t, y):
        d1, d2 = eval_reduced(p, y[0], y[1], t)
        return [d1, d2]
    return rhs


def _slice(p: ModelParams, starts: np.ndarray, theta0: float, backward: bool, phi0: float,
           t_max: float, rtol: float, atol: float, escape: float):
    """Flow each start time from ``(theta0, phi0)`` to the line theta = pi/2."""
    rhs = _reduced_rhs(p)

    def hit(t, y):
        return y[0] - 0.5 * math.pi
    hit.terminal = True

    def esc(t, y):
        return escape - abs(y[1] - phi0)
    esc.terminal = True

    tc, ph = [], []
    for s in starts:
        span = (s, s - t_max) if backward else (s, s + t_max)
        sol = solve_ivp(rhs, span, [theta0, phi0], method="DOP853", rtol=rtol, atol=atol, events=(hit, esc))
        if sol.status != 1 or len(sol.t_events[0]) == 0:
            raise ManifoldEscape(f"slice from start time {s:.4f} left the chart before theta = pi/2")
        tc.append(sol.t_events[0][0])
        ph.append(sol.y_events[0][0][1])
    return np.array(tc), np.array(ph)


def _periodic_fit(tc: np.ndarray, ph: np.ndarray, period: float) -> CubicSpline:
    u = np.mod(tc, period)
    order = np.argsort(u)
    u, ph = u[order], ph[order]
    keep = np.concatenate([[True], np.diff(u) > 1e-12])
    u, ph = u[keep], ph[keep]
    uu = np.concatenate([u, [u[0] + period]])
    pp = np.concatenate([ph, [ph[0]]])
    return CubicSpline(uu, pp, bc_type="periodic")


def measure_splitting(p: ModelParams, t0_grid=None, n_starts: int = 96, delta: float = 1e-7,
                      branch: int = 0, rtol: float = 1e-11, atol: float = 1e-13) -> SplittingSamples:
    """Gap in phi between the perturbed unstable slice of w and stable slice of v on theta = pi/2.

    Unstable side: start at ``theta = pi - delta`` on the unperturbed branch at
    ``n_starts`` start times over one forcing period and flow forward to
    theta = pi/2.  Errors in phi contract on the way, so starting on the
    unperturbed line is enough.  Stable side: the same backward from
    ``theta = delta``.  Both are interpolated periodically in the crossing
    time and differenced on ``t0_grid``.
    """
    if p.lambda2 != 0.0:
        raise ConfigError("measure_splitting needs lambda2 = 0")
    if abs(p.lambda1) > 0.1:
        raise ConfigError("measure_splitting is a small-lambda1 measurement (|lambda1| <= 0.1)")
    period = math.pi
    if t0_grid is None:
        t0_grid = np.linspace(0.0, period, 64, endpoint=False)
    t0_grid = np.asarray(t0_grid, float)
    phi0 = BRANCHES[branch]
    starts = np.linspace(0.0, period, n_starts, endpoint=False)
    t_max = 20.0 + 4.0 * math.log(1.0 / delta) / min(p.alpha1 + p.alpha2, p.alpha1 - p.alpha2)
    tu, pu = _slice(p, starts, math.pi - delta, False, phi0, t_max, rtol, atol, 0.5)
    ts, ps = _slice(p, starts, delta, True, phi0, t_max, rtol, atol, 0.5)
    fu, fs = _periodic_fit(tu, pu, period), _periodic_fit(ts, ps, period)
    gu, gs = fu(np.mod(t0_grid, period)), fs(np.mod(t0_grid, period))
    return SplittingSamples(t0_grid, gu - gs, p.lambda1, gu, gs)
