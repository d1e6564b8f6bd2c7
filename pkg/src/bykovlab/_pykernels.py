"""Pure-Python twin of the compiled integrator kernel.

Same algorithm, same control flow and same return dictionary as
``_kernels.pyx``; it exists so the package works without a C compiler and
so the compiled path can be checked against an independent transcription.
"""

import math

import numpy as np

C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
E = (-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40)
P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


def _field(p, sgn, x):
    a1, a2, l1, l2 = p
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    s12 = x1 * x1 + x2 * x2
    q = 1.0 - (s12 + x3 * x3 + x4 * x4)
    return [
        sgn * (x1 * q - x2 - a1 * x1 * x4 + a2 * x1 * x4 * x4 + l2 * x3 * x3 * x4),
        sgn * (x2 * q + x1 - a1 * x2 * x4 + a2 * x2 * x4 * x4),
        sgn * (x3 * q + a1 * x3 * x4 + a2 * x3 * x4 * x4 + l1 * x1 * x2 * x4 - l2 * x1 * x3 * x4),
        sgn * (x4 * q - a1 * (x3 * x3 - s12) - a2 * x4 * (s12 + x3 * x3) - l1 * x1 * x2 * x3),
    ]


def _jac(p, x):
    a1, a2, l1, l2 = p
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    q = 1.0 - (x1 * x1 + x2 * x2 + x3 * x3 + x4 * x4)
    d = q - a1 * x4 + a2 * x4 * x4
    return [
        d - 2.0 * x1 * x1,
        -2.0 * x1 * x2 - 1.0,
        -2.0 * x1 * x3 + 2.0 * l2 * x3 * x4,
        -2.0 * x1 * x4 - a1 * x1 + 2.0 * a2 * x1 * x4 + l2 * x3 * x3,
        -2.0 * x2 * x1 + 1.0,
        d - 2.0 * x2 * x2,
        -2.0 * x2 * x3,
        -2.0 * x2 * x4 - a1 * x2 + 2.0 * a2 * x2 * x4,
        -2.0 * x3 * x1 + l1 * x2 * x4 - l2 * x3 * x4,
        -2.0 * x3 * x2 + l1 * x1 * x4,
        q - 2.0 * x3 * x3 + a1 * x4 + a2 * x4 * x4 - l2 * x1 * x4,
        -2.0 * x3 * x4 + a1 * x3 + 2.0 * a2 * x3 * x4 + l1 * x1 * x2 - l2 * x1 * x3,
        -2.0 * x4 * x1 + 2.0 * a1 * x1 - 2.0 * a2 * x4 * x1 - l1 * x2 * x3,
        -2.0 * x4 * x2 + 2.0 * a1 * x2 - 2.0 * a2 * x4 * x2 - l1 * x1 * x3,
        -2.0 * x4 * x3 - 2.0 * a1 * x3 - 2.0 * a2 * x4 * x3 - l1 * x1 * x2,
        q - 2.0 * x4 * x4 - a2 * (x1 * x1 + x2 * x2 + x3 * x3),
    ]


def _rhs(p, sgn, dim, y):
    dy = _field(p, sgn, y)
    if dim > 4:
        J = _jac(p, y)
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for k in range(4):
                    acc += J[4 * i + k] * y[4 + 4 * k + j]
                dy.append(sgn * acc)
    return dy


def _quadric(Q, b, c, x):
    s = c
    for i in range(4):
        s += b[i] * x[i]
        for j in range(4):
            s += Q[i][j] * x[i] * x[j]
    return s


def _interp(dim, y, h, K, s):
    s2 = s * s
    w = [Pj[0] * s + Pj[1] * s2 + Pj[2] * s2 * s + Pj[3] * s2 * s2 for Pj in P]
    return [y[i] + h * sum(K[j][i] * w[j] for j in range(7)) for i in range(dim)]


def eval_field(params, x, sign=1.0):
    return np.array(_field(list(params), sign, list(x)))


def eval_jacobian(params, x):
    return np.array(_jac(list(params), list(x))).reshape(4, 4)


def integrate(params, y0, t0, t1, rtol, atol, max_step, h0, sign, renormalize,
              ev_Q, ev_b, ev_c, ev_dir, ev_max, ev_tol, t_eval, store_steps, max_steps):
    """Integrate the (optionally variational) system from ``t0`` to ``t1``.

    Returns a dict with ``status`` (0 reached t1, 1 terminal event,
    -1 step-size underflow, -2 step budget exhausted), the final time and
    state, optional accepted steps, located events, dense samples at
    ``t_eval`` and the maximum sphere drift | |x| - 1 | seen.
    """
    p = [float(v) for v in params]
    dim = len(y0)
    n_ev = len(ev_c)
    Qs = [np.asarray(q).tolist() for q in ev_Q]
    bs = [np.asarray(b).tolist() for b in ev_b]
    cs = [float(c) for c in ev_c]
    t_eval = [float(v) for v in t_eval]
    n_te = len(t_eval)
    y = [float(v) for v in y0]
    t = float(t0)
    te_out = np.full((n_te, dim), np.nan)
    steps_t, steps_y, ev_index, ev_time, ev_state = [], [], [], [], []

    sprev = [_quadric(Qs[e], bs[e], cs[e], y) for e in range(n_ev)]
    ev_count = [0] * n_ev
    if store_steps:
        steps_t.append(t)
        steps_y.append(list(y))
    drift = abs(math.sqrt(sum(v * v for v in y[:4])) - 1.0)
    K = [None] * 7
    K[0] = _rhs(p, sign, dim, y)
    if h0 <= 0.0:
        # ratio of state and slope norms, both weighted by the tolerance
        w = [atol + abs(y[i]) * rtol for i in range(dim)]
        sc = math.sqrt(sum((K[0][i] / w[i]) ** 2 for i in range(dim)) / dim)
        dd = math.sqrt(sum((y[i] / w[i]) ** 2 for i in range(dim)) / dim)
        h = 0.01 * dd / sc if (sc > 1e-5 and dd > 1e-5) else 1e-6
        h = min(h, max_step)
    else:
        h = h0
    te_idx = 0
    while te_idx < n_te and t_eval[te_idx] < t0:
        te_idx += 1
    while te_idx < n_te and t_eval[te_idx] == t0:
        te_out[te_idx] = y
        te_idx += 1

    n_acc = n_rej = 0
    status = 0
    done = False
    while not done:
        if n_acc + n_rej >= max_steps:
            status = -2
            break
        if t + h >= t1:
            h = t1 - t
        if h < 1e-14 * (abs(t) + 1.0):
            status = -1
            break
        for s in range(1, 6):
            a = A[s]
            ytmp = [y[i] + h * sum(a[j] * K[j][i] for j in range(s)) for i in range(dim)]
            K[s] = _rhs(p, sign, dim, ytmp)
        ynew = [y[i] + h * (B[0] * K[0][i] + B[2] * K[2][i] + B[3] * K[3][i]
                            + B[4] * K[4][i] + B[5] * K[5][i]) for i in range(dim)]
        K[6] = _rhs(p, sign, dim, ynew)
        err = 0.0
        for i in range(dim):
            e_i = h * (E[0] * K[0][i] + E[2] * K[2][i] + E[3] * K[3][i] + E[4] * K[4][i]
                       + E[5] * K[5][i] + E[6] * K[6][i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e_i / sc) ** 2
        err = math.sqrt(err / dim)
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            n_rej += 1
            continue

        tnew = t + h
        n_acc += 1
        snew = [_quadric(Qs[e], bs[e], cs[e], ynew) for e in range(n_ev)]
        while True:
            best_e, best_s = -1, 2.0
            for e in range(n_ev):
                crossed = ((ev_dir[e] >= 0 and sprev[e] < 0.0 and snew[e] >= 0.0)
                           or (ev_dir[e] <= 0 and sprev[e] > 0.0 and snew[e] <= 0.0))
                if not crossed:
                    continue
                lo, hi, slo, mid = 0.0, 1.0, sprev[e], 1.0
                if abs(snew[e]) > ev_tol:
                    for _ in range(200):
                        mid = 0.5 * (lo + hi)
                        smid = _quadric(Qs[e], bs[e], cs[e], _interp(dim, y, h, K, mid))
                        if abs(smid) <= ev_tol:
                            break
                        if (smid < 0.0) == (slo < 0.0):
                            lo, slo = mid, smid
                        else:
                            hi = mid
                        if hi - lo < 1e-17:
                            break
                if mid < best_s:
                    best_s, best_e = mid, e
            if best_e < 0:
                break
            ymid = _interp(dim, y, h, K, best_s)
            ev_index.append(best_e)
            ev_time.append(t + best_s * h)
            ev_state.append(ymid)
            ev_count[best_e] += 1
            sprev[best_e] = snew[best_e]
            if ev_max[best_e] > 0 and ev_count[best_e] >= ev_max[best_e]:
                while te_idx < n_te and t_eval[te_idx] <= t + best_s * h:
                    te_out[te_idx] = _interp(dim, y, h, K, (t_eval[te_idx] - t) / h)
                    te_idx += 1
                t = t + best_s * h
                y = ymid
                status = 1
                done = True
                break
        if done:
            if store_steps:
                steps_t.append(t)
                steps_y.append(list(y))
            break
        sprev = snew
        while te_idx < n_te and t_eval[te_idx] <= tnew:
            te_out[te_idx] = _interp(dim, y, h, K, (t_eval[te_idx] - t) / h)
            te_idx += 1
        t = tnew
        y = ynew
        nrm = math.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3])
        drift = max(drift, abs(nrm - 1.0))
        if renormalize and nrm > 0.0:
            y = [v / nrm for v in y[:4]] + y[4:]
            K[6] = _rhs(p, sign, dim, y)
        K[0] = K[6]
        if store_steps:
            steps_t.append(t)
            steps_y.append(list(y))
        if t >= t1:
            break
        fac = 0.9 * err ** -0.2 if err > 1e-10 else 10.0
        h *= min(10.0, max(0.2, fac))
        h = min(h, max_step)

    return {
        "status": status,
        "t": t,
        "y": np.array(y),
        "steps_t": np.array(steps_t, dtype=float),
        "steps_y": np.array(steps_y, dtype=float).reshape(-1, dim),
        "ev_index": np.array(ev_index, dtype=np.int64),
        "ev_t": np.array(ev_time, dtype=float),
        "ev_y": np.array(ev_state, dtype=float).reshape(-1, dim),
        "t_eval_y": te_out,
        "n_accepted": n_acc,
        "n_rejected": n_rej,
        "drift_max": drift,
    }


def _pair_linking(P1, P2, P3, P4):
    r13, r14 = P3 - P1, P4 - P1
    r23, r24 = P3 - P2, P4 - P2
    r12, r34 = P2 - P1, P4 - P3

    n1 = np.cross(r13, r14)
    n2 = np.cross(r14, r24)
    n3 = np.cross(r24, r23)
    n4 = np.cross(r23, r13)

    def asin_dot(a, b):
        # same operation order as the compiled kernel: dot / (|a| |b|)
        den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
        d = np.divide(np.sum(a * b, axis=-1), den, out=np.zeros_like(den), where=den > 0)
        return np.arcsin(np.clip(d, -1.0, 1.0))

    omega = asin_dot(n1, n2) + asin_dot(n2, n3) + asin_dot(n3, n4) + asin_dot(n4, n1)
    return omega * np.sign(np.sum(np.cross(r34, r12) * r13, axis=-1))


def gauss_sum(A, B, max_pairs=2_000_000):
    """Gauss linking double sum of two closed polylines (last point equal to the first)."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    P3, P4 = B[:-1][None, :, :], B[1:][None, :, :]
    chunk = max(1, max_pairs // max(len(B) - 1, 1))
    total = 0.0
    for s in range(0, len(A) - 1, chunk):
        e = min(s + chunk, len(A) - 1)
        total += float(_pair_linking(A[s:e, None, :], A[s + 1:e + 1, None, :], P3, P4).sum())
    return total / (4 * math.pi)
