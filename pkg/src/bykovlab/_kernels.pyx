# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Dormand-Prince 5(4) integrator for the quartic field on S^3.

The public entry points mirror :mod:`bykovlab._pykernels` exactly; the
selection between the two happens in :mod:`bykovlab._backend`.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport asin, fabs, sqrt, pow, M_PI

cnp.import_array()

DEF NSTAGE = 7
DEF MAXDIM = 20

# Dormand-Prince tableau.
cdef double C2 = 1.0 / 5.0, C3 = 3.0 / 10.0, C4 = 4.0 / 5.0, C5 = 8.0 / 9.0
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0, A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0, A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0, B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0
cdef double E1 = -71.0 / 57600.0, E3 = 71.0 / 16695.0, E4 = -71.0 / 1920.0, E5 = 17253.0 / 339200.0
cdef double E6 = -22.0 / 525.0, E7 = 1.0 / 40.0

# Shampine dense-output polynomial, y(t + s h) = y + h * sum_j K_j * P_j(s).
cdef double P[7][4]
P[0][:] = [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0]
P[1][:] = [0.0, 0.0, 0.0, 0.0]
P[2][:] = [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0]
P[3][:] = [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0]
P[4][:] = [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0]
P[5][:] = [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0]
P[6][:] = [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0]


cdef inline void _field(const double* p, double sgn, const double* x, double* f) noexcept nogil:
    cdef double a1 = p[0], a2 = p[1], l1 = p[2], l2 = p[3]
    cdef double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3]
    cdef double s12 = x1 * x1 + x2 * x2
    cdef double q = 1.0 - (s12 + x3 * x3 + x4 * x4)
    f[0] = sgn * (x1 * q - x2 - a1 * x1 * x4 + a2 * x1 * x4 * x4 + l2 * x3 * x3 * x4)
    f[1] = sgn * (x2 * q + x1 - a1 * x2 * x4 + a2 * x2 * x4 * x4)
    f[2] = sgn * (x3 * q + a1 * x3 * x4 + a2 * x3 * x4 * x4 + l1 * x1 * x2 * x4 - l2 * x1 * x3 * x4)
    f[3] = sgn * (x4 * q - a1 * (x3 * x3 - s12) - a2 * x4 * (s12 + x3 * x3) - l1 * x1 * x2 * x3)


cdef inline void _jac(const double* p, const double* x, double* J) noexcept nogil:
    cdef double a1 = p[0], a2 = p[1], l1 = p[2], l2 = p[3]
    cdef double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3]
    cdef double q = 1.0 - (x1 * x1 + x2 * x2 + x3 * x3 + x4 * x4)
    cdef double d = q - a1 * x4 + a2 * x4 * x4
    J[0] = d - 2.0 * x1 * x1
    J[1] = -2.0 * x1 * x2 - 1.0
    J[2] = -2.0 * x1 * x3 + 2.0 * l2 * x3 * x4
    J[3] = -2.0 * x1 * x4 - a1 * x1 + 2.0 * a2 * x1 * x4 + l2 * x3 * x3
    J[4] = -2.0 * x2 * x1 + 1.0
    J[5] = d - 2.0 * x2 * x2
    J[6] = -2.0 * x2 * x3
    J[7] = -2.0 * x2 * x4 - a1 * x2 + 2.0 * a2 * x2 * x4
    J[8] = -2.0 * x3 * x1 + l1 * x2 * x4 - l2 * x3 * x4
    J[9] = -2.0 * x3 * x2 + l1 * x1 * x4
    J[10] = q - 2.0 * x3 * x3 + a1 * x4 + a2 * x4 * x4 - l2 * x1 * x4
    J[11] = -2.0 * x3 * x4 + a1 * x3 + 2.0 * a2 * x3 * x4 + l1 * x1 * x2 - l2 * x1 * x3
    J[12] = -2.0 * x4 * x1 + 2.0 * a1 * x1 - 2.0 * a2 * x4 * x1 - l1 * x2 * x3
    J[13] = -2.0 * x4 * x2 + 2.0 * a1 * x2 - 2.0 * a2 * x4 * x2 - l1 * x1 * x3
    J[14] = -2.0 * x4 * x3 - 2.0 * a1 * x3 - 2.0 * a2 * x4 * x3 - l1 * x1 * x2
    J[15] = q - 2.0 * x4 * x4 - a2 * (x1 * x1 + x2 * x2 + x3 * x3)


cdef inline void _rhs(const double* p, double sgn, int dim, const double* y, double* dy) noexcept nogil:
    cdef double J[16]
    cdef int i, j, k
    cdef double acc
    _field(p, sgn, y, dy)
    if dim > 4:
        _jac(p, y, J)
        # Phi stored row-major in y[4:20]; d/dt Phi = sgn * J Phi
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for k in range(4):
                    acc += J[4 * i + k] * y[4 + 4 * k + j]
                dy[4 + 4 * i + j] = sgn * acc


cdef inline double _quadric(const double* Q, const double* b, double c, const double* x) noexcept nogil:
    cdef double s = c
    cdef int i, j
    for i in range(4):
        s += b[i] * x[i]
        for j in range(4):
            s += Q[4 * i + j] * x[i] * x[j]
    return s


cdef inline void _interp(int dim, const double* y, double h, double K[NSTAGE][MAXDIM],
                         double s, double* out) noexcept nogil:
    cdef double s2 = s * s
    cdef double w[7]
    cdef int j, i
    for j in range(NSTAGE):
        w[j] = P[j][0] * s + P[j][1] * s2 + P[j][2] * s2 * s + P[j][3] * s2 * s2
    for i in range(dim):
        out[i] = y[i]
        for j in range(NSTAGE):
            out[i] += h * K[j][i] * w[j]


def eval_field(double[::1] params, double[::1] x, double sign=1.0):
    cdef double f[4]
    _field(&params[0], sign, &x[0], f)
    return np.array([f[0], f[1], f[2], f[3]])


def eval_jacobian(double[::1] params, double[::1] x):
    cdef double J[16]
    _jac(&params[0], &x[0], J)
    out = np.empty((4, 4))
    cdef double[:, ::1] o = out
    cdef int i
    for i in range(16):
        o[i // 4, i % 4] = J[i]
    return out


def integrate(double[::1] params, double[::1] y0, double t0, double t1,
              double rtol, double atol, double max_step, double h0, double sign,
              bint renormalize,
              double[:, :, ::1] ev_Q, double[:, ::1] ev_b, double[::1] ev_c,
              long[::1] ev_dir, long[::1] ev_max, double ev_tol,
              double[::1] t_eval, bint store_steps, long max_steps):
    """Integrate from t0 to t1 (t1 > t0); see ``_pykernels.integrate``."""
    cdef int dim = y0.shape[0]
    cdef int n_ev = ev_c.shape[0]
    cdef int n_te = t_eval.shape[0]
    cdef double K[NSTAGE][MAXDIM]
    cdef double y[MAXDIM]
    cdef double ynew[MAXDIM]
    cdef double ytmp[MAXDIM]
    cdef double ymid[MAXDIM]
    cdef double sprev[16]
    cdef double snew[16]
    cdef long ev_count[16]
    cdef const double* pp = &params[0]
    cdef double t = t0, h, err, sc, e_i, fac, nrm, tnew
    cdef double drift = 0.0, dd
    cdef long n_acc = 0, n_rej = 0
    cdef int i, e, it, status = 0, te_idx = 0
    cdef double lo, hi, mid, slo, smid, sabs
    cdef bint crossed, done = False
    cdef double min_h
    cdef int best_e
    cdef double best_s

    if dim > MAXDIM or n_ev > 16:
        raise ValueError("dimension or event count too large")
    for i in range(dim):
        y[i] = y0[i]

    steps_t = []
    steps_y = []
    ev_index = []
    ev_time = []
    ev_state = []
    te_out = np.full((n_te, dim), np.nan)
    cdef double[:, ::1] te_view = te_out

    for e in range(n_ev):
        sprev[e] = _quadric(&ev_Q[e, 0, 0], &ev_b[e, 0], ev_c[e], y)
        ev_count[e] = 0
    if store_steps:
        steps_t.append(t)
        steps_y.append([y[i] for i in range(dim)])
    nrm = sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3])
    drift = fabs(nrm - 1.0)

    _rhs(pp, sign, dim, y, K[0])
    if h0 <= 0.0:
        # ratio of state and slope norms, both weighted by the tolerance
        sc = 0.0
        dd = 0.0
        for i in range(dim):
            e_i = atol + fabs(y[i]) * rtol
            sc += (K[0][i] / e_i) ** 2
            dd += (y[i] / e_i) ** 2
        sc = sqrt(sc / dim)
        dd = sqrt(dd / dim)
        h = 0.01 * dd / sc if (sc > 1e-5 and dd > 1e-5) else 1e-6
        if h > max_step:
            h = max_step
    else:
        h = h0
    # skip t_eval points at or before t0
    while te_idx < n_te and t_eval[te_idx] < t0:
        te_idx += 1
    while te_idx < n_te and t_eval[te_idx] == t0:
        for i in range(dim):
            te_view[te_idx, i] = y[i]
        te_idx += 1

    while not done:
        if n_acc + n_rej >= max_steps:
            status = -2
            break
        if t + h >= t1:
            h = t1 - t
        min_h = 1e-14 * (fabs(t) + 1.0)
        if h < min_h:
            status = -1
            break
        # stages
        for i in range(dim):
            ytmp[i] = y[i] + h * A21 * K[0][i]
        _rhs(pp, sign, dim, ytmp, K[1])
        for i in range(dim):
            ytmp[i] = y[i] + h * (A31 * K[0][i] + A32 * K[1][i])
        _rhs(pp, sign, dim, ytmp, K[2])
        for i in range(dim):
            ytmp[i] = y[i] + h * (A41 * K[0][i] + A42 * K[1][i] + A43 * K[2][i])
        _rhs(pp, sign, dim, ytmp, K[3])
        for i in range(dim):
            ytmp[i] = y[i] + h * (A51 * K[0][i] + A52 * K[1][i] + A53 * K[2][i] + A54 * K[3][i])
        _rhs(pp, sign, dim, ytmp, K[4])
        for i in range(dim):
            ytmp[i] = y[i] + h * (A61 * K[0][i] + A62 * K[1][i] + A63 * K[2][i] + A64 * K[3][i] + A65 * K[4][i])
        _rhs(pp, sign, dim, ytmp, K[5])
        for i in range(dim):
            ynew[i] = y[i] + h * (B1 * K[0][i] + B3 * K[2][i] + B4 * K[3][i] + B5 * K[4][i] + B6 * K[5][i])
        _rhs(pp, sign, dim, ynew, K[6])
        err = 0.0
        for i in range(dim):
            e_i = h * (E1 * K[0][i] + E3 * K[2][i] + E4 * K[3][i] + E5 * K[4][i] + E6 * K[5][i] + E7 * K[6][i])
            sc = atol + rtol * (fabs(y[i]) if fabs(y[i]) > fabs(ynew[i]) else fabs(ynew[i]))
            e_i = e_i / sc
            err += e_i * e_i
        err = sqrt(err / dim)
        if err > 1.0:
            fac = 0.9 * pow(err, -0.2)
            if fac < 0.2:
                fac = 0.2
            h *= fac
            n_rej += 1
            continue

        # accepted step [t, t + h]
        tnew = t + h
        n_acc += 1
        # events, processed in time order
        for e in range(n_ev):
            snew[e] = _quadric(&ev_Q[e, 0, 0], &ev_b[e, 0], ev_c[e], ynew)
        while True:
            # earliest crossing among all events in (0, 1]
            best_e = -1
            best_s = 2.0
            for e in range(n_ev):
                if ev_dir[e] >= 0 and sprev[e] < 0.0 and snew[e] >= 0.0:
                    crossed = True
                elif ev_dir[e] <= 0 and sprev[e] > 0.0 and snew[e] <= 0.0:
                    crossed = True
                else:
                    crossed = False
                if not crossed:
                    continue
                lo = 0.0
                hi = 1.0
                slo = sprev[e]
                mid = 1.0
                if fabs(snew[e]) > ev_tol:
                    for it in range(200):
                        mid = 0.5 * (lo + hi)
                        _interp(dim, y, h, K, mid, ymid)
                        smid = _quadric(&ev_Q[e, 0, 0], &ev_b[e, 0], ev_c[e], ymid)
                        if fabs(smid) <= ev_tol:
                            break
                        if (smid < 0.0) == (slo < 0.0):
                            lo = mid
                            slo = smid
                        else:
                            hi = mid
                        if hi - lo < 1e-17:
                            break
                if mid < best_s:
                    best_s = mid
                    best_e = e
            if best_e < 0:
                break
            _interp(dim, y, h, K, best_s, ymid)
            ev_index.append(best_e)
            ev_time.append(t + best_s * h)
            ev_state.append([ymid[i] for i in range(dim)])
            ev_count[best_e] += 1
            # at most one crossing per event and step
            sprev[best_e] = snew[best_e]
            if ev_max[best_e] > 0 and ev_count[best_e] >= ev_max[best_e]:
                # terminate at the event
                while te_idx < n_te and t_eval[te_idx] <= t + best_s * h:
                    _interp(dim, y, h, K, (t_eval[te_idx] - t) / h, ytmp)
                    for i in range(dim):
                        te_view[te_idx, i] = ytmp[i]
                    te_idx += 1
                t = t + best_s * h
                for i in range(dim):
                    y[i] = ymid[i]
                status = 1
                done = True
                break
        if done:
            if store_steps:
                steps_t.append(t)
                steps_y.append([y[i] for i in range(dim)])
            break
        for e in range(n_ev):
            sprev[e] = snew[e]
        # dense samples
        while te_idx < n_te and t_eval[te_idx] <= tnew:
            _interp(dim, y, h, K, (t_eval[te_idx] - t) / h, ytmp)
            for i in range(dim):
                te_view[te_idx, i] = ytmp[i]
            te_idx += 1
        t = tnew
        for i in range(dim):
            y[i] = ynew[i]
        nrm = sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3])
        dd = fabs(nrm - 1.0)
        if dd > drift:
            drift = dd
        if renormalize and nrm > 0.0:
            for i in range(4):
                y[i] /= nrm
            _rhs(pp, sign, dim, y, K[6])
        for i in range(dim):
            K[0][i] = K[6][i]
        if store_steps:
            steps_t.append(t)
            steps_y.append([y[i] for i in range(dim)])
        if t >= t1:
            done = True
            break
        fac = 0.9 * pow(err, -0.2) if err > 1e-10 else 10.0
        if fac > 10.0:
            fac = 10.0
        if fac < 0.2:
            fac = 0.2
        h *= fac
        if h > max_step:
            h = max_step

    return {
        "status": status,
        "t": t,
        "y": np.array([y[i] for i in range(dim)]),
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


cdef inline void _cross(const double* a, const double* b, double* c) noexcept nogil:
    c[0] = a[1] * b[2] - a[2] * b[1]
    c[1] = a[2] * b[0] - a[0] * b[2]
    c[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _unit_dot(const double* a, const double* b) noexcept nogil:
    cdef double na = sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    cdef double nb = sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
    cdef double d
    if na == 0.0 or nb == 0.0:
        return 0.0
    d = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb)
    if d > 1.0:
        d = 1.0
    elif d < -1.0:
        d = -1.0
    return asin(d)


def gauss_sum(double[:, ::1] A, double[:, ::1] B):
    """Gauss linking double sum of two closed polylines (last point equal to the first)."""
    cdef Py_ssize_t i, j, k, na = A.shape[0] - 1, nb = B.shape[0] - 1
    cdef double r13[3], r14[3], r23[3], r24[3], r12[3], r34[3]
    cdef double n1[3], n2[3], n3[3], n4[3], c[3]
    cdef double omega, s, total = 0.0
    with nogil:
        for i in range(na):
            for j in range(nb):
                for k in range(3):
                    r13[k] = B[j, k] - A[i, k]
                    r14[k] = B[j + 1, k] - A[i, k]
                    r23[k] = B[j, k] - A[i + 1, k]
                    r24[k] = B[j + 1, k] - A[i + 1, k]
                    r12[k] = A[i + 1, k] - A[i, k]
                    r34[k] = B[j + 1, k] - B[j, k]
                _cross(r13, r14, n1)
                _cross(r14, r24, n2)
                _cross(r24, r23, n3)
                _cross(r23, r13, n4)
                omega = _unit_dot(n1, n2) + _unit_dot(n2, n3) + _unit_dot(n3, n4) + _unit_dot(n4, n1)
                _cross(r34, r12, c)
                s = c[0] * r13[0] + c[1] * r13[1] + c[2] * r13[2]
                if s > 0:
                    total += omega
                elif s < 0:
                    total -= omega
    return total / (4.0 * M_PI)
