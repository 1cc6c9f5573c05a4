"""Compiled propagation kernels for the two-body extremal flow.

The state vector is ``y = (z, M)`` with ``z = (q, v, p_q, p_v)`` (12 reals)
followed by an optional row-major ``12 x ncol`` block of variational
solutions.  Everything here is numba-compiled; the Python-facing modules
wrap these kernels and never rely on their internals.
"""
import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

MODE_FIXED = 0  # throttle held at par (0 or 1)
MODE_REGULARIZED = 1  # throttle maximizes rho*|p_v| - lam*rho - (1-lam)*rho**2

STATUS_DONE = 0
STATUS_EVENT = 1
STATUS_STEP_FAILURE = 2
STATUS_MAX_STEPS = 3

_NS = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_NS])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


_NZ = 12  # extremal coordinates (q, v, p_q, p_v)


@njit(cache=True)
def _control(pv, eps, mode, par, dU):
    """Thrust vector ``u(p_v)``; writes its Jacobian ``du/dp_v`` into ``dU``."""
    u = np.zeros(3)
    for i in range(3):
        for j in range(3):
            dU[i, j] = 0.0
    s = np.sqrt(pv[0] ** 2 + pv[1] ** 2 + pv[2] ** 2)
    if mode == MODE_FIXED:
        rho = par
        if rho == 0.0:
            return u
        r = rho
        dr = 0.0
    else:
        lam = par
        if lam == 0.0 and s < 2.0:
            # unclamped energy branch, smooth through p_v = 0
            for i in range(3):
                u[i] = 0.5 * eps * pv[i]
                dU[i, i] = 0.5 * eps
            return u
        r = (s - lam) / (2.0 * (1.0 - lam))
        dr = 1.0 / (2.0 * (1.0 - lam))
        if r <= 0.0:
            return u
        if r >= 1.0:
            r = 1.0
            dr = 0.0
    for i in range(3):
        u[i] = eps * r * pv[i] / s
    for i in range(3):
        for j in range(3):
            w = pv[i] * pv[j] / (s * s)
            d = 1.0 if i == j else 0.0
            dU[i, j] = eps * (dr * w + r / s * (d - w))
    return u


@njit(cache=True)
def rhs(y, mu, eps, mode, par, ncol, out):
    q = y[0:3]
    v = y[3:6]
    pq = y[6:9]
    pv = y[9:12]
    r2 = q[0] ** 2 + q[1] ** 2 + q[2] ** 2
    r = np.sqrt(r2)
    r3 = r2 * r
    r5 = r3 * r2
    r7 = r5 * r2
    dU = np.empty((3, 3))
    u = _control(pv, eps, mode, par, dU)
    qw = q[0] * pv[0] + q[1] * pv[1] + q[2] * pv[2]
    hess = np.empty((3, 3))
    tw = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            d = 1.0 if i == j else 0.0
            hess[i, j] = mu * (d / r3 - 3.0 * q[i] * q[j] / r5)
            tw[i, j] = mu * (-3.0 * (pv[i] * q[j] + q[i] * pv[j] + qw * d) / r5
                             + 15.0 * qw * q[i] * q[j] / r7)
    for i in range(3):
        out[i] = v[i]
        out[3 + i] = -mu * q[i] / r3 + u[i]
        acc = 0.0
        for j in range(3):
            acc += hess[i, j] * pv[j]
        out[6 + i] = acc
        out[9 + i] = -pq[i]
    if ncol == 0:
        return
    base = 12
    for c in range(ncol):
        for i in range(3):
            mq = 0.0
            mv = 0.0
            mpq = 0.0
            # rows: q -> 0..2, v -> 3..5, pq -> 6..8, pv -> 9..11
            for j in range(3):
                Mq = y[base + j * ncol + c]
                Mpv = y[base + (9 + j) * ncol + c]
                mv += -hess[i, j] * Mq + dU[i, j] * Mpv
                mpq += tw[i, j] * Mq + hess[i, j] * Mpv
            mq = y[base + (3 + i) * ncol + c]
            out[base + i * ncol + c] = mq
            out[base + (3 + i) * ncol + c] = mv
            out[base + (6 + i) * ncol + c] = mpq
            out[base + (9 + i) * ncol + c] = -y[base + (6 + i) * ncol + c]


@njit(cache=True)
def _step(y, f0, h, mu, eps, mode, par, ncol, K):
    """One DOP853 step; ``K[0]`` must hold ``f0``.  Returns the new state."""
    n = y.shape[0]
    K[0, :] = f0
    tmp = np.empty(n)
    for s in range(1, _NS):
        for k in range(n):
            acc = 0.0
            for j in range(s):
                acc += _A[s, j] * K[j, k]
            tmp[k] = y[k] + h * acc
        rhs(tmp, mu, eps, mode, par, ncol, K[s])
    y_new = np.empty(n)
    for k in range(n):
        acc = 0.0
        for j in range(_NS):
            acc += _B[j] * K[j, k]
        y_new[k] = y[k] + h * acc
    rhs(y_new, mu, eps, mode, par, ncol, K[_NS])
    return y_new


@njit(cache=True)
def _error_norm(y, y_new, K, h, rtol, atol):
    # control the extremal only: steps do not depend on an attached
    # variational block, so both propagations share one trajectory
    n = _NZ
    e5 = 0.0
    e3 = 0.0
    for k in range(n):
        sc = atol + rtol * max(abs(y[k]), abs(y_new[k]))
        a5 = 0.0
        a3 = 0.0
        for j in range(_NS + 1):
            a5 += _E5[j] * K[j, k]
            a3 += _E3[j] * K[j, k]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n)


@njit(cache=True)
def single_step(y, h, mu, eps, mode, par, ncol):
    """Advance ``y`` by exactly ``h`` with one DOP853 step (no error control)."""
    n = y.shape[0]
    K = np.empty((_NS + 1, n))
    f0 = np.empty(n)
    rhs(y, mu, eps, mode, par, ncol, f0)
    return _step(y, f0, h, mu, eps, mode, par, ncol, K)


@njit(cache=True)
def _switch_fn(y):
    return np.sqrt(y[9] ** 2 + y[10] ** 2 + y[11] ** 2) - 1.0


@njit(cache=True)
def _switch_rate(y):
    # d/dt |p_v|^2 / 2: same sign and zeros as H01, finite at p_v = 0
    return -(y[6] * y[9] + y[7] * y[10] + y[8] * y[11])


@njit(cache=True)
def _refine(y, h, which, fa, fb, mu, eps, mode, par, ncol, tol):
    """Root of ``s -> fn(step(y, s))`` on ``[0, h]`` by the Illinois method."""
    a = 0.0
    b = h
    side = 0
    s = b
    for _ in range(200):
        s = (a * fb - b * fa) / (fb - fa)
        ys = single_step(y, s, mu, eps, mode, par, ncol)
        fs = _switch_fn(ys) if which == 0 else _switch_rate(ys)
        if abs(fs) <= tol or abs(b - a) <= 4e-16 * max(1.0, abs(s)):
            return s
        if fs * fb > 0.0:
            b = s
            fb = fs
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a = s
            fa = fs
            if side == 1:
                fb *= 0.5
            side = 1
    return s


@njit(cache=True)
def integrate(y0, t0, t1, mu, eps, mode, par, ncol, rtol, atol, h_init,
              event_sign, event_tol, max_steps):
    """Adaptive DOP853 integration from ``t0`` to ``t1`` (either direction).

    With ``event_sign`` = +1 (-1) the arc is expected to keep ``|p_v| - 1``
    positive (negative); integration stops at the first zero, including
    tangential double crossings inside a step.

    Returns ``(ts, ys, status, h_last)``.
    """
    n = y0.shape[0]
    direction = 1.0 if t1 >= t0 else -1.0
    cap = 256
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    ts[0] = t0
    ys[0, :] = y0
    count = 1
    K = np.empty((_NS + 1, n))
    f = np.empty(n)
    y = y0.copy()
    t = t0
    rhs(y, mu, eps, mode, par, ncol, f)
    span = abs(t1 - t0)
    if span == 0.0:
        return ts[:1].copy(), ys[:1].copy(), STATUS_DONE, 0.0
    if h_init > 0.0:
        h_abs = min(h_init, span)
    else:
        d0 = 0.0
        d1 = 0.0
        for k in range(_NZ):
            sc = atol + rtol * abs(y[k])
            d0 += (y[k] / sc) ** 2
            d1 += (f[k] / sc) ** 2
        d0 = np.sqrt(d0 / _NZ)
        d1 = np.sqrt(d1 / _NZ)
        h_abs = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h_abs = min(h_abs, span)
    status = STATUS_MAX_STEPS
    rejected = False
    steps = 0
    while steps < max_steps:
        steps += 1
        min_step = 10.0 * abs(np.nextafter(t, direction * np.inf) - t)
        if h_abs < min_step:
            status = STATUS_STEP_FAILURE
            break
        last = False
        if h_abs >= abs(t1 - t):
            h_abs = abs(t1 - t)
            last = True
        h = direction * h_abs
        y_new = _step(y, f, h, mu, eps, mode, par, ncol, K)
        err = _error_norm(y, y_new, K, h, rtol, atol)
        if err >= 1.0:
            h_abs *= max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
            rejected = True
            continue
        # event handling on the accepted step
        s_root = 0.0
        found = False
        if event_sign != 0:
            g0 = _switch_fn(y)
            if g0 * event_sign <= 0.0:
                g0 = event_sign * 1e-300
            g1 = _switch_fn(y_new)
            if g1 * event_sign < 0.0:
                s_root = _refine(y, h, 0, g0, g1, mu, eps, mode, par, ncol, event_tol)
                found = True
            else:
                r0 = _switch_rate(y)
                r1 = _switch_rate(y_new)
                # interior extremum of |p_v| - 1 heading towards zero
                if r0 * event_sign < 0.0 and r1 * event_sign > 0.0:
                    s_ext = _refine(y, h, 1, r0, r1, mu, eps, mode, par, ncol, 1e-14)
                    ye = single_step(y, s_ext, mu, eps, mode, par, ncol)
                    ge = _switch_fn(ye)
                    if ge * event_sign < 0.0:
                        s_root = _refine(y, s_ext, 0, g0, ge, mu, eps, mode, par,
                                         ncol, event_tol)
                        found = True
        if found:
            y_new = single_step(y, s_root, mu, eps, mode, par, ncol)
            t_new = t + s_root
            status = STATUS_EVENT
        else:
            t_new = t + h
        if count >= cap:
            cap *= 2
            ts2 = np.empty(cap)
            ys2 = np.empty((cap, n))
            ts2[:count] = ts[:count]
            ys2[:count, :] = ys[:count, :]
            ts = ts2
            ys = ys2
        ts[count] = t_new
        ys[count, :] = y_new
        count += 1
        if status == STATUS_EVENT:
            break
        t = t_new
        y = y_new
        for k in range(n):
            f[k] = K[_NS, k]
        if last:
            status = STATUS_DONE
            break
        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(_MAX_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
        if rejected:
            factor = min(1.0, factor)
        h_abs *= factor
        rejected = False
    return ts[:count].copy(), ys[:count].copy(), status, h_abs
