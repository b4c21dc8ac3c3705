"""Compiled inner loops for time stepping.

The shell right-hand side here mirrors :func:`dyadic.models.rhs` operation for
operation, so both produce bitwise-identical derivatives. State layout is the
flat vector ``[a_0..a_k, b_0..b_k]``; kind 3 is a dense linear system
``y' = M y`` used for linearized dynamics.
"""
import numpy as np
from numba import njit

EULER, MHD_FORWARD, MHD_BIDIRECTIONAL, LINEAR = 0, 1, 2, 3

# status codes returned by advance()
REACHED, POSITIVITY, NORM, NONFINITE, UNDERFLOW, MAX_STEPS = 0, 1, 2, 3, 4, 5

# Dormand-Prince 5(4): 5th-order propagation, embedded 4th-order error estimate.
DP_A = np.zeros((7, 7))
DP_A[1, :1] = [1 / 5]
DP_A[2, :2] = [3 / 40, 9 / 40]
DP_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
DP_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
DP_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
DP_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
# difference between the 5th- and 4th-order weights
DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0


@njit(cache=True)
def rhs(kind, lt, f, mat, y, out):
    if kind == LINEAR:
        m = y.size
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += mat[i, j] * y[j]
            out[i] = acc
        return
    n = lt.size
    for j in range(n):
        aj = y[j]
        bj = y[n + j]
        if j + 1 < n:
            an = y[j + 1]
            bn = y[n + j + 1]
        else:
            an = 0.0
            bn = 0.0
        if j > 0:
            ap = y[j - 1]
            bp = y[n + j - 1]
            lp = lt[j - 1]
        else:
            ap = 0.0
            bp = 0.0
            lp = 0.0
        ta = lt[j] * aj * an - lp * ap * ap
        if kind == EULER:
            out[j] = -ta + f[j]
            out[n + j] = 0.0
            continue
        tb = lt[j] * bj * bn - lp * bp * bp
        ind = lt[j] * (aj * bn - bj * an)
        if kind == MHD_FORWARD:
            out[j] = -ta - tb + f[j]
            out[n + j] = ind
        else:
            out[j] = -ta + tb + f[j]
            out[n + j] = -ind


@njit(cache=True)
def rk4_step(kind, lt, f, mat, y, h, out, K, tmp):
    m = y.size
    rhs(kind, lt, f, mat, y, K[0])
    for i in range(m):
        tmp[i] = y[i] + 0.5 * h * K[0, i]
    rhs(kind, lt, f, mat, tmp, K[1])
    for i in range(m):
        tmp[i] = y[i] + 0.5 * h * K[1, i]
    rhs(kind, lt, f, mat, tmp, K[2])
    for i in range(m):
        tmp[i] = y[i] + h * K[2, i]
    rhs(kind, lt, f, mat, tmp, K[3])
    for i in range(m):
        out[i] = y[i] + h / 6.0 * (K[0, i] + 2.0 * K[1, i] + 2.0 * K[2, i] + K[3, i])


@njit(cache=True)
def dp_step(kind, lt, f, mat, y, h, out, K):
    """One Dormand-Prince step; K[0] must hold rhs(y) on entry.

    Writes the 5th-order solution to ``out`` (and its derivative to K[6]) and
    returns the max-norm of the local error estimate.
    """
    m = y.size
    for s in range(1, 7):
        for i in range(m):
            acc = 0.0
            for r in range(s):
                acc += DP_A[s, r] * K[r, i]
            out[i] = y[i] + h * acc
        rhs(kind, lt, f, mat, out, K[s])
    err = 0.0
    for i in range(m):
        e = 0.0
        for r in range(7):
            e += DP_E[r] * K[r, i]
        e = abs(h * e)
        if not (e <= err):
            err = e  # also propagates NaN
    return err


@njit(cache=True)
def single_step(kind, lt, f, mat, y, h, adaptive, out, K, tmp):
    """One uncontrolled step of size h (used for event bisection)."""
    if adaptive:
        rhs(kind, lt, f, mat, y, K[0])
        dp_step(kind, lt, f, mat, y, h, out, K)
    else:
        rk4_step(kind, lt, f, mat, y, h, out, K, tmp)


@njit(cache=True)
def all_finite(y):
    for i in range(y.size):
        if not np.isfinite(y[i]):
            return False
    return True


@njit(cache=True)
def lost_positivity(y, n, check_b):
    for i in range(n):
        if y[i] <= 0.0:
            return True
    if check_b:
        for i in range(n, 2 * n):
            if y[i] <= 0.0:
                return True
    return False


@njit(cache=True)
def weighted_norm2(y, w):
    n = w.size
    acc = 0.0
    for j in range(n):
        acc += w[j] * (y[j] * y[j] + y[n + j] * y[n + j])
    return acc


@njit(cache=True)
def max_abs(y):
    v = 0.0
    for i in range(y.size):
        a = abs(y[i])
        if a > v:
            v = a
    return v


@njit(cache=True)
def advance(kind, lt, f, mat, y, yprev, t, t_target, h, adaptive, atol, rtol,
            dt_min, dt_max, watch_pos, check_b, norm_w, norm_limit, max_steps,
            K, ynew, tmp):
    """Step ``y`` (in place) from t toward t_target.

    Returns (status, t, h_next, t_prev, h_last, n_accepted, n_rejected). On an
    event status, ``yprev`` holds the state at ``t_prev`` and the step of size
    ``h_last`` from it crosses the event.
    """
    m = y.size
    n = lt.size
    nacc = 0
    nrej = 0
    t_prev = t
    h_last = 0.0
    if adaptive:
        rhs(kind, lt, f, mat, y, K[0])
        if not all_finite(K[0]):
            return NONFINITE, t, h, t_prev, h_last, nacc, nrej
    while t < t_target:
        if max_steps > 0 and nacc >= max_steps:
            return MAX_STEPS, t, h, t_prev, h_last, nacc, nrej
        remaining = t_target - t
        clipped = False
        h_use = h
        if h_use >= remaining * (1.0 - 1e-12):
            h_use = remaining
            clipped = True
        if adaptive:
            err = dp_step(kind, lt, f, mat, y, h_use, ynew, K)
            scale = atol + rtol * max(max_abs(y), max_abs(ynew))
            ratio = err / scale
            if ratio <= 1.0 and all_finite(ynew):
                for i in range(m):
                    yprev[i] = y[i]
                    y[i] = ynew[i]
                    K[0, i] = K[6, i]
                t_prev = t
                h_last = h_use
                t = t_target if clipped else t + h_use
                nacc += 1
                if ratio > 0.0:
                    fac = SAFETY * ratio ** -0.2
                    fac = min(FAC_MAX, max(FAC_MIN, fac))
                else:
                    fac = FAC_MAX
                h_new = min(dt_max, h_use * fac)
                # a clipped step does not shrink the controller's proposal
                if clipped and h_new < h:
                    h_new = min(h, dt_max)
                h = h_new
                if not all_finite(K[0]):
                    return NONFINITE, t, h, t_prev, h_last, nacc, nrej
            else:
                nrej += 1
                if ratio == ratio and ratio < np.inf:
                    fac = max(FAC_MIN, SAFETY * ratio ** -0.2)
                else:
                    fac = FAC_MIN
                h = h_use * min(1.0, fac)
                if h < dt_min:
                    return UNDERFLOW, t, h, t_prev, h_last, nacc, nrej
                continue
            if h < dt_min and t < t_target:
                return UNDERFLOW, t, h, t_prev, h_last, nacc, nrej
        else:
            rk4_step(kind, lt, f, mat, y, h_use, ynew, K, tmp)
            if not all_finite(ynew):
                return NONFINITE, t, h, t_prev, h_last, nacc, nrej
            for i in range(m):
                yprev[i] = y[i]
                y[i] = ynew[i]
            t_prev = t
            h_last = h_use
            t = t_target if clipped else t + h_use
            nacc += 1
        if kind != LINEAR:
            if watch_pos and lost_positivity(y, n, check_b):
                return POSITIVITY, t, h, t_prev, h_last, nacc, nrej
            if norm_limit > 0.0 and weighted_norm2(y, norm_w) >= norm_limit:
                return NORM, t, h, t_prev, h_last, nacc, nrej
    return REACHED, t, h, t_prev, h_last, nacc, nrej
