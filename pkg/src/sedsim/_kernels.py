"""Compiled inner loops: field bundles, interpolation, formulations, RK4 segments.

Arrays are laid out for the segment loop. A field bundle is a ``(5, 3)``
array with rows ``E_low, E_high, A_low, A_high, C_high``. Formulation codes
select how the 6-component state maps to the physical position and velocity.
"""
import math

import numpy as np
from numba import njit

NEWTON, PQ, SFORM = 0, 1, 2
E_LOW, E_HIGH, A_LOW, A_HIGH, C_HIGH = 0, 1, 2, 3, 4

# event bits returned by advance()
EV_DONE = 1
EV_ORBIT = 2
EV_FLOOR = 4
EV_SINGULAR = 8
EV_NONFINITE = 16
EV_IONISED = 32
EV_TMAX = 64
EV_SCHEDULED = 128
EV_NEED_NODES = 256
EV_BUFFER = 512

# sample flags
FL_REGULAR = 1
FL_CROSS = 2
FL_FINAL = 4
FL_INITIAL = 8
FL_PUSH = 16
FL_SWITCH = 32

# carried float state
CF_T, CF_ABOVE, CF_ANGLE, CF_NEXT_SAMPLE, CF_NEED_T = 0, 1, 2, 3, 4
# carried int state
CI_STEPS, CI_SINCE_DERIVE = 0, 1
# parameter vector
FLOOR_SLACK = 1e-12

P_BETA, P_DS, P_GCAP, P_TMAX, P_TEVENT, P_FLOOR, P_THR, P_DWELL, P_GUARD, P_INTERVAL, P_MAXSTEPS = range(11)
N_PARAMS = 11
# window/int config
W_NLOW, W_NHIGH, W_FIELD_ON, W_SOURCE, W_REGULARIZE = range(5)
SOURCE_EXACT, SOURCE_NODES = 0, 1

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def exact_bundle(t, omega, amp_E, amp_A, amp_C, ca, cb, n_low, n_high, out):
    out[:, :] = 0.0
    for i in range(n_high):
        ph = omega[i] * t
        c = math.cos(ph)
        s = math.sin(ph)
        low = i < n_low
        for a in range(3):
            x = ca[a, i]
            y = cb[a, i]
            ecos = -x * c - y * s
            asin = x * s - y * c
            if low:
                out[E_LOW, a] += amp_E[i] * ecos
                out[A_LOW, a] += amp_A[i] * asin
            else:
                out[E_HIGH, a] += amp_E[i] * ecos
                out[A_HIGH, a] += amp_A[i] * asin
                out[C_HIGH, a] += amp_C[i] * ecos


@njit(cache=True)
def fill_nodes(nodes, first_slot, j_first, count, t_orig, h, omega, amp_E, amp_A, amp_C,
               ca, cb, n_low, n_high):
    for k in range(count):
        t = t_orig + (j_first + k) * h
        exact_bundle(t, omega, amp_E, amp_A, amp_C, ca, cb, n_low, n_high, nodes[first_slot + k])


@njit(cache=True)
def lagrange5(t, nodes, j0, n_avail, t_orig, h, out):
    """Five-point Lagrange value centred on the nearest node; False if out of table."""
    x = (t - t_orig) / h
    jc = int(math.floor(x + 0.5))
    base = jc - 2 - j0
    if base < 0 or base + 5 > n_avail:
        return False
    u = x - jc
    up2 = u + 2.0
    up1 = u + 1.0
    um1 = u - 1.0
    um2 = u - 2.0
    w0 = up1 * u * um1 * um2 / 24.0
    w1 = -up2 * u * um1 * um2 / 6.0
    w2 = up2 * up1 * um1 * um2 / 4.0
    w3 = -up2 * up1 * u * um2 / 6.0
    w4 = up2 * up1 * u * um1 / 24.0
    for r in range(5):
        for a in range(3):
            out[r, a] = (w0 * nodes[base, r, a] + w1 * nodes[base + 1, r, a]
                         + w2 * nodes[base + 2, r, a] + w3 * nodes[base + 3, r, a]
                         + w4 * nodes[base + 4, r, a])
    return True


@njit(cache=True)
def field_at(t, win, fld, nodes, meta, out):
    if win[W_FIELD_ON] == 0:
        out[:, :] = 0.0
        return True
    if win[W_SOURCE] == SOURCE_EXACT:
        exact_bundle(t, fld[0], fld[1], fld[2], fld[3], fld[4], fld[5],
                     win[W_NLOW], win[W_NHIGH], out)
        return True
    return lagrange5(t, nodes, int(meta[0]), int(meta[1]), meta[2], meta[3], out)


@njit(cache=True)
def coulomb(r, out):
    rn = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    r3 = rn * rn * rn
    for a in range(3):
        out[a] = -r[a] / r3
    return rn


@njit(cache=True)
def physical(code, y, F, dA, dC, beta, r, v):
    """Physical position and velocity from the formulation state."""
    f = np.empty(3)
    if code == NEWTON:
        for a in range(3):
            r[a] = y[a]
            v[a] = y[3 + a]
        return
    if code == PQ:
        for a in range(3):
            r[a] = y[3 + a] + beta * (F[C_HIGH, a] + dC[a])
        coulomb(r, f)
        for a in range(3):
            v[a] = y[a] + beta * beta * f[a] + beta * (F[A_LOW, a] + dA[a] + F[A_HIGH, a])
        return
    b2 = beta * beta
    for a in range(3):
        r[a] = (y[a] + b2 * y[3 + a] + beta * (F[C_HIGH, a] + dC[a])
                - b2 * beta * (F[A_LOW, a] + dA[a]))
    coulomb(r, f)
    for a in range(3):
        v[a] = y[3 + a] + b2 * f[a] + beta * F[A_HIGH, a]


@njit(cache=True)
def from_physical(code, r, v, F, dA, dC, beta, y):
    """Exact inverse of physical() at the same field values."""
    f = np.empty(3)
    coulomb(r, f)
    b2 = beta * beta
    if code == NEWTON:
        for a in range(3):
            y[a] = r[a]
            y[3 + a] = v[a]
    elif code == PQ:
        for a in range(3):
            y[3 + a] = r[a] - beta * (F[C_HIGH, a] + dC[a])
            y[a] = v[a] - b2 * f[a] - beta * (F[A_LOW, a] + dA[a] + F[A_HIGH, a])
    else:
        for a in range(3):
            y[3 + a] = v[a] - b2 * f[a] - beta * F[A_HIGH, a]
            y[a] = (r[a] - b2 * y[3 + a] - beta * (F[C_HIGH, a] + dC[a])
                    + b2 * beta * (F[A_LOW, a] + dA[a]))


@njit(cache=True)
def deriv(code, y, r, F, dA, beta, dy):
    """Time derivative of the state given the reconstructed position r."""
    f = np.empty(3)
    rn = coulomb(r, f)
    b2 = beta * beta
    if code == NEWTON:
        v = y[3:]
        rv = (r[0] * v[0] + r[1] * v[1] + r[2] * v[2]) / (rn * rn)
        r3 = rn * rn * rn
        for a in range(3):
            grad = -(v[a] - 3.0 * rv * r[a]) / r3
            dy[a] = v[a]
            dy[3 + a] = f[a] + b2 * grad - beta * (F[E_LOW, a] + F[E_HIGH, a])
    elif code == PQ:
        for a in range(3):
            dy[a] = f[a]
            dy[3 + a] = y[a] + b2 * f[a] + beta * (F[A_LOW, a] + dA[a])
    else:
        for a in range(3):
            dy[a] = y[3 + a]
            dy[3 + a] = f[a] - beta * F[E_LOW, a]


@njit(cache=True)
def elements(r, v):
    """Energy, |L| and eccentricity from one physical state."""
    rn = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    energy = 0.5 * v2 - 1.0 / rn
    lx = r[1] * v[2] - r[2] * v[1]
    ly = r[2] * v[0] - r[0] * v[2]
    lz = r[0] * v[1] - r[1] * v[0]
    rv = r[0] * v[0] + r[1] * v[1] + r[2] * v[2]
    e0 = v2 * r[0] - rv * v[0] - r[0] / rn
    e1 = v2 * r[1] - rv * v[1] - r[1] / rn
    e2 = v2 * r[2] - rv * v[2] - r[2] / rn
    return energy, math.sqrt(lx * lx + ly * ly + lz * lz), math.sqrt(e0 * e0 + e1 * e1 + e2 * e2), rn


@njit(cache=True)
def _stage(code, y, t, win, fld, nodes, meta, dA, dC, beta, gcap, F, r, v, dy):
    if not field_at(t, win, fld, nodes, meta, F):
        return False, 0.0
    physical(code, y, F, dA, dC, beta, r, v)
    g = 1.0
    if win[W_REGULARIZE] != 0:
        g = min(math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]), gcap)
    deriv(code, y, r, F, dA, beta, dy)
    for i in range(6):
        dy[i] *= g
    return True, g


@njit(cache=True)
def advance(code, y, cf, ci, prev_r, dA, dC, fld, win, nodes, meta, par, samples):
    """Run RK4 steps until an event; returns (event bits, samples written).

    The step size is ``ds`` in the integration variable; with regularization
    ``dt/ds = min(|r|, gcap)``, otherwise ``dt = ds``. Samples are rows
    ``(t, E, L, eps, r, flags)``.
    """
    beta = par[P_BETA]
    ds = par[P_DS]
    gcap = par[P_GCAP]
    max_steps = int(par[P_MAXSTEPS])
    F = np.empty((5, 3))
    r = np.empty(3)
    v = np.empty(3)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    yt = np.empty(6)
    yn = np.empty(6)
    ns = 0
    events = 0
    t = cf[CF_T]
    g2 = g3 = 0.0
    taken = 0
    while True:
        if taken >= max_steps:
            events |= EV_DONE
            break
        taken += 1
        if ns + 1 > samples.shape[0]:
            events |= EV_BUFFER
            break
        ok, g1 = _stage(code, y, t, win, fld, nodes, meta, dA, dC, beta, gcap, F, r, v, k1)
        t2 = t + 0.5 * ds * g1
        if ok:
            for i in range(6):
                yt[i] = y[i] + 0.5 * ds * k1[i]
            ok, g2 = _stage(code, yt, t2, win, fld, nodes, meta, dA, dC, beta, gcap, F, r, v, k2)
        t3 = t + 0.5 * ds * g2 if ok else t2
        if ok:
            for i in range(6):
                yt[i] = y[i] + 0.5 * ds * k2[i]
            ok, g3 = _stage(code, yt, t3, win, fld, nodes, meta, dA, dC, beta, gcap, F, r, v, k3)
        t4 = t + ds * g3 if ok else t3
        if ok:
            for i in range(6):
                yt[i] = y[i] + ds * k3[i]
            ok, g4 = _stage(code, yt, t4, win, fld, nodes, meta, dA, dC, beta, gcap, F, r, v, k4)
        if not ok:
            events |= EV_NEED_NODES
            cf[CF_NEED_T] = max(t2, t3, t4) if win[W_REGULARIZE] != 0 else t + ds
            break
        for i in range(6):
            yn[i] = y[i] + ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if win[W_REGULARIZE] != 0:
            tn = t + ds / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        else:
            tn = t + ds
        if not field_at(tn, win, fld, nodes, meta, F):
            events |= EV_NEED_NODES
            cf[CF_NEED_T] = tn
            break
        physical(code, yn, F, dA, dC, beta, r, v)
        finite = math.isfinite(tn)
        for a in range(3):
            finite = finite and math.isfinite(r[a]) and math.isfinite(v[a])
        if not finite:
            events |= EV_NONFINITE
            break
        for i in range(6):
            y[i] = yn[i]
        t = tn
        cf[CF_T] = t
        ci[CI_STEPS] += 1
        ci[CI_SINCE_DERIVE] += 1
        energy, L, eps, rn = elements(r, v)
        cx = prev_r[1] * r[2] - prev_r[2] * r[1]
        cy = prev_r[2] * r[0] - prev_r[0] * r[2]
        cz = prev_r[0] * r[1] - prev_r[1] * r[0]
        dot = prev_r[0] * r[0] + prev_r[1] * r[1] + prev_r[2] * r[2]
        cf[CF_ANGLE] += math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), dot)
        for a in range(3):
            prev_r[a] = r[a]
        flag = 0
        if t >= cf[CF_NEXT_SAMPLE]:
            flag |= FL_REGULAR
            while cf[CF_NEXT_SAMPLE] <= t:
                cf[CF_NEXT_SAMPLE] += par[P_INTERVAL]
        above = energy > par[P_THR]
        if above and math.isnan(cf[CF_ABOVE]):
            cf[CF_ABOVE] = t
            flag |= FL_CROSS
        elif (not above) and not math.isnan(cf[CF_ABOVE]):
            cf[CF_ABOVE] = np.nan
            flag |= FL_CROSS
        if above and t - cf[CF_ABOVE] >= par[P_DWELL]:
            events |= EV_IONISED
            flag |= FL_FINAL
        if rn < par[P_GUARD]:
            events |= EV_SINGULAR
            flag |= FL_FINAL
        # slack so round-off right after a push does not re-trigger it
        if energy < par[P_FLOOR] - FLOOR_SLACK * abs(par[P_FLOOR]):
            events |= EV_FLOOR
        if cf[CF_ANGLE] >= TWO_PI * (1.0 - 1e-12):
            cf[CF_ANGLE] -= TWO_PI
            events |= EV_ORBIT
        if t >= par[P_TMAX]:
            events |= EV_TMAX
            flag |= FL_FINAL
        if t >= par[P_TEVENT]:
            events |= EV_SCHEDULED
        if flag != 0:
            samples[ns, 0] = t
            samples[ns, 1] = energy
            samples[ns, 2] = L
            samples[ns, 3] = eps
            samples[ns, 4] = rn
            samples[ns, 5] = flag
            ns += 1
        if events != 0:
            break
    return events, ns
