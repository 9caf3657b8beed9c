"""Rotation-based reduction of (nodes, weights) spectral data to Jacobi
recurrence coefficients, in double and compensated double-double arithmetic.

The double-double variant exists to keep coefficient roundoff below the
mathematical signal when weights span many orders of magnitude (deep orbits
at the top of the t range); it returns plain doubles.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_SPLITTER = 134217729.0  # 2**27 + 1


@njit(cache=True)
def rkpw_double(nodes, weights):
    """Recurrence coefficients from spectral data, one node at a time.

    Returns (alpha, beta_sq) where beta_sq[0] is the total weight and
    beta_sq[k] for k >= 1 the squared off-diagonal entries.
    """
    m = nodes.size
    p0 = nodes.copy()
    p1 = np.zeros(m)
    p1[0] = weights[0]
    for n in range(m - 1):
        pn = nodes[n + 1]
        gam = 1.0
        sig = 0.0
        t = 0.0
        lam = weights[n + 1]
        for k in range(n + 2):
            rho = p1[k] + lam
            tmp = gam * rho
            tsig = sig
            if rho <= 0.0:
                gam = 1.0
                sig = 0.0
            else:
                gam = p1[k] / rho
                sig = lam / rho
            tk = sig * (p0[k] - pn) - gam * t
            p0[k] = p0[k] - (tk - t)
            t = tk
            if sig <= 0.0:
                lam = tsig * p1[k]
            else:
                lam = (t * t) / sig
            p1[k] = tmp
    return p0, p1


# -- double-double primitives (hi, lo pairs) --------------------------------


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True, inline="always")
def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


@njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    ca = _SPLITTER * a
    ahi = ca - (ca - a)
    alo = a - ahi
    cb = _SPLITTER * b
    bhi = cb - (cb - b)
    blo = b - bhi
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


@njit(cache=True, inline="always")
def _dd_add(ah, al, bh, bl):
    sh, sl = _two_sum(ah, bh)
    sl += al + bl
    return _quick_two_sum(sh, sl)


@njit(cache=True, inline="always")
def _dd_sub(ah, al, bh, bl):
    return _dd_add(ah, al, -bh, -bl)


@njit(cache=True, inline="always")
def _dd_mul(ah, al, bh, bl):
    ph, pl = _two_prod(ah, bh)
    pl += ah * bl + al * bh
    return _quick_two_sum(ph, pl)


@njit(cache=True, inline="always")
def _dd_div(ah, al, bh, bl):
    q1 = ah / bh
    th, tl = _dd_mul(q1, 0.0, bh, bl)
    rh, rl = _dd_sub(ah, al, th, tl)
    q2 = rh / bh
    th, tl = _dd_mul(q2, 0.0, bh, bl)
    rh, rl = _dd_sub(rh, rl, th, tl)
    q3 = rh / bh
    qh, ql = _quick_two_sum(q1, q2)
    return _dd_add(qh, ql, q3, 0.0)


@njit(cache=True)
def rkpw_dd(nodes, weights):
    """Double-double variant of rkpw_double; inputs and outputs are doubles."""
    m = nodes.size
    p0h = nodes.copy()
    p0l = np.zeros(m)
    p1h = np.zeros(m)
    p1l = np.zeros(m)
    p1h[0] = weights[0]
    for n in range(m - 1):
        pnh = nodes[n + 1]
        gamh, gaml = 1.0, 0.0
        sigh, sigl = 0.0, 0.0
        th, tl = 0.0, 0.0
        lamh, laml = weights[n + 1], 0.0
        for k in range(n + 2):
            rhoh, rhol = _dd_add(p1h[k], p1l[k], lamh, laml)
            tmph, tmpl = _dd_mul(gamh, gaml, rhoh, rhol)
            tsigh, tsigl = sigh, sigl
            if rhoh <= 0.0:
                gamh, gaml = 1.0, 0.0
                sigh, sigl = 0.0, 0.0
            else:
                gamh, gaml = _dd_div(p1h[k], p1l[k], rhoh, rhol)
                sigh, sigl = _dd_div(lamh, laml, rhoh, rhol)
            dh, dl = _dd_add(p0h[k], p0l[k], -pnh, 0.0)
            t1h, t1l = _dd_mul(sigh, sigl, dh, dl)
            t2h, t2l = _dd_mul(gamh, gaml, th, tl)
            tkh, tkl = _dd_sub(t1h, t1l, t2h, t2l)
            sh, sl = _dd_sub(tkh, tkl, th, tl)
            p0h[k], p0l[k] = _dd_sub(p0h[k], p0l[k], sh, sl)
            th, tl = tkh, tkl
            if sigh <= 0.0:
                lamh, laml = _dd_mul(tsigh, tsigl, p1h[k], p1l[k])
            else:
                sqh, sql = _dd_mul(th, tl, th, tl)
                lamh, laml = _dd_div(sqh, sql, sigh, sigl)
            p1h[k], p1l[k] = tmph, tmpl
    return p0h, p1h
