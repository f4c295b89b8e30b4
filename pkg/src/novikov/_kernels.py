"""Numba kernels for level-line following in a plane section.

The traced curve is h(u, v) = eps(p0 + u e1 + v e2) = level. Points are
stored as in-plane coordinates only, so the plane constraint holds to
rounding error by construction; the energy constraint is restored by a
Newton corrector after every predictor step.
"""
import math

import numpy as np
from numba import njit

# termination codes
LENGTH_LIMIT = 0
CLOSED_RETURN = 1
PERIOD_CLOSE = 2
SINGULAR_STOP = 3
STEP_LIMIT = 4
NEWTON_STALL = 5


@njit(cache=True)
def eval_point(K, amp, phase, quad, p):
    """Energy and gradient at a 3-point."""
    val = 0.0
    g0 = 0.0
    g1 = 0.0
    g2 = 0.0
    for j in range(K.shape[0]):
        arg = K[j, 0] * p[0] + K[j, 1] * p[1] + K[j, 2] * p[2] + phase[j]
        c = math.cos(arg)
        s = math.sin(arg)
        val += amp[j] * c
        g0 -= amp[j] * s * K[j, 0]
        g1 -= amp[j] * s * K[j, 1]
        g2 -= amp[j] * s * K[j, 2]
    if quad != 0.0:
        val += 0.5 * quad * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        g0 += quad * p[0]
        g1 += quad * p[1]
        g2 += quad * p[2]
    return val, g0, g1, g2


@njit(cache=True)
def eval_plane(K, amp, phase, quad, p0, e1, e2, u, v, buf):
    buf[0] = p0[0] + u * e1[0] + v * e2[0]
    buf[1] = p0[1] + u * e1[1] + v * e2[1]
    buf[2] = p0[2] + u * e1[2] + v * e2[2]
    val, g0, g1, g2 = eval_point(K, amp, phase, quad, buf)
    gu = g0 * e1[0] + g1 * e1[1] + g2 * e1[2]
    gv = g0 * e2[0] + g1 * e2[1] + g2 * e2[2]
    return val, gu, gv


@njit(cache=True)
def newton_project(K, amp, phase, quad, p0, e1, e2, u, v, level, tol, maxit):
    """Project (u, v) onto h = level along the in-plane gradient.

    The tolerance is floored at the rounding noise of the cosine arguments,
    which grows with |p| on long traces.
    """
    buf = np.empty(3)
    asum = 0.0
    kmax = 0.0
    for j in range(K.shape[0]):
        asum += abs(amp[j])
        kmax = max(kmax, math.sqrt(K[j, 0] ** 2 + K[j, 1] ** 2 + K[j, 2] ** 2))
    pn = math.sqrt(p0[0] ** 2 + p0[1] ** 2 + p0[2] ** 2)
    for _ in range(maxit):
        val, gu, gv = eval_plane(K, amp, phase, quad, p0, e1, e2, u, v, buf)
        r = val - level
        pm = pn + abs(u) + abs(v)
        tol = max(tol, 8.0e-16 * (asum * (1.0 + kmax * pm) + abs(quad) * pm * pm))
        if abs(r) < tol:
            return u, v, True
        g2 = gu * gu + gv * gv
        if g2 == 0.0:
            return u, v, False
        u -= r * gu / g2
        v -= r * gv / g2
    val, gu, gv = eval_plane(K, amp, phase, quad, p0, e1, e2, u, v, buf)
    return u, v, abs(val - level) < tol


@njit(cache=True)
def _seg_hit(au, av, bu, bv, su, sv, tol):
    du = bu - au
    dv = bv - av
    L2 = du * du + dv * dv
    if L2 == 0.0:
        return False, 0.0
    t = ((su - au) * du + (sv - av) * dv) / L2
    if t < 0.0 or t > 1.0:
        return False, t
    cu = au + t * du - su
    cv = av + t * dv - sv
    return cu * cu + cv * cv <= tol * tol, t


@njit(cache=True)
def trace_kernel(K, amp, phase, quad, p0, e1, e2, b, level, u0, v0, sense,
                 max_len, max_steps, h0, h_max, h_min, max_turn, newton_tol,
                 delta_sing, detect, close_tol, lrows, arows, m_max, plane_tol):
    """Follow the level line from (u0, v0).

    The direction of motion is the in-plane part of grad(eps) x b, i.e.
    (gv, -gu) in frame coordinates, times `sense` (+1 or -1).

    Returns (u, v, l, t, code, qm) where qm holds the integer coefficients
    of the closing reciprocal vector for PERIOD_CLOSE.
    """
    n_alloc = max_steps + 2
    U = np.empty(n_alloc)
    V = np.empty(n_alloc)
    Ls = np.empty(n_alloc)
    Ts = np.empty(n_alloc)
    qm = np.zeros(3, dtype=np.int64)
    buf = np.empty(3)
    pt = np.empty(3)

    u, v, ok = newton_project(K, amp, phase, quad, p0, e1, e2, u0, v0, level, newton_tol, 50)
    U[0] = u
    V[0] = v
    Ls[0] = 0.0
    Ts[0] = 0.0
    n = 1
    if not ok:
        return U[:n], V[:n], Ls[:n], Ts[:n], NEWTON_STALL, qm

    val, gu, gv = eval_plane(K, amp, phase, quad, p0, e1, e2, u, v, buf)
    gn = math.sqrt(gu * gu + gv * gv)
    if gn < delta_sing:
        return U[:n], V[:n], Ls[:n], Ts[:n], SINGULAR_STOP, qm
    tu = sense * gv / gn
    tv = -sense * gu / gn
    su = u
    sv = v
    stu = tu
    stv = tv
    # start point in 3D, for lattice-period detection
    ps0 = p0[0] + u * e1[0] + v * e2[0]
    ps1 = p0[1] + u * e1[1] + v * e2[1]
    ps2 = p0[2] + u * e1[2] + v * e2[2]

    h = h0
    length = 0.0
    time = 0.0
    cos_max = math.cos(max_turn)
    code = LENGTH_LIMIT
    steps = 0
    while True:
        if length >= max_len:
            code = LENGTH_LIMIT
            break
        if steps >= max_steps:
            code = STEP_LIMIT
            break
        un = u + h * tu
        vn = v + h * tv
        un, vn, ok = newton_project(K, amp, phase, quad, p0, e1, e2, un, vn, level, newton_tol, 30)
        accepted = False
        if ok:
            val2, gu2, gv2 = eval_plane(K, amp, phase, quad, p0, e1, e2, un, vn, buf)
            gn2 = math.sqrt(gu2 * gu2 + gv2 * gv2)
            if gn2 < delta_sing:
                code = SINGULAR_STOP
                break
            tu2 = sense * gv2 / gn2
            tv2 = -sense * gu2 / gn2
            du = un - u
            dv = vn - v
            ds = math.sqrt(du * du + dv * dv)
            # step must advance along the tangent and not turn too sharply
            cturn = tu * tu2 + tv * tv2
            adv = (du * tu + dv * tv) / (ds + 1e-300)
            # and |grad h| may not change by more than 25% (time integrand 1/|grad h|)
            if cturn >= cos_max and adv >= cos_max and gn2 < 1.25 * gn and gn < 1.25 * gn2:
                accepted = True
        if not accepted:
            h *= 0.5
            if h < h_min:
                code = SINGULAR_STOP if gn < 1e3 * delta_sing else NEWTON_STALL
                break
            continue

        steps += 1
        # chord -> arc: a circular arc turning by th is longer by th^2 / 24
        th = math.acos(min(1.0, cturn))
        ds = ds * (1.0 + th * th / 24.0)
        length += ds
        time += 0.5 * ds * (1.0 / gn + 1.0 / gn2)
        closed = False
        if detect and steps > 3:
            tol = close_tol + 0.02 * ds
            hit, tpar = _seg_hit(u, v, un, vn, su, sv, tol)
            if hit and (tu2 * stu + tv2 * stv) > 0.5:
                ds_part = tpar * ds
                U[n] = su
                V[n] = sv
                Ls[n] = length - ds + ds_part
                Ts[n] = time - 0.5 * ds * (1.0 / gn + 1.0 / gn2) + 0.5 * ds_part * (1.0 / gn + 1.0 / gn2)
                n += 1
                code = CLOSED_RETURN
                closed = True
            elif m_max > 0:
                pt[0] = p0[0] + un * e1[0] + vn * e2[0] - ps0
                pt[1] = p0[1] + un * e1[1] + vn * e2[1] - ps1
                pt[2] = p0[2] + un * e1[2] + vn * e2[2] - ps2
                mz = True
                for i in range(3):
                    f = (pt[0] * lrows[i, 0] + pt[1] * lrows[i, 1] + pt[2] * lrows[i, 2]) / (2.0 * math.pi)
                    qm[i] = int(math.floor(f + 0.5))
                    if qm[i] != 0:
                        mz = False
                if not mz and abs(qm[0]) <= m_max and abs(qm[1]) <= m_max and abs(qm[2]) <= m_max:
                    q0 = qm[0] * arows[0, 0] + qm[1] * arows[1, 0] + qm[2] * arows[2, 0]
                    q1 = qm[0] * arows[0, 1] + qm[1] * arows[1, 1] + qm[2] * arows[2, 1]
                    q2 = qm[0] * arows[0, 2] + qm[1] * arows[1, 2] + qm[2] * arows[2, 2]
                    qb = q0 * b[0] + q1 * b[1] + q2 * b[2]
                    qn = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
                    if abs(qb) < plane_tol * qn:
                        qu = su + q0 * e1[0] + q1 * e1[1] + q2 * e1[2]
                        qv = sv + q0 * e2[0] + q1 * e2[1] + q2 * e2[2]
                        hit, tpar = _seg_hit(u, v, un, vn, qu, qv, tol)
                        if hit and (tu2 * stu + tv2 * stv) > 0.5:
                            ds_part = tpar * ds
                            U[n] = qu
                            V[n] = qv
                            Ls[n] = length - ds + ds_part
                            Ts[n] = time - 0.5 * ds * (1.0 / gn + 1.0 / gn2) + 0.5 * ds_part * (1.0 / gn + 1.0 / gn2)
                            n += 1
                            code = PERIOD_CLOSE
                            closed = True
                if not closed:
                    qm[0] = 0
                    qm[1] = 0
                    qm[2] = 0
        if closed:
            break
        U[n] = un
        V[n] = vn
        Ls[n] = length
        Ts[n] = time
        n += 1
        # grow the step on gently curving stretches
        if cturn > math.cos(max_turn / 3.0):
            h = min(h * 1.5, h_max)
        u = un
        v = vn
        gn = gn2
        tu = tu2
        tv = tv2
    return U[:n].copy(), V[:n].copy(), Ls[:n].copy(), Ts[:n].copy(), code, qm


@njit(cache=True)
def grid_values(K, amp, phase, quad, p0, e1, e2, us, vs):
    out = np.empty((us.shape[0], vs.shape[0]))
    buf = np.empty(3)
    for i in range(us.shape[0]):
        for j in range(vs.shape[0]):
            val, gu, gv = eval_plane(K, amp, phase, quad, p0, e1, e2, us[i], vs[j], buf)
            out[i, j] = val
    return out


@njit(cache=True)
def exp_filter_periodic(dt, inc_perp, vb, taus, periodic):
    """Relaxation-time history integral I(t_j) = int_0^inf v(t_j - s) e^{-s/tau} ds.

    `inc_perp[j]` is the exact in-plane velocity integral over segment j
    (b x dp); `vb` are the along-field velocities at the nodes (linear
    in time within a segment). For periodic orbits the recursion is closed
    with the factor 1/(1 - e^{-T/tau}); otherwise it starts from rest.
    Returns array (n_tau, n_nodes, 3).
    """
    nseg = dt.shape[0]
    ntau = taus.shape[0]
    out = np.zeros((ntau, nseg + 1, 3))
    for k in range(ntau):
        tau = taus[k]
        I0 = 0.0
        I1 = 0.0
        I2 = 0.0
        passes = 2 if periodic else 1
        for rep in range(passes):
            if rep == 1:
                # close the periodic recursion exactly
                T = 0.0
                for j in range(nseg):
                    T += dt[j]
                fac = 1.0 / (1.0 - math.exp(-T / tau))
                I0 *= fac
                I1 *= fac
                I2 *= fac
            else:
                I0 = 0.0
                I1 = 0.0
                I2 = 0.0
            out[k, 0, 0] = I0
            out[k, 0, 1] = I1
            out[k, 0, 2] = I2
            for j in range(nseg):
                x = dt[j] / tau
                dec = math.exp(-x)
                if x > 1e-8:
                    avg = (1.0 - dec) / x
                    # weights for linear v_b on [0, dt] against e^{-(dt-s)/tau}
                    w1 = tau * (1.0 - dec) - tau * (avg - dec)
                    w0 = tau * (avg - dec)
                else:
                    avg = 1.0 - 0.5 * x
                    w0 = 0.5 * dt[j]
                    w1 = 0.5 * dt[j]
                I0 = dec * I0 + inc_perp[j, 0] * avg
                I1 = dec * I1 + inc_perp[j, 1] * avg
                I2 = dec * I2 + inc_perp[j, 2] * avg
                I0 += w0 * vb[j, 0] + w1 * vb[j + 1, 0]
                I1 += w0 * vb[j, 1] + w1 * vb[j + 1, 1]
                I2 += w0 * vb[j, 2] + w1 * vb[j + 1, 2]
                out[k, j + 1, 0] = I0
                out[k, j + 1, 1] = I1
                out[k, j + 1, 2] = I2
            if not periodic:
                break
    return out
