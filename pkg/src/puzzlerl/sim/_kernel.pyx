# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernel.

Operation-for-operation transcription of puzzlerl.sim.kernel_py; the two must
stay in sync and produce bit-identical trajectories (the build disables
floating point contraction for this reason). See kernel_py for commentary.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, isfinite, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef int MAX_SUBSTEPS = 32
cdef double PEN_FRACTION = 0.25


cdef inline double _closest_t(double px, double py, double ax, double ay,
                              double bx, double by) nogil:
    cdef double abx = bx - ax
    cdef double aby = by - ay
    cdef double denom = abx * abx + aby * aby
    cdef double t = ((px - ax) * abx + (py - ay) * aby) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return t


def run_sim(
    cx_in, cy_in, cvx_in, cvy_in, cr_in, cim_in, cact_in, crem_in,
    sax_in, say_in, sbx_in, sby_in, sact_in, srem_in,
    double gx, double gy, double restitution,
    double xmin, double ymin, double xmax, double ymax,
    bint open_bottom, double abyss_y,
    double dt, int max_steps, double v_eps, int stability_window, int pgs_iters,
):
    cdef int nc = len(cx_in)
    cdef int ns = len(sax_in)
    cdef int i, j, s, c, step_i, sub, nsub, it_, ncon, idx
    cdef double e_rest = restitution

    cdef double *cx = <double *> malloc(sizeof(double) * (nc or 1))
    cdef double *cy = <double *> malloc(sizeof(double) * (nc or 1))
    cdef double *cvx = <double *> malloc(sizeof(double) * (nc or 1))
    cdef double *cvy = <double *> malloc(sizeof(double) * (nc or 1))
    cdef double *cr = <double *> malloc(sizeof(double) * (nc or 1))
    cdef double *cim = <double *> malloc(sizeof(double) * (nc or 1))
    cdef int *cact = <int *> malloc(sizeof(int) * (nc or 1))
    cdef int *crem = <int *> malloc(sizeof(int) * (nc or 1))
    cdef double *sax = <double *> malloc(sizeof(double) * (ns or 1))
    cdef double *say = <double *> malloc(sizeof(double) * (ns or 1))
    cdef double *sbx = <double *> malloc(sizeof(double) * (ns or 1))
    cdef double *sby = <double *> malloc(sizeof(double) * (ns or 1))
    cdef int *sact = <int *> malloc(sizeof(int) * (ns or 1))
    cdef int *srem = <int *> malloc(sizeof(int) * (ns or 1))

    cdef int max_con = 4 * nc + nc * nc + nc * ns + 1
    cdef int *con_a = <int *> malloc(sizeof(int) * max_con)
    cdef int *con_b = <int *> malloc(sizeof(int) * max_con)
    cdef double *con_nx = <double *> malloc(sizeof(double) * max_con)
    cdef double *con_ny = <double *> malloc(sizeof(double) * max_con)
    cdef double *con_mu = <double *> malloc(sizeof(double) * max_con)
    cdef double *con_tg = <double *> malloc(sizeof(double) * max_con)
    cdef double *con_j = <double *> malloc(sizeof(double) * max_con)

    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = np.empty((max_steps + 1, nc), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] by = np.empty((max_steps + 1, nc), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bvx = np.empty((max_steps + 1, nc), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bvy = np.empty((max_steps + 1, nc), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] bact = np.empty((max_steps + 1, nc), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] bsact = np.empty((max_steps + 1, ns), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] cc_latch = np.zeros((nc, nc), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] cs_latch = np.zeros((nc, ns), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] fallen = np.zeros(nc, dtype=np.uint8)

    cdef int clamp_count = 0
    cdef int escale_count = 0
    cdef int still = 0
    cdef bint stable = 0
    cdef int bad = -1

    cdef double dx, dy, rs, d2, d, nx, ny, mu, r, m, sp
    cdef double vmax, rmin, travel, lim, dts
    cdef double ke0, pe0, ke1, dterm, viol, disc, scale, vend
    cdef double un, tg, gn, cap, dj, jn, px, py, t

    for i in range(nc):
        cx[i] = cx_in[i]
        cy[i] = cy_in[i]
        cvx[i] = cvx_in[i]
        cvy[i] = cvy_in[i]
        cr[i] = cr_in[i]
        cim[i] = cim_in[i]
        cact[i] = cact_in[i]
        crem[i] = crem_in[i]
    for s in range(ns):
        sax[s] = sax_in[s]
        say[s] = say_in[s]
        sbx[s] = sbx_in[s]
        sby[s] = sby_in[s]
        sact[s] = sact_in[s]
        srem[s] = srem_in[s]

    for i in range(nc):
        bx[0, i] = cx[i]
        by[0, i] = cy[i]
        bvx[0, i] = cvx[i]
        bvy[0, i] = cvy[i]
        bact[0, i] = cact[i]
    for s in range(ns):
        bsact[0, s] = sact[s]

    # initial latch scan
    for i in range(nc):
        if not cact[i]:
            continue
        for j in range(i + 1, nc):
            if not cact[j] or cc_latch[i, j]:
                continue
            dx = cx[i] - cx[j]
            dy = cy[i] - cy[j]
            rs = cr[i] + cr[j]
            if dx * dx + dy * dy <= rs * rs:
                cc_latch[i, j] = 1
        for s in range(ns):
            if not sact[s] or cs_latch[i, s]:
                continue
            t = _closest_t(cx[i], cy[i], sax[s], say[s], sbx[s], sby[s])
            px = sax[s] + t * (sbx[s] - sax[s])
            py = say[s] + t * (sby[s] - say[s])
            dx = cx[i] - px
            dy = cy[i] - py
            if dx * dx + dy * dy <= cr[i] * cr[i]:
                cs_latch[i, s] = 1
    if open_bottom:
        for i in range(nc):
            if cact[i] and cy[i] < abyss_y:
                fallen[i] = 1

    step_i = 0
    while step_i < max_steps:
        for i in range(nc):
            if cact[i] and crem[i] >= 0 and step_i >= crem[i]:
                cact[i] = 0
        for s in range(ns):
            if sact[s] and srem[s] >= 0 and step_i >= srem[s]:
                sact[s] = 0
        if open_bottom:
            for i in range(nc):
                if cact[i] and cy[i] < abyss_y - 1.0:
                    cact[i] = 0

        vmax = 0.0
        rmin = INFINITY
        for i in range(nc):
            if cact[i] and cim[i] > 0.0:
                sp = sqrt(cvx[i] * cvx[i] + cvy[i] * cvy[i])
                if sp > vmax:
                    vmax = sp
                if cr[i] < rmin:
                    rmin = cr[i]
        if rmin == INFINITY or vmax * dt <= PEN_FRACTION * rmin:
            nsub = 1
        else:
            nsub = <int> ceil(vmax * dt / (PEN_FRACTION * rmin))
            if nsub > MAX_SUBSTEPS:
                nsub = MAX_SUBSTEPS
        dts = dt / nsub

        for sub in range(nsub):
            ke0 = 0.0
            pe0 = 0.0
            for i in range(nc):
                if cact[i] and cim[i] > 0.0:
                    m = 1.0 / cim[i]
                    ke0 += 0.5 * m * (cvx[i] * cvx[i] + cvy[i] * cvy[i])
                    pe0 -= m * (gx * cx[i] + gy * cy[i])

            for i in range(nc):
                if cact[i] and cim[i] > 0.0:
                    cvx[i] += gx * dts
                    cvy[i] += gy * dts

            ncon = 0
            for i in range(nc):
                if not cact[i] or cim[i] == 0.0:
                    continue
                r = cr[i]
                mu = 1.0 / cim[i]
                if cx[i] - r <= xmin:
                    un = cvx[i] * 1.0 + cvy[i] * 0.0
                    tg = _target(un, e_rest, gx, gy, 1.0, 0.0, dts, 1)
                    _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                          i, -1, 1.0, 0.0, mu, tg)
                if cx[i] + r >= xmax:
                    un = cvx[i] * -1.0 + cvy[i] * 0.0
                    tg = _target(un, e_rest, gx, gy, -1.0, 0.0, dts, 1)
                    _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                          i, -1, -1.0, 0.0, mu, tg)
                if (not open_bottom) and cy[i] - r <= ymin:
                    un = cvx[i] * 0.0 + cvy[i] * 1.0
                    tg = _target(un, e_rest, gx, gy, 0.0, 1.0, dts, 1)
                    _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                          i, -1, 0.0, 1.0, mu, tg)
                if cy[i] + r >= ymax:
                    un = cvx[i] * 0.0 + cvy[i] * -1.0
                    tg = _target(un, e_rest, gx, gy, 0.0, -1.0, dts, 1)
                    _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                          i, -1, 0.0, -1.0, mu, tg)
            for i in range(nc):
                if not cact[i]:
                    continue
                for j in range(i + 1, nc):
                    if not cact[j]:
                        continue
                    if cim[i] == 0.0 and cim[j] == 0.0:
                        continue
                    dx = cx[i] - cx[j]
                    dy = cy[i] - cy[j]
                    rs = cr[i] + cr[j]
                    d2 = dx * dx + dy * dy
                    if d2 <= rs * rs and d2 > 1e-24:
                        d = sqrt(d2)
                        nx = dx / d
                        ny = dy / d
                        if cim[j] == 0.0:
                            un = cvx[i] * nx + cvy[i] * ny
                            tg = _target(un, e_rest, gx, gy, nx, ny, dts, 1)
                            _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                                  i, -1, nx, ny, 1.0 / cim[i], tg)
                        elif cim[i] == 0.0:
                            un = cvx[j] * -nx + cvy[j] * -ny
                            tg = _target(un, e_rest, gx, gy, -nx, -ny, dts, 1)
                            _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                                  j, -1, -nx, -ny, 1.0 / cim[j], tg)
                        else:
                            mu = 1.0 / (cim[i] + cim[j])
                            un = (cvx[i] - cvx[j]) * nx + (cvy[i] - cvy[j]) * ny
                            tg = _target(un, e_rest, gx, gy, nx, ny, dts, 0)
                            _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                                  i, j, nx, ny, mu, tg)
            for i in range(nc):
                if not cact[i] or cim[i] == 0.0:
                    continue
                for s in range(ns):
                    if not sact[s]:
                        continue
                    t = _closest_t(cx[i], cy[i], sax[s], say[s], sbx[s], sby[s])
                    px = sax[s] + t * (sbx[s] - sax[s])
                    py = say[s] + t * (sby[s] - say[s])
                    dx = cx[i] - px
                    dy = cy[i] - py
                    d2 = dx * dx + dy * dy
                    if d2 <= cr[i] * cr[i] and d2 > 1e-24:
                        d = sqrt(d2)
                        nx = dx / d
                        ny = dy / d
                        un = cvx[i] * nx + cvy[i] * ny
                        tg = _target(un, e_rest, gx, gy, nx, ny, dts, 1)
                        _push(&ncon, con_a, con_b, con_nx, con_ny, con_mu, con_tg, con_j,
                              i, -1, nx, ny, 1.0 / cim[i], tg)

            for it_ in range(pgs_iters):
                for c in range(ncon):
                    i = con_a[c]
                    j = con_b[c]
                    nx = con_nx[c]
                    ny = con_ny[c]
                    if j >= 0:
                        un = (cvx[i] - cvx[j]) * nx + (cvy[i] - cvy[j]) * ny
                    else:
                        un = cvx[i] * nx + cvy[i] * ny
                    dj = con_mu[c] * (con_tg[c] - un)
                    jn = con_j[c] + dj
                    if jn < 0.0:
                        jn = 0.0
                    dj = jn - con_j[c]
                    if dj != 0.0:
                        con_j[c] = jn
                        cvx[i] += dj * nx * cim[i]
                        cvy[i] += dj * ny * cim[i]
                        if j >= 0:
                            cvx[j] -= dj * nx * cim[j]
                            cvy[j] -= dj * ny * cim[j]

            if ncon > 0:
                ke1 = 0.0
                dterm = 0.0
                for i in range(nc):
                    if cact[i] and cim[i] > 0.0:
                        m = 1.0 / cim[i]
                        ke1 += 0.5 * m * (cvx[i] * cvx[i] + cvy[i] * cvy[i])
                        dterm -= m * (gx * cvx[i] + gy * cvy[i]) * dts
                viol = (ke1 + dterm) - ke0
                if viol > 1e-12 * (ke0 if ke0 > 1.0 else 1.0) and ke1 > 0.0:
                    disc = dterm * dterm + 4.0 * ke1 * ke0
                    scale = (-dterm + sqrt(disc)) / (2.0 * ke1)
                    if scale < 0.0:
                        scale = 0.0
                    if scale < 1.0:
                        for i in range(nc):
                            if cact[i] and cim[i] > 0.0:
                                cvx[i] *= scale
                                cvy[i] *= scale
                        escale_count += 1

            for i in range(nc):
                if cact[i] and cim[i] > 0.0:
                    cx[i] += cvx[i] * dts
                    cy[i] += cvy[i] * dts

            for i in range(nc):
                if not cact[i] or cim[i] == 0.0:
                    continue
                if cx[i] < xmin:
                    cx[i] = xmin
                    if cvx[i] < 0.0:
                        cvx[i] = 0.0
                    clamp_count += 1
                elif cx[i] > xmax:
                    cx[i] = xmax
                    if cvx[i] > 0.0:
                        cvx[i] = 0.0
                    clamp_count += 1
                if (not open_bottom) and cy[i] < ymin:
                    cy[i] = ymin
                    if cvy[i] < 0.0:
                        cvy[i] = 0.0
                    clamp_count += 1
                elif cy[i] > ymax:
                    cy[i] = ymax
                    if cvy[i] > 0.0:
                        cvy[i] = 0.0
                    clamp_count += 1

            for i in range(nc):
                if not cact[i]:
                    continue
                for j in range(i + 1, nc):
                    if not cact[j] or cc_latch[i, j]:
                        continue
                    dx = cx[i] - cx[j]
                    dy = cy[i] - cy[j]
                    rs = cr[i] + cr[j]
                    if dx * dx + dy * dy <= rs * rs:
                        cc_latch[i, j] = 1
                for s in range(ns):
                    if not sact[s] or cs_latch[i, s]:
                        continue
                    t = _closest_t(cx[i], cy[i], sax[s], say[s], sbx[s], sby[s])
                    px = sax[s] + t * (sbx[s] - sax[s])
                    py = say[s] + t * (sby[s] - say[s])
                    dx = cx[i] - px
                    dy = cy[i] - py
                    if dx * dx + dy * dy <= cr[i] * cr[i]:
                        cs_latch[i, s] = 1
            if open_bottom:
                for i in range(nc):
                    if cact[i] and fallen[i] == 0 and cy[i] < abyss_y:
                        fallen[i] = 1

        for i in range(nc):
            if cact[i] and not (
                isfinite(cx[i]) and isfinite(cy[i])
                and isfinite(cvx[i]) and isfinite(cvy[i])
            ):
                bad = i
                break
        if bad >= 0:
            break

        step_i += 1
        for i in range(nc):
            bx[step_i, i] = cx[i]
            by[step_i, i] = cy[i]
            bvx[step_i, i] = cvx[i]
            bvy[step_i, i] = cvy[i]
            bact[step_i, i] = cact[i]
        for s in range(ns):
            bsact[step_i, s] = sact[s]

        vend = 0.0
        for i in range(nc):
            if cact[i] and cim[i] > 0.0:
                sp = sqrt(cvx[i] * cvx[i] + cvy[i] * cvy[i])
                if sp > vend:
                    vend = sp
        if vend < v_eps:
            still += 1
        else:
            still = 0
        if still >= stability_window:
            stable = 1
            break

    free(cx); free(cy); free(cvx); free(cvy); free(cr); free(cim)
    free(cact); free(crem)
    free(sax); free(say); free(sbx); free(sby); free(sact); free(srem)
    free(con_a); free(con_b); free(con_nx); free(con_ny)
    free(con_mu); free(con_tg); free(con_j)

    if bad >= 0:
        raise FloatingPointError(f"non-finite state for body index {bad}")

    n_rec = step_i + 1
    return {
        "steps": step_i,
        "stable": bool(stable),
        "bx": bx[:n_rec], "by": by[:n_rec], "bvx": bvx[:n_rec], "bvy": bvy[:n_rec],
        "bact": bact[:n_rec], "bsact": bsact[:n_rec],
        "cc_latch": cc_latch, "cs_latch": cs_latch,
        "fallen": fallen,
        "clamp_count": clamp_count,
        "escale_count": escale_count,
    }


cdef inline double _target(double un, double e_rest, double gx, double gy,
                           double nx, double ny, double dts, bint static_partner) nogil:
    cdef double tg, gn, cap
    if un < 0.0:
        tg = e_rest * (-un)
        if static_partner:
            gn = gx * nx + gy * ny
            if gn < 0.0:
                cap = -un + 2.0 * gn * dts
                if tg > cap:
                    tg = cap
                if tg < 0.0:
                    tg = 0.0
    else:
        tg = 0.0
    return tg


cdef inline void _push(int *ncon, int *con_a, int *con_b, double *con_nx,
                       double *con_ny, double *con_mu, double *con_tg,
                       double *con_j, int ia, int ib, double nx, double ny,
                       double mu, double tg) nogil:
    cdef int k = ncon[0]
    con_a[k] = ia
    con_b[k] = ib
    con_nx[k] = nx
    con_ny[k] = ny
    con_mu[k] = mu
    con_tg[k] = tg
    con_j[k] = 0.0
    ncon[0] = k + 1
