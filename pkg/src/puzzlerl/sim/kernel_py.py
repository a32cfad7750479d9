"""Pure-Python simulation kernel.

Reference implementation of the stepping loop. The compiled kernel in
_kernel.pyx mirrors this code operation for operation so both produce
bit-identical trajectories; keep the two in sync when editing.

Integration is semi-implicit Euler. Contacts are resolved with accumulated
normal impulses (fixed iteration count, fixed ordering, no friction). The
outgoing-speed target of a contact against static geometry is capped so the
position update cannot gain potential energy in excess of the kinetic energy
spent, which together with a per-substep energy stabilizer makes total
mechanical energy non-increasing step over step. Fast bodies are integrated
with internal substeps so penetration stays well under one radius.
"""

import math

MAX_SUBSTEPS = 32
PEN_FRACTION = 0.25  # max travel per substep as a fraction of the smallest radius


def run_sim(
    cx, cy, cvx, cvy, cr, cim, cact, crem,
    sax, say, sbx, sby, sact, srem,
    gx, gy, restitution,
    xmin, ymin, xmax, ymax, open_bottom, abyss_y,
    dt, max_steps, v_eps, stability_window, pgs_iters,
):
    nc = len(cx)
    ns = len(sax)
    cx = [float(v) for v in cx]
    cy = [float(v) for v in cy]
    cvx = [float(v) for v in cvx]
    cvy = [float(v) for v in cvy]
    cr = [float(v) for v in cr]
    cim = [float(v) for v in cim]
    cact = [int(v) for v in cact]
    crem = [int(v) for v in crem]
    sax = [float(v) for v in sax]
    say = [float(v) for v in say]
    sbx = [float(v) for v in sbx]
    sby = [float(v) for v in sby]
    sact = [int(v) for v in sact]
    srem = [int(v) for v in srem]
    gx = float(gx)
    gy = float(gy)
    e_rest = float(restitution)

    bx = [list(cx)]
    by = [list(cy)]
    bvx = [list(cvx)]
    bvy = [list(cvy)]
    bact = [list(cact)]
    bsact = [list(sact)]
    cc_latch = [[0] * nc for _ in range(nc)]
    cs_latch = [[0] * ns for _ in range(nc)]
    fallen = [0] * nc
    clamp_count = 0
    escale_count = 0

    def latch_scan():
        for i in range(nc):
            if not cact[i]:
                continue
            for j in range(i + 1, nc):
                if not cact[j] or cc_latch[i][j]:
                    continue
                dx = cx[i] - cx[j]
                dy = cy[i] - cy[j]
                rs = cr[i] + cr[j]
                if dx * dx + dy * dy <= rs * rs:
                    cc_latch[i][j] = 1
            for s in range(ns):
                if not sact[s] or cs_latch[i][s]:
                    continue
                px, py = _closest_on_segment(cx[i], cy[i], sax[s], say[s], sbx[s], sby[s])
                dx = cx[i] - px
                dy = cy[i] - py
                if dx * dx + dy * dy <= cr[i] * cr[i]:
                    cs_latch[i][s] = 1

    latch_scan()
    if open_bottom:
        for i in range(nc):
            if cact[i] and cy[i] < abyss_y:
                fallen[i] = 1

    still = 0
    stable = False
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
        rmin = math.inf
        for i in range(nc):
            if cact[i] and cim[i] > 0.0:
                sp = math.sqrt(cvx[i] * cvx[i] + cvy[i] * cvy[i])
                if sp > vmax:
                    vmax = sp
                if cr[i] < rmin:
                    rmin = cr[i]
        if rmin == math.inf or vmax * dt <= PEN_FRACTION * rmin:
            nsub = 1
        else:
            nsub = int(math.ceil(vmax * dt / (PEN_FRACTION * rmin)))
            if nsub > MAX_SUBSTEPS:
                nsub = MAX_SUBSTEPS
        dts = dt / nsub

        for _sub in range(nsub):
            # energy at substep start (active dynamic bodies only)
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

            # contact gather: walls, then circle-circle, then circle-segment
            con_a = []
            con_b = []  # -1 when the partner is static geometry
            con_nx = []
            con_ny = []
            con_mu = []
            con_tg = []
            con_j = []

            def add_contact(ia, ib, nx, ny, mu, static_partner):
                if ib >= 0:
                    un = (cvx[ia] - cvx[ib]) * nx + (cvy[ia] - cvy[ib]) * ny
                else:
                    un = cvx[ia] * nx + cvy[ia] * ny
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
                con_a.append(ia)
                con_b.append(ib)
                con_nx.append(nx)
                con_ny.append(ny)
                con_mu.append(mu)
                con_tg.append(tg)
                con_j.append(0.0)

            for i in range(nc):
                if not cact[i] or cim[i] == 0.0:
                    continue
                r = cr[i]
                mu = 1.0 / cim[i]
                if cx[i] - r <= xmin:
                    add_contact(i, -1, 1.0, 0.0, mu, True)
                if cx[i] + r >= xmax:
                    add_contact(i, -1, -1.0, 0.0, mu, True)
                if (not open_bottom) and cy[i] - r <= ymin:
                    add_contact(i, -1, 0.0, 1.0, mu, True)
                if cy[i] + r >= ymax:
                    add_contact(i, -1, 0.0, -1.0, mu, True)
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
                        d = math.sqrt(d2)
                        nx = dx / d
                        ny = dy / d
                        if cim[j] == 0.0:
                            add_contact(i, -1, nx, ny, 1.0 / cim[i], True)
                        elif cim[i] == 0.0:
                            add_contact(j, -1, -nx, -ny, 1.0 / cim[j], True)
                        else:
                            mu = 1.0 / (cim[i] + cim[j])
                            add_contact(i, j, nx, ny, mu, False)
            for i in range(nc):
                if not cact[i] or cim[i] == 0.0:
                    continue
                for s in range(ns):
                    if not sact[s]:
                        continue
                    px, py = _closest_on_segment(cx[i], cy[i], sax[s], say[s], sbx[s], sby[s])
                    dx = cx[i] - px
                    dy = cy[i] - py
                    d2 = dx * dx + dy * dy
                    if d2 <= cr[i] * cr[i] and d2 > 1e-24:
                        d = math.sqrt(d2)
                        add_contact(i, -1, dx / d, dy / d, 1.0 / cim[i], True)

            ncon = len(con_a)
            for _it in range(pgs_iters):
                for c in range(ncon):
                    ia = con_a[c]
                    ib = con_b[c]
                    nx = con_nx[c]
                    ny = con_ny[c]
                    if ib >= 0:
                        un = (cvx[ia] - cvx[ib]) * nx + (cvy[ia] - cvy[ib]) * ny
                    else:
                        un = cvx[ia] * nx + cvy[ia] * ny
                    dj = con_mu[c] * (con_tg[c] - un)
                    jn = con_j[c] + dj
                    if jn < 0.0:
                        jn = 0.0
                    dj = jn - con_j[c]
                    if dj != 0.0:
                        con_j[c] = jn
                        cvx[ia] += dj * nx * cim[ia]
                        cvy[ia] += dj * ny * cim[ia]
                        if ib >= 0:
                            cvx[ib] -= dj * nx * cim[ib]
                            cvy[ib] -= dj * ny * cim[ib]

            # energy stabilizer: scale velocities if the predicted end-of-substep
            # energy exceeds the energy at substep start
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
                    scale = (-dterm + math.sqrt(disc)) / (2.0 * ke1)
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

            # containment safety net: a body center never leaves the bounds
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

            latch_scan()
            if open_bottom:
                for i in range(nc):
                    if cact[i] and fallen[i] == 0 and cy[i] < abyss_y:
                        fallen[i] = 1

        for i in range(nc):
            if cact[i] and not (
                math.isfinite(cx[i]) and math.isfinite(cy[i])
                and math.isfinite(cvx[i]) and math.isfinite(cvy[i])
            ):
                raise FloatingPointError(f"non-finite state for body index {i}")

        step_i += 1
        bx.append(list(cx))
        by.append(list(cy))
        bvx.append(list(cvx))
        bvy.append(list(cvy))
        bact.append(list(cact))
        bsact.append(list(sact))

        vend = 0.0
        for i in range(nc):
            if cact[i] and cim[i] > 0.0:
                sp = math.sqrt(cvx[i] * cvx[i] + cvy[i] * cvy[i])
                if sp > vend:
                    vend = sp
        if vend < v_eps:
            still += 1
        else:
            still = 0
        if still >= stability_window:
            stable = True
            break

    return {
        "steps": step_i,
        "stable": stable,
        "bx": bx, "by": by, "bvx": bvx, "bvy": bvy,
        "bact": bact, "bsact": bsact,
        "cc_latch": cc_latch, "cs_latch": cs_latch,
        "fallen": fallen,
        "clamp_count": clamp_count,
        "escale_count": escale_count,
    }


def _closest_on_segment(px, py, ax, ay, bx, by):
    abx = bx - ax
    aby = by - ay
    denom = abx * abx + aby * aby
    t = ((px - ax) * abx + (py - ay) * aby) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return (ax + t * abx, ay + t * aby)
