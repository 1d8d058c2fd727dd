"""Compiled numeric core: planar geometry, wrench-space tests, episode stepping.

Everything here is nopython-jitted and operates on plain float64 arrays so the
same machine code runs identically under any worker count. Public dataclass
APIs live in scene/physics/rollout; they unpack into these kernels.
"""

import math

import numpy as np
from numba import njit

# status codes shared with rollout.GraspOutcome
OK = 0
NO_CONTACT = 1
NO_CLOSURE = 2
LIFT_FAIL = 3
SHAKE_FAIL = 4
OBJECT_LOST = 5

INF = 1.0e30


@njit(cache=True)
def fk_chain(base_x, base_y, base_th, links, joints):
    """End frame of a serial planar chain: (x, y, theta)."""
    x = base_x
    y = base_y
    th = base_th
    for j in range(links.shape[0]):
        th += joints[j]
        x += links[j] * math.cos(th)
        y += links[j] * math.sin(th)
    return x, y, th


@njit(cache=True)
def finger_segments(gx, gy, gth, aperture, finger_len):
    """Two parallel finger segments, palm to tip, +lateral = left."""
    fx = math.cos(gth)
    fy = math.sin(gth)
    lx = -fy
    ly = fx
    h = 0.5 * aperture
    lax = gx + h * lx
    lay = gy + h * ly
    rax = gx - h * lx
    ray_ = gy - h * ly
    return (
        lax,
        lay,
        lax + finger_len * fx,
        lay + finger_len * fy,
        rax,
        ray_,
        rax + finger_len * fx,
        ray_ + finger_len * fy,
    )


@njit(cache=True)
def world_polygon(verts_local, ox, oy, oth, out):
    c = math.cos(oth)
    s = math.sin(oth)
    for i in range(verts_local.shape[0]):
        vx = verts_local[i, 0]
        vy = verts_local[i, 1]
        out[i, 0] = ox + c * vx - s * vy
        out[i, 1] = oy + s * vx + c * vy


@njit(cache=True)
def _edge_frames(verts, normals, offsets):
    """Outward unit normal and plane offset per CCW edge; inside iff n.p <= off."""
    n = verts.shape[0]
    for i in range(n):
        x0 = verts[i, 0]
        y0 = verts[i, 1]
        x1 = verts[(i + 1) % n, 0]
        y1 = verts[(i + 1) % n, 1]
        ex = x1 - x0
        ey = y1 - y0
        ln = math.sqrt(ex * ex + ey * ey)
        nx = ey / ln
        ny = -ex / ln
        normals[i, 0] = nx
        normals[i, 1] = ny
        offsets[i] = nx * x0 + ny * y0


@njit(cache=True)
def _seg_seg_closest(ax, ay, bx, by, cx, cy, dx, dy):
    """Closest pair between segments AB and CD.

    Returns (dist, px, py, qx, qy, s) with P on AB, Q on CD, s the CD
    parameter of Q. Parallel overlapping segments report the midpoint of the
    overlap interval so flush contacts are stable.
    """
    ux = bx - ax
    uy = by - ay
    vx = dx - cx
    vy = dy - cy
    wx = ax - cx
    wy = ay - cy
    a = ux * ux + uy * uy
    b = ux * vx + uy * vy
    c = vx * vx + vy * vy
    d = ux * wx + uy * wy
    e = vx * wx + vy * wy
    den = a * c - b * b
    scale = a * c + 1e-300
    if den > 1e-12 * scale:
        s1 = (b * e - c * d) / den
        t1 = (a * e - b * d) / den
        if s1 < 0.0:
            s1 = 0.0
        elif s1 > 1.0:
            s1 = 1.0
        # re-clamp t for the clamped s, then s for the clamped t
        t1 = (b * s1 + e) / c if c > 0.0 else 0.0
        if t1 < 0.0:
            t1 = 0.0
        elif t1 > 1.0:
            t1 = 1.0
        s1 = (b * t1 - d) / a if a > 0.0 else 0.0
        if s1 < 0.0:
            s1 = 0.0
        elif s1 > 1.0:
            s1 = 1.0
        px = ax + s1 * ux
        py = ay + s1 * uy
        qx = cx + t1 * vx
        qy = cy + t1 * vy
        return (
            math.sqrt((px - qx) ** 2 + (py - qy) ** 2),
            px,
            py,
            qx,
            qy,
            t1,
        )
    # parallel (or a degenerate segment): project AB endpoints on CD axis
    if c <= 0.0:
        # CD is a point
        s1 = d / a if a > 0.0 else 0.0
        if s1 < 0.0:
            s1 = 0.0
        elif s1 > 1.0:
            s1 = 1.0
        px = ax + s1 * ux
        py = ay + s1 * uy
        return math.sqrt((px - cx) ** 2 + (py - cy) ** 2), px, py, cx, cy, 0.0
    ta = e / c
    tb = (e + b) / c
    lo = min(ta, tb)
    hi = max(ta, tb)
    olo = max(0.0, lo)
    ohi = min(1.0, hi)
    if olo <= ohi:
        # overlapping span: use its midpoint
        t1 = 0.5 * (olo + ohi)
        qx = cx + t1 * vx
        qy = cy + t1 * vy
        # corresponding point on AB
        s1 = ((qx - ax) * ux + (qy - ay) * uy) / a if a > 0.0 else 0.0
        if s1 < 0.0:
            s1 = 0.0
        elif s1 > 1.0:
            s1 = 1.0
        px = ax + s1 * ux
        py = ay + s1 * uy
        return math.sqrt((px - qx) ** 2 + (py - qy) ** 2), px, py, qx, qy, t1
    # disjoint projections: nearest endpoints
    t1 = 0.0 if hi < 0.0 else 1.0
    qx = cx + t1 * vx
    qy = cy + t1 * vy
    s1 = ((qx - ax) * ux + (qy - ay) * uy) / a if a > 0.0 else 0.0
    if s1 < 0.0:
        s1 = 0.0
    elif s1 > 1.0:
        s1 = 1.0
    px = ax + s1 * ux
    py = ay + s1 * uy
    return math.sqrt((px - qx) ** 2 + (py - qy) ** 2), px, py, qx, qy, t1


@njit(cache=True)
def segment_poly_contact(ax, ay, bx, by, verts, normals, offsets, tol):
    """Contact between one finger segment and a convex CCW polygon.

    Returns (hit, cx, cy, nix, niy, pen, edge, dist): boundary point, inward
    unit normal, penetration depth, supporting edge index, and the separation
    distance (0 when penetrating). hit=1 iff penetrating or dist <= tol.
    """
    ne = verts.shape[0]
    # depth of p(t) = a + t*(b-a) against edge i: d_i(t) = ci + t*gi,
    # inside iff all d_i >= 0; depth = min_i d_i.
    ci = np.empty(ne)
    gi = np.empty(ne)
    for i in range(ne):
        ci[i] = offsets[i] - (normals[i, 0] * ax + normals[i, 1] * ay)
        gi[i] = -(normals[i, 0] * (bx - ax) + normals[i, 1] * (by - ay))
    # candidate parameters: endpoints, edge-line crossings, depth-line crossings
    cand = np.empty(2 + ne + (ne * (ne - 1)) // 2)
    nc = 0
    cand[nc] = 0.0
    nc += 1
    cand[nc] = 1.0
    nc += 1
    for i in range(ne):
        if abs(gi[i]) > 1e-300:
            t = -ci[i] / gi[i]
            if 0.0 < t < 1.0:
                cand[nc] = t
                nc += 1
    for i in range(ne):
        for j in range(i + 1, ne):
            dg = gi[i] - gi[j]
            if abs(dg) > 1e-300:
                t = (ci[j] - ci[i]) / dg
                if 0.0 < t < 1.0:
                    cand[nc] = t
                    nc += 1
    best = -INF
    for k in range(nc):
        t = cand[k]
        dmin = INF
        for i in range(ne):
            d = ci[i] + t * gi[i]
            if d < dmin:
                dmin = d
        if dmin > best:
            best = dmin
    if best > 0.0:
        # penetrating: midpoint of the maximising parameter interval
        tlo = INF
        thi = -INF
        for k in range(nc):
            t = cand[k]
            dmin = INF
            for i in range(ne):
                d = ci[i] + t * gi[i]
                if d < dmin:
                    dmin = d
            if dmin >= best - 1e-12:
                if t < tlo:
                    tlo = t
                if t > thi:
                    thi = t
        ts = 0.5 * (tlo + thi)
        px = ax + ts * (bx - ax)
        py = ay + ts * (by - ay)
        edge = 0
        dmin = INF
        for i in range(ne):
            d = ci[i] + ts * gi[i]
            if d < dmin - 1e-15:
                dmin = d
                edge = i
        # boundary point: project onto the supporting edge, clamped
        x0 = verts[edge, 0]
        y0 = verts[edge, 1]
        x1 = verts[(edge + 1) % ne, 0]
        y1 = verts[(edge + 1) % ne, 1]
        ex = x1 - x0
        ey = y1 - y0
        el2 = ex * ex + ey * ey
        u = ((px - x0) * ex + (py - y0) * ey) / el2
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        return (
            1,
            x0 + u * ex,
            y0 + u * ey,
            -normals[edge, 0],
            -normals[edge, 1],
            best,
            edge,
            0.0,
        )
    # separated (or touching): closest point on the boundary. Among edges tied
    # on distance an edge-interior witness beats a vertex witness, so a flush
    # face contact reports the face rather than an incident corner edge.
    bdist = INF
    bqx = 0.0
    bqy = 0.0
    bedge = 0
    bs = 0.0
    bvert = True
    for i in range(ne):
        x0 = verts[i, 0]
        y0 = verts[i, 1]
        x1 = verts[(i + 1) % ne, 0]
        y1 = verts[(i + 1) % ne, 1]
        dist, _, _, qx, qy, s = _seg_seg_closest(ax, ay, bx, by, x0, y0, x1, y1)
        at_vertex = s <= 1e-9 or s >= 1.0 - 1e-9
        take = False
        if dist < bdist - 1e-12:
            take = True
        elif dist <= bdist + 1e-12 and bvert and not at_vertex:
            take = True
        if take:
            bdist = dist
            bqx = qx
            bqy = qy
            bedge = i
            bs = s
            bvert = at_vertex
    if bdist > tol:
        return 0, 0.0, 0.0, 0.0, 0.0, 0.0, -1, bdist
    # vertex witness: take the lower-index incident edge
    edge = bedge
    if bs <= 1e-9:
        prev = (bedge - 1) % ne
        edge = prev if prev < bedge else bedge
    elif bs >= 1.0 - 1e-9:
        nxt = (bedge + 1) % ne
        edge = nxt if nxt < bedge else bedge
    return 1, bqx, bqy, -normals[edge, 0], -normals[edge, 1], 0.0, edge, bdist


@njit(cache=True)
def ray_convex_entry(px, py, dx, dy, normals, offsets):
    """First t >= 0 where p + t*d enters the polygon; INF when it never does."""
    tmin = -INF
    tmax = INF
    for i in range(normals.shape[0]):
        nd = normals[i, 0] * dx + normals[i, 1] * dy
        np_ = offsets[i] - (normals[i, 0] * px + normals[i, 1] * py)
        if abs(nd) < 1e-300:
            if np_ < 0.0:
                return INF
        elif nd > 0.0:
            t = np_ / nd
            if t < tmax:
                tmax = t
        else:
            t = np_ / nd
            if t > tmin:
                tmin = t
    if tmin > tmax:
        return INF
    if tmax < 0.0:
        return INF
    return tmin if tmin > 0.0 else 0.0


@njit(cache=True)
def _ray_segment(px, py, dx, dy, ax, ay, bx, by):
    """First t >= 0 where p + t*d crosses segment AB; INF if none."""
    ex = bx - ax
    ey = by - ay
    den = dx * ey - dy * ex
    if abs(den) < 1e-300:
        return INF
    wx = ax - px
    wy = ay - py
    t = (wx * ey - wy * ex) / den
    s = (wx * dy - wy * dx) / den
    if t >= 0.0 and 0.0 <= s <= 1.0:
        return t
    return INF


@njit(cache=True)
def sweep_distance(ax, ay, bx, by, dx, dy, verts, normals, offsets):
    """Translation of segment AB along unit d until it first meets the polygon."""
    best = INF
    t = ray_convex_entry(ax, ay, dx, dy, normals, offsets)
    if t < best:
        best = t
    t = ray_convex_entry(bx, by, dx, dy, normals, offsets)
    if t < best:
        best = t
    for i in range(verts.shape[0]):
        t = _ray_segment(verts[i, 0], verts[i, 1], -dx, -dy, ax, ay, bx, by)
        if t < best:
            best = t
    return best


@njit(cache=True)
def build_wrenches(cpx, cpy, cnx, cny, ncontacts, comx, comy, mu, torsional, rho, out):
    """Primitive unit-force wrenches for the contact set.

    Cone edges are n +/- mu*t normalised to unit force; torque is the moment
    about the COM with the torsional bound added before rho-normalisation, so
    scaling rho rescales every torque component uniformly.
    """
    k = 0
    for i in range(ncontacts):
        nx = cnx[i]
        ny = cny[i]
        tx = -ny
        ty = nx
        rx = cpx[i] - comx
        ry = cpy[i] - comy
        for sgn in range(2):
            m = mu if sgn == 0 else -mu
            fx = nx + m * tx
            fy = ny + m * ty
            ln = math.sqrt(fx * fx + fy * fy)
            fx /= ln
            fy /= ln
            cross = rx * fy - ry * fx
            if torsional > 0.0:
                out[k, 0] = fx
                out[k, 1] = fy
                out[k, 2] = (cross + torsional) / rho
                k += 1
                out[k, 0] = fx
                out[k, 1] = fy
                out[k, 2] = (cross - torsional) / rho
                k += 1
            else:
                out[k, 0] = fx
                out[k, 1] = fy
                out[k, 2] = cross / rho
                k += 1
    return k


@njit(cache=True)
def hull_margin(w, n):
    """Radius of the largest origin-centred ball in conv(w[:n]), 0 if not interior.

    Facets are enumerated directly over point triples; n <= 8 in practice.
    """
    if n < 4:
        return 0.0
    scale = 0.0
    for i in range(n):
        for c in range(3):
            a = abs(w[i, c])
            if a > scale:
                scale = a
    if scale <= 0.0:
        return 0.0
    tol = 1e-9 * scale
    eps = INF
    found = False
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                e1x = w[j, 0] - w[i, 0]
                e1y = w[j, 1] - w[i, 1]
                e1z = w[j, 2] - w[i, 2]
                e2x = w[k, 0] - w[i, 0]
                e2y = w[k, 1] - w[i, 1]
                e2z = w[k, 2] - w[i, 2]
                ux = e1y * e2z - e1z * e2y
                uy = e1z * e2x - e1x * e2z
                uz = e1x * e2y - e1y * e2x
                ln = math.sqrt(ux * ux + uy * uy + uz * uz)
                if ln <= 1e-12 * scale * scale:
                    continue
                ux /= ln
                uy /= ln
                uz /= ln
                d = ux * w[i, 0] + uy * w[i, 1] + uz * w[i, 2]
                above = False
                below = False
                for m in range(n):
                    s = ux * w[m, 0] + uy * w[m, 1] + uz * w[m, 2] - d
                    if s > tol:
                        above = True
                    elif s < -tol:
                        below = True
                    if above and below:
                        break
                if above and below:
                    continue
                # orient outward: hull on the <= side
                if above:
                    ux = -ux
                    uy = -uy
                    uz = -uz
                    d = -d
                found = True
                if d < eps:
                    eps = d
                    if eps <= tol:
                        return 0.0
    if not found or eps <= tol:
        return 0.0
    return eps


@njit(cache=True)
def simplex_feasible(w, n, ex, ey, ez, fmax):
    """Phase-1 simplex: is -external a nonneg combination of w[:n] with sum <= fmax?

    Dense tableau with Bland's rule; exact pivoting on a 4-row system.
    """
    ncols = n + 1  # lambdas + budget slack
    # rows 0..2: equality sum(l_i w_i) = b, row 3: sum(l) + s = fmax
    t = np.zeros((4, ncols + 1))
    b0 = -ex
    b1 = -ey
    b2 = -ez
    for i in range(n):
        t[0, i] = w[i, 0]
        t[1, i] = w[i, 1]
        t[2, i] = w[i, 2]
        t[3, i] = 1.0
    t[3, n] = 1.0
    t[0, ncols] = b0
    t[1, ncols] = b1
    t[2, ncols] = b2
    t[3, ncols] = fmax
    # flip equality rows to nonnegative rhs
    for r in range(3):
        if t[r, ncols] < 0.0:
            for c in range(ncols + 1):
                t[r, c] = -t[r, c]
    scale = 1.0
    for r in range(3):
        if t[r, ncols] > scale:
            scale = t[r, ncols]
    tol = 1e-11 * scale
    # basis: artificials on rows 0-2 (virtual), slack on row 3
    basis = np.empty(4, dtype=np.int64)
    basis[0] = -1
    basis[1] = -2
    basis[2] = -3
    basis[3] = n
    # phase-1 objective row: sum of artificial rows
    obj = np.zeros(ncols + 1)
    for r in range(3):
        for c in range(ncols + 1):
            obj[c] += t[r, c]
    it = 0
    max_it = 200
    while it < max_it:
        it += 1
        enter = -1
        for c in range(ncols):
            if obj[c] > tol:
                enter = c  # Bland: lowest index
                break
        if enter < 0:
            break
        leave = -1
        ratio = INF
        for r in range(4):
            a = t[r, enter]
            if a > tol:
                rt = t[r, ncols] / a
                if rt < ratio - 1e-15 or (rt < ratio + 1e-15 and leave >= 0 and basis[r] < basis[leave]):
                    ratio = rt
                    leave = r
        if leave < 0:
            break  # unbounded improvement direction: cannot happen in phase 1
        piv = t[leave, enter]
        for c in range(ncols + 1):
            t[leave, c] /= piv
        for r in range(4):
            if r != leave:
                f = t[r, enter]
                if f != 0.0:
                    for c in range(ncols + 1):
                        t[r, c] -= f * t[leave, c]
        f = obj[enter]
        if f != 0.0:
            for c in range(ncols + 1):
                obj[c] -= f * t[leave, c]
        basis[leave] = enter
    resid = obj[ncols]
    return resid <= 1e-8 * (1.0 + scale)


@njit(cache=True)
def can_resist(w, n, ex, ey, ez, fmax, eps):
    """Feasibility with a ball-containment fast path (exact implication)."""
    if n == 0:
        return False
    nrm = math.sqrt(ex * ex + ey * ey + ez * ez)
    if nrm == 0.0:
        return True
    if eps > 0.0 and nrm <= eps * fmax:
        return True
    return simplex_feasible(w, n, ex, ey, ez, fmax)


@njit(cache=True)
def _rotate_about(ox, oy, oth, cx, cy, dth):
    """Rotate the object frame by dth about world point (cx, cy)."""
    c = math.cos(dth)
    s = math.sin(dth)
    rx = ox - cx
    ry = oy - cy
    return cx + c * rx - s * ry, cy + s * rx + c * ry, oth + dth


@njit(cache=True)
def _com_world(comx_l, comy_l, ox, oy, oth):
    c = math.cos(oth)
    s = math.sin(oth)
    return ox + c * comx_l - s * comy_l, oy + s * comx_l + c * comy_l


@njit(cache=True)
def resolve_pushes(
    seg,
    verts_local,
    comx_l,
    comy_l,
    ox,
    oy,
    oth,
    rho,
    rot_damp,
    wverts,
    normals,
    offsets,
    pen_stop,
    max_iters,
):
    """Push the object out of the finger segments.

    Each iteration applies the first-order minimum-norm rigid motion removing
    the deepest contact's penetration: a step along the penetration gradient
    in (translation, rho*rotation) coordinates, with the rotation component
    damped by the rolling-friction factor. Returns (ox, oy, oth, path_length,
    resolved).
    """
    moved = 0.0
    for _ in range(max_iters):
        world_polygon(verts_local, ox, oy, oth, wverts)
        _edge_frames(wverts, normals, offsets)
        bpen = 0.0
        bpx = 0.0
        bpy = 0.0
        bnx = 0.0
        bny = 0.0
        for f in range(2):
            hit, cx, cy, nx, ny, pen, _, _ = segment_poly_contact(
                seg[f, 0], seg[f, 1], seg[f, 2], seg[f, 3], wverts, normals, offsets, 0.0
            )
            if hit == 1 and pen > bpen:
                bpen = pen
                bpx = cx
                bpy = cy
                bnx = nx
                bny = ny
        if bpen <= pen_stop:
            return ox, oy, oth, moved, True
        cwx, cwy = _com_world(comx_l, comy_l, ox, oy, oth)
        lever = (bpx - cwx) * bny - (bpy - cwy) * bnx
        lr = lever / rho
        base = bpen / (1.0 + lr * lr)
        ox += base * bnx
        oy += base * bny
        moved += base
        dth = rot_damp * base * lever / (rho * rho)
        ox, oy, oth = _rotate_about(ox, oy, oth, cwx, cwy, dth)
    # convergence failure: report unresolved so the caller can fail the episode
    return ox, oy, oth, moved, False


@njit(cache=True)
def run_episode_kernel(
    waypoints,
    lim_lo,
    lim_hi,
    base_x,
    base_y,
    base_th,
    links,
    finger_len,
    max_aperture,
    verts_local,
    comx_l,
    comy_l,
    obj_x0,
    obj_y0,
    obj_th0,
    mass,
    grav,
    mu,
    zeta_s,
    zeta_r,
    rho,
    contact_tol,
    touch_tol,
    pen_stop,
    eps_min,
    f_max,
    knock_dist,
    kappa_scale,
    close_quantum,
    shake_force,
    shake_torque,
    close_step,
    joint_noise,
    contacts_out,
    trace,
):
    """One quasi-static reach-and-grasp episode.

    Returns (status, epsilon, aperture, obj_x, obj_y, obj_th, grip_x, grip_y,
    grip_th, bearing, ncontacts, trace_rows).
    """
    T = waypoints.shape[0]
    J = waypoints.shape[1]
    nv = verts_local.shape[0]
    wverts = np.empty((nv, 2))
    normals = np.empty((nv, 2))
    offsets = np.empty(nv)
    seg = np.empty((2, 4))
    joints = np.empty(J)
    for j in range(J):
        joints[j] = waypoints[0, j]
    ox = obj_x0
    oy = obj_y0
    oth = obj_th0
    rot_damp = 1.0 / (1.0 + zeta_r * mass * grav * kappa_scale)

    # bounding radii for the cheap no-interaction test
    obj_rad = 0.0
    for i in range(nv):
        r = math.sqrt(verts_local[i, 0] ** 2 + verts_local[i, 1] ** 2)
        if r > obj_rad:
            obj_rad = r
    grip_rad = finger_len + 0.5 * max_aperture

    tracing = trace.shape[0] > 0
    trow = 0
    aperture = max_aperture
    best_dist = INF
    bearing = 0.0
    gx, gy, gth = fk_chain(base_x, base_y, base_th, links, joints)
    status = -1

    for step in range(close_step + 1):
        if step > 0:
            # transition: planned command plus per-step joint noise, clipped
            for j in range(J):
                nj = joints[j] + (waypoints[step, j] - waypoints[step - 1, j]) + joint_noise[step - 1, j]
                if nj < lim_lo[j]:
                    nj = lim_lo[j]
                elif nj > lim_hi[j]:
                    nj = lim_hi[j]
                joints[j] = nj
            gx, gy, gth = fk_chain(base_x, base_y, base_th, links, joints)
        cwx, cwy = _com_world(comx_l, comy_l, ox, oy, oth)
        dx = gx - cwx
        dy = gy - cwy
        dist = math.sqrt(dx * dx + dy * dy)
        if dist < best_dist:
            best_dist = dist
            bearing = math.atan2(
                -math.sin(oth) * dx + math.cos(oth) * dy,
                math.cos(oth) * dx + math.sin(oth) * dy,
            )
        npen = 0
        maxpen = 0.0
        moved = 0.0
        if dist <= obj_rad + grip_rad + contact_tol:
            l0x, l0y, l1x, l1y, r0x, r0y, r1x, r1y = finger_segments(
                gx, gy, gth, aperture, finger_len
            )
            seg[0, 0] = l0x
            seg[0, 1] = l0y
            seg[0, 2] = l1x
            seg[0, 3] = l1y
            seg[1, 0] = r0x
            seg[1, 1] = r0y
            seg[1, 2] = r1x
            seg[1, 3] = r1y
            world_polygon(verts_local, ox, oy, oth, wverts)
            _edge_frames(wverts, normals, offsets)
            for f in range(2):
                hit, _, _, _, _, pen, _, _ = segment_poly_contact(
                    seg[f, 0], seg[f, 1], seg[f, 2], seg[f, 3], wverts, normals, offsets, 0.0
                )
                if hit == 1 and pen > maxpen:
                    maxpen = pen
                    npen += 1
            if maxpen > pen_stop:
                ox, oy, oth, moved, okres = resolve_pushes(
                    seg, verts_local, comx_l, comy_l, ox, oy, oth, rho, rot_damp,
                    wverts, normals, offsets, pen_stop, 60,
                )
                if moved > knock_dist or not okres:
                    status = OBJECT_LOST
        if tracing and trow < trace.shape[0]:
            trace[trow, 0] = 0.0
            trace[trow, 1] = step
            trace[trow, 2] = gx
            trace[trow, 3] = gy
            trace[trow, 4] = gth
            trace[trow, 5] = aperture
            trace[trow, 6] = ox
            trace[trow, 7] = oy
            trace[trow, 8] = oth
            trace[trow, 9] = npen
            trace[trow, 10] = maxpen
            trace[trow, 11] = moved
            for j in range(J):
                trace[trow, 12 + j] = joints[j]
            trow += 1
        if status == OBJECT_LOST:
            return (OBJECT_LOST, 0.0, aperture, ox, oy, oth, gx, gy, gth, bearing, 0, trow)

    # closing phase: shrink aperture until both fingers touch or it reaches zero
    fwx = math.cos(gth)
    fwy = math.sin(gth)
    latx = -fwy
    laty = fwx
    for _ in range(8192):
        l0x, l0y, l1x, l1y, r0x, r0y, r1x, r1y = finger_segments(
            gx, gy, gth, aperture, finger_len
        )
        seg[0, 0] = l0x
        seg[0, 1] = l0y
        seg[0, 2] = l1x
        seg[0, 3] = l1y
        seg[1, 0] = r0x
        seg[1, 1] = r0y
        seg[1, 2] = r1x
        seg[1, 3] = r1y
        world_polygon(verts_local, ox, oy, oth, wverts)
        _edge_frames(wverts, normals, offsets)
        hitl, _, _, _, _, penl, _, distl = segment_poly_contact(
            l0x, l0y, l1x, l1y, wverts, normals, offsets, touch_tol
        )
        hitr, _, _, _, _, penr, _, distr = segment_poly_contact(
            r0x, r0y, r1x, r1y, wverts, normals, offsets, touch_tol
        )
        touchl = hitl == 1
        touchr = hitr == 1
        if penl > pen_stop or penr > pen_stop:
            ox, oy, oth, _, okres = resolve_pushes(
                seg, verts_local, comx_l, comy_l, ox, oy, oth, rho, rot_damp,
                wverts, normals, offsets, pen_stop, 60,
            )
            if not okres:
                status = OBJECT_LOST
                break
            continue
        if (touchl and touchr) or aperture <= 0.0:
            break
        # advance to the next touch event (in aperture units; fingers move at 1/2)
        adv = INF
        if not touchl:
            d = sweep_distance(l0x, l0y, l1x, l1y, -latx, -laty, wverts, normals, offsets)
            a = 2.0 * d
            if a < adv:
                adv = a
        if not touchr:
            d = sweep_distance(r0x, r0y, r1x, r1y, latx, laty, wverts, normals, offsets)
            a = 2.0 * d
            if a < adv:
                adv = a
        if not touchl and not touchr:
            if adv >= aperture:
                aperture = 0.0
                break
            aperture -= adv
        else:
            stepa = close_quantum
            if adv < stepa:
                stepa = adv
            if aperture < stepa:
                stepa = aperture
            aperture -= stepa
        if tracing and trow < trace.shape[0]:
            trace[trow, 0] = 1.0
            trace[trow, 1] = close_step
            trace[trow, 2] = gx
            trace[trow, 3] = gy
            trace[trow, 4] = gth
            trace[trow, 5] = aperture
            trace[trow, 6] = ox
            trace[trow, 7] = oy
            trace[trow, 8] = oth
            trace[trow, 9] = (1.0 if touchl else 0.0) + (1.0 if touchr else 0.0)
            trace[trow, 10] = max(penl, penr)
            trace[trow, 11] = 0.0
            for j in range(J):
                trace[trow, 12 + j] = joints[j]
            trow += 1
    if status == OBJECT_LOST:
        return (OBJECT_LOST, 0.0, aperture, ox, oy, oth, gx, gy, gth, bearing, 0, trow)

    # final contact set and grasp evaluation
    l0x, l0y, l1x, l1y, r0x, r0y, r1x, r1y = finger_segments(gx, gy, gth, aperture, finger_len)
    seg[0, 0] = l0x
    seg[0, 1] = l0y
    seg[0, 2] = l1x
    seg[0, 3] = l1y
    seg[1, 0] = r0x
    seg[1, 1] = r0y
    seg[1, 2] = r1x
    seg[1, 3] = r1y
    world_polygon(verts_local, ox, oy, oth, wverts)
    _edge_frames(wverts, normals, offsets)
    ncont = 0
    for f in range(2):
        hit, cx, cy, nx, ny, pen, _, _ = segment_poly_contact(
            seg[f, 0], seg[f, 1], seg[f, 2], seg[f, 3], wverts, normals, offsets, contact_tol
        )
        if hit == 1:
            contacts_out[ncont, 0] = cx
            contacts_out[ncont, 1] = cy
            contacts_out[ncont, 2] = nx
            contacts_out[ncont, 3] = ny
            contacts_out[ncont, 4] = pen if pen > 0.0 else 0.0
            contacts_out[ncont, 5] = f
            ncont += 1
    if ncont < 2:
        return (NO_CONTACT, 0.0, aperture, ox, oy, oth, gx, gy, gth, bearing, ncont, trow)
    cwx, cwy = _com_world(comx_l, comy_l, ox, oy, oth)
    wout = np.empty((4 * ncont, 3))
    cpx = contacts_out[:ncont, 0].copy()
    cpy = contacts_out[:ncont, 1].copy()
    cnx = contacts_out[:ncont, 2].copy()
    cny = contacts_out[:ncont, 3].copy()
    nw = build_wrenches(cpx, cpy, cnx, cny, ncont, cwx, cwy, mu, zeta_s, rho, wout)
    eps = hull_margin(wout, nw)
    if eps <= eps_min:
        return (NO_CLOSURE, eps, aperture, ox, oy, oth, gx, gy, gth, bearing, ncont, trow)
    if not can_resist(wout, nw, 0.0, -mass * grav, 0.0, f_max, eps):
        return (LIFT_FAIL, eps, aperture, ox, oy, oth, gx, gy, gth, bearing, ncont, trow)
    fs = shake_force if shake_force >= 0.0 else 0.5 * mass * grav
    ts = shake_torque if shake_torque >= 0.0 else 0.25 * mass * grav * rho
    tsn = ts / rho
    for sx in range(-1, 2, 2):
        for sy in range(-1, 2, 2):
            for st in range(-1, 2, 2):
                if not can_resist(wout, nw, sx * fs, sy * fs, st * tsn, f_max, eps):
                    return (SHAKE_FAIL, eps, aperture, ox, oy, oth, gx, gy, gth, bearing, ncont, trow)
    return (OK, eps, aperture, ox, oy, oth, gx, gy, gth, bearing, ncont, trow)
