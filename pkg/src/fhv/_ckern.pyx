# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: triangle coverage, linked-list insertion, per-octant
scatter, and whole-image ray casting.

Every function mirrors the NumPy backend (fhv._kernels_py and the
reference traversal in fhv.raycast) operation for operation; given the
same inputs the outputs must be bit-identical.  Keep the arithmetic
expression trees in sync when changing either side.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, floor, pow, sqrt
from libc.stdlib cimport free, malloc, realloc

cnp.import_array()

BACKEND_NAME = "compiled"


# ---------------------------------------------------------------------------
# Rasterizer coverage


def coverage(double ax, double ay, double bx, double by, double cx, double cy,
             int w, int h):
    """See fhv._kernels_py.coverage."""
    cdef double area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area2 <= 0.0:
        raise ValueError("coverage() requires positively wound vertices")

    cdef double minx = ax
    cdef double maxx = ax
    cdef double miny = ay
    cdef double maxy = ay
    if bx < minx: minx = bx
    if cx < minx: minx = cx
    if bx > maxx: maxx = bx
    if cx > maxx: maxx = cx
    if by < miny: miny = by
    if cy < miny: miny = cy
    if by > maxy: maxy = by
    if cy > maxy: maxy = cy

    cdef long x0 = <long>ceil(minx - 0.5)
    cdef long x1 = <long>floor(maxx - 0.5)
    cdef long y0 = <long>ceil(miny - 0.5)
    cdef long y1 = <long>floor(maxy - 0.5)
    if x0 < 0: x0 = 0
    if y0 < 0: y0 = 0
    if x1 > w - 1: x1 = w - 1
    if y1 > h - 1: y1 = h - 1

    empty = (np.empty(0, np.int32), np.empty(0, np.int32),
             np.empty(0, np.float64), np.empty(0, np.float64),
             np.empty(0, np.float64))
    if x1 < x0 or y1 < y0:
        return empty

    cdef long cap = (x1 - x0 + 1) * (y1 - y0 + 1)
    out_px = np.empty(cap, np.int32)
    out_py = np.empty(cap, np.int32)
    out_l0 = np.empty(cap, np.float64)
    out_l1 = np.empty(cap, np.float64)
    out_l2 = np.empty(cap, np.float64)
    cdef cnp.int32_t[::1] vpx = out_px
    cdef cnp.int32_t[::1] vpy = out_py
    cdef double[::1] vl0 = out_l0
    cdef double[::1] vl1 = out_l1
    cdef double[::1] vl2 = out_l2

    cdef double d0x = cx - bx, d0y = cy - by  # edge v1 -> v2 (opposite v0)
    cdef double d1x = ax - cx, d1y = ay - cy  # edge v2 -> v0 (opposite v1)
    cdef double d2x = bx - ax, d2y = by - ay  # edge v0 -> v1 (opposite v2)
    cdef bint tl0 = d0y < 0.0 or (d0y == 0.0 and d0x > 0.0)
    cdef bint tl1 = d1y < 0.0 or (d1y == 0.0 and d1x > 0.0)
    cdef bint tl2 = d2y < 0.0 or (d2y == 0.0 and d2x > 0.0)

    cdef long n = 0
    cdef long px, py
    cdef double sx, sy, f0, f1, f2
    with nogil:
        for py in range(y0, y1 + 1):
            sy = py + 0.5
            for px in range(x0, x1 + 1):
                sx = px + 0.5
                f0 = d0x * (sy - by) - d0y * (sx - bx)
                if not (f0 > 0.0 or (f0 == 0.0 and tl0)):
                    continue
                f1 = d1x * (sy - cy) - d1y * (sx - cx)
                if not (f1 > 0.0 or (f1 == 0.0 and tl1)):
                    continue
                f2 = d2x * (sy - ay) - d2y * (sx - ax)
                if not (f2 > 0.0 or (f2 == 0.0 and tl2)):
                    continue
                vpx[n] = <cnp.int32_t>px
                vpy[n] = <cnp.int32_t>py
                vl0[n] = f0 / area2
                vl1[n] = f1 / area2
                vl2[n] = f2 / area2
                n += 1
    if n == 0:
        return empty
    return (out_px[:n].copy(), out_py[:n].copy(),
            out_l0[:n].copy(), out_l1[:n].copy(), out_l2[:n].copy())


# ---------------------------------------------------------------------------
# Storage insertion


def linked_insert(cnp.int64_t[::1] keys, cnp.int32_t[::1] heads,
                  cnp.int32_t[::1] prev, long long start):
    """See fhv._kernels_py.linked_insert."""
    cdef Py_ssize_t i
    cdef long long idx = start
    cdef long long k
    with nogil:
        for i in range(keys.shape[0]):
            k = keys[i]
            prev[idx] = heads[k]
            heads[k] = <cnp.int32_t>idx
            idx += 1


def pofa_scatter(cnp.int64_t[::1] codes, cnp.uint32_t[::1] offsets,
                 cnp.uint32_t[::1] counts, cnp.uint32_t[::1] cursors,
                 cnp.int64_t[::1] dest):
    """See fhv._kernels_py.pofa_scatter."""
    cdef Py_ssize_t i
    cdef long long c
    cdef cnp.uint32_t cur
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(codes.shape[0]):
            c = codes[i]
            cur = cursors[c]
            if cur >= counts[c]:
                bad = i
                break
            dest[i] = <long long>offsets[c] + cur
            cursors[c] = cur + 1
    return bad


# ---------------------------------------------------------------------------
# Ray casting

cdef struct HitBuf:
    double* t
    long long* i
    long long cap


cdef struct Ctx:
    int layout_kind          # 0 = per-octant arrays, 1 = per-octant lists
    int levels
    int mode                 # 0 opaque_nearest, 1 transparency, 2 +shadows
    int n_lights
    long long* arr_a         # offsets / heads
    long long* arr_b         # counts / prev links
    unsigned char* pyramid
    long long* pyr_off
    float* pool_pos
    float* pool_nrm
    long long* pool_mat
    long long* pool_obj
    double* mat_diffuse
    double* mat_specular
    double* mat_shininess
    double* mat_alpha
    unsigned char* light_kind
    double* light_vec
    double* light_color
    double* light_ambient
    double eye[3]
    double bg[4]
    double radius
    double cutoff            # < 0 disables early termination
    double shadow_eps
    HitBuf primary           # primary-ray hit scratch
    HitBuf shadow            # shadow-ray hit scratch (primary stays live)
    long long visited
    long long tested
    long long hits
    long long early


cdef struct StackEntry:
    int level
    long long code
    double lox, loy, loz
    double te, tx


cdef bint _slab(double ox, double oy, double oz,
                double dx, double dy, double dz,
                double lox, double loy, double loz,
                double hix, double hiy, double hiz,
                double t0, double t1, double* out0, double* out1) nogil:
    cdef double ta, tb, tmp
    if dx == 0.0:
        if ox < lox or ox > hix:
            return False
    else:
        ta = (lox - ox) / dx
        tb = (hix - ox) / dx
        if ta > tb:
            tmp = ta; ta = tb; tb = tmp
        if ta > t0: t0 = ta
        if tb < t1: t1 = tb
    if dy == 0.0:
        if oy < loy or oy > hiy:
            return False
    else:
        ta = (loy - oy) / dy
        tb = (hiy - oy) / dy
        if ta > tb:
            tmp = ta; ta = tb; tb = tmp
        if ta > t0: t0 = ta
        if tb < t1: t1 = tb
    if dz == 0.0:
        if oz < loz or oz > hiz:
            return False
    else:
        ta = (loz - oz) / dz
        tb = (hiz - oz) / dz
        if ta > tb:
            tmp = ta; ta = tb; tb = tmp
        if ta > t0: t0 = ta
        if tb < t1: t1 = tb
    if t0 > t1:
        return False
    out0[0] = t0
    out1[0] = t1
    return True


cdef bint _grow_hits(HitBuf* buf, long long need) nogil:
    cdef long long cap = buf.cap
    cdef double* nt
    cdef long long* ni
    if need <= cap:
        return True
    while cap < need:
        cap *= 2
    nt = <double*>realloc(buf.t, cap * sizeof(double))
    if nt != NULL:
        buf.t = nt
    ni = <long long*>realloc(buf.i, cap * sizeof(long long))
    if ni != NULL:
        buf.i = ni
    if nt == NULL or ni == NULL:
        return False
    buf.cap = cap
    return True


cdef long long _leaf_hits(Ctx* ctx, HitBuf* buf, long long code,
                          double ox, double oy, double oz,
                          double dx, double dy, double dz,
                          double t_min, double t_max) nogil:
    """Collect sorted (t, index) hits of one leaf into the given buffer."""
    cdef long long n = 0
    cdef long long i, cnt, k
    cdef double px, py, pz, t, ex, ey, ez
    cdef double r2 = ctx.radius * ctx.radius
    cdef long long j
    cdef double kt
    cdef long long ki

    if ctx.layout_kind == 0:
        i = ctx.arr_a[code]
        cnt = ctx.arr_b[code]
        ctx.tested += cnt
        for k in range(i, i + cnt):
            px = <double>ctx.pool_pos[3 * k]
            py = <double>ctx.pool_pos[3 * k + 1]
            pz = <double>ctx.pool_pos[3 * k + 2]
            t = (px - ox) * dx + (py - oy) * dy + (pz - oz) * dz
            if t < t_min or t > t_max:
                continue
            ex = px - ox - t * dx
            ey = py - oy - t * dy
            ez = pz - oz - t * dz
            if ex * ex + ey * ey + ez * ez <= r2:
                if not _grow_hits(buf, n + 1):
                    break
                buf.t[n] = t
                buf.i[n] = k
                n += 1
    else:
        k = ctx.arr_a[code]
        while k >= 0:
            ctx.tested += 1
            px = <double>ctx.pool_pos[3 * k]
            py = <double>ctx.pool_pos[3 * k + 1]
            pz = <double>ctx.pool_pos[3 * k + 2]
            t = (px - ox) * dx + (py - oy) * dy + (pz - oz) * dz
            if not (t < t_min or t > t_max):
                ex = px - ox - t * dx
                ey = py - oy - t * dy
                ez = pz - oz - t * dz
                if ex * ex + ey * ey + ez * ez <= r2:
                    if not _grow_hits(buf, n + 1):
                        break
                    buf.t[n] = t
                    buf.i[n] = k
                    n += 1
            k = ctx.arr_b[k]

    # insertion sort by (t, pool index)
    for j in range(1, n):
        kt = buf.t[j]
        ki = buf.i[j]
        k = j - 1
        while k >= 0 and (buf.t[k] > kt or (buf.t[k] == kt and buf.i[k] > ki)):
            buf.t[k + 1] = buf.t[k]
            buf.i[k + 1] = buf.i[k]
            k -= 1
        buf.t[k + 1] = kt
        buf.i[k + 1] = ki
    return n


cdef double _transmit(Ctx* ctx, double px0, double py0, double pz0,
                      int light, long long ex_obj, long long ex_cell) nogil:
    """Product of (1 - alpha) over occluders toward one light."""
    cdef double lx, ly, lz, llen, t_max
    cdef double ox, oy, oz
    if ctx.light_kind[light] == 0:
        lx = ctx.light_vec[3 * light]
        ly = ctx.light_vec[3 * light + 1]
        lz = ctx.light_vec[3 * light + 2]
        t_max = INFINITY
    else:
        lx = ctx.light_vec[3 * light] - px0
        ly = ctx.light_vec[3 * light + 1] - py0
        lz = ctx.light_vec[3 * light + 2] - pz0
        llen = sqrt(lx * lx + ly * ly + lz * lz)
        if llen == 0.0:
            return 1.0
        lx /= llen
        ly /= llen
        lz /= llen
        t_max = llen
    ox = px0 + ctx.shadow_eps * lx
    oy = py0 + ctx.shadow_eps * ly
    oz = pz0 + ctx.shadow_eps * lz

    cdef double tau = 1.0
    cdef StackEntry stack[256]
    cdef int sp = 0
    cdef double rt0, rt1, cte, cext, sx0, sy0, sz0
    cdef StackEntry e
    cdef int mask, c, nc, j, m
    cdef double half
    cdef double chte[8]
    cdef int chc[8]
    cdef double chtx[8]
    cdef double chlo[24]
    cdef long long nh, hidx, q
    cdef bint done = False

    if not _slab(ox, oy, oz, lx, ly, lz, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0,
                 0.0, t_max, &rt0, &rt1):
        return tau
    stack[0].level = 0
    stack[0].code = 0
    stack[0].lox = 0.0
    stack[0].loy = 0.0
    stack[0].loz = 0.0
    stack[0].te = rt0
    stack[0].tx = rt1
    sp = 1
    while sp > 0 and not done:
        sp -= 1
        e = stack[sp]
        if e.level == ctx.levels:
            ctx.visited += 1
            nh = _leaf_hits(ctx, &ctx.shadow, e.code, ox, oy, oz, lx, ly, lz,
                            0.0, t_max)
            for q in range(nh):
                hidx = ctx.shadow.i[q]
                if (ex_obj >= 0 and ctx.pool_obj[hidx] == ex_obj
                        and e.code == ex_cell):
                    continue
                tau = tau * (1.0 - ctx.mat_alpha[ctx.pool_mat[hidx]])
                if tau == 0.0:
                    done = True
                    break
            continue
        mask = ctx.pyramid[ctx.pyr_off[e.level] + e.code]
        if mask == 0:
            continue
        half = 0.5 / (1 << e.level)
        nc = 0
        for c in range(8):
            if not (mask >> c) & 1:
                continue
            chlo[3 * nc] = e.lox + (c & 1) * half
            chlo[3 * nc + 1] = e.loy + ((c >> 1) & 1) * half
            chlo[3 * nc + 2] = e.loz + ((c >> 2) & 1) * half
            if _slab(ox, oy, oz, lx, ly, lz,
                     chlo[3 * nc], chlo[3 * nc + 1], chlo[3 * nc + 2],
                     chlo[3 * nc] + half, chlo[3 * nc + 1] + half,
                     chlo[3 * nc + 2] + half, 0.0, t_max, &cte, &cext):
                chte[nc] = cte
                chtx[nc] = cext
                chc[nc] = c
                nc += 1
        # insertion sort children by (entry t, child index)
        for j in range(1, nc):
            cte = chte[j]; cext = chtx[j]; c = chc[j]
            m = 3 * j
            sx0 = chlo[m]; sy0 = chlo[m + 1]; sz0 = chlo[m + 2]
            m = j - 1
            while m >= 0 and (chte[m] > cte or (chte[m] == cte and chc[m] > c)):
                chte[m + 1] = chte[m]; chtx[m + 1] = chtx[m]; chc[m + 1] = chc[m]
                chlo[3 * m + 3] = chlo[3 * m]
                chlo[3 * m + 4] = chlo[3 * m + 1]
                chlo[3 * m + 5] = chlo[3 * m + 2]
                m -= 1
            chte[m + 1] = cte; chtx[m + 1] = cext; chc[m + 1] = c
            chlo[3 * m + 3] = sx0; chlo[3 * m + 4] = sy0; chlo[3 * m + 5] = sz0
        for j in range(nc - 1, -1, -1):
            stack[sp].level = e.level + 1
            stack[sp].code = e.code * 8 + chc[j]
            stack[sp].lox = chlo[3 * j]
            stack[sp].loy = chlo[3 * j + 1]
            stack[sp].loz = chlo[3 * j + 2]
            stack[sp].te = chte[j]
            stack[sp].tx = chtx[j]
            sp += 1
    return tau


cdef void _shade_hit(Ctx* ctx, long long i, long long leaf,
                     double* out3) nogil:
    """Blinn-Phong for one stored fragment, shadow-attenuated in mode 2."""
    cdef double px = <double>ctx.pool_pos[3 * i]
    cdef double py = <double>ctx.pool_pos[3 * i + 1]
    cdef double pz = <double>ctx.pool_pos[3 * i + 2]
    cdef double nx = <double>ctx.pool_nrm[3 * i]
    cdef double ny = <double>ctx.pool_nrm[3 * i + 1]
    cdef double nz = <double>ctx.pool_nrm[3 * i + 2]
    cdef long long m = ctx.pool_mat[i]
    cdef double dr = ctx.mat_diffuse[3 * m]
    cdef double dg = ctx.mat_diffuse[3 * m + 1]
    cdef double db = ctx.mat_diffuse[3 * m + 2]
    cdef double sr = ctx.mat_specular[3 * m]
    cdef double sg = ctx.mat_specular[3 * m + 1]
    cdef double sb = ctx.mat_specular[3 * m + 2]
    cdef double shin = ctx.mat_shininess[m]

    cdef double vx = ctx.eye[0] - px
    cdef double vy = ctx.eye[1] - py
    cdef double vz = ctx.eye[2] - pz
    cdef double vlen = sqrt(vx * vx + vy * vy + vz * vz)
    if vlen > 0.0:
        vx /= vlen
        vy /= vlen
        vz /= vlen
    else:
        vx = vy = vz = 0.0

    cdef double r = 0.0, g = 0.0, b = 0.0
    cdef int li
    cdef double lx, ly, lz, llen, hx, hy, hz, hlen, ndl, ndh, spec, tau
    for li in range(ctx.n_lights):
        if ctx.light_kind[li] == 0:
            lx = ctx.light_vec[3 * li]
            ly = ctx.light_vec[3 * li + 1]
            lz = ctx.light_vec[3 * li + 2]
        else:
            lx = ctx.light_vec[3 * li] - px
            ly = ctx.light_vec[3 * li + 1] - py
            lz = ctx.light_vec[3 * li + 2] - pz
            llen = sqrt(lx * lx + ly * ly + lz * lz)
            if llen > 0.0:
                lx /= llen
                ly /= llen
                lz /= llen
            else:
                lx = ly = lz = 0.0
        hx = lx + vx
        hy = ly + vy
        hz = lz + vz
        hlen = sqrt(hx * hx + hy * hy + hz * hz)
        if hlen > 0.0:
            hx /= hlen
            hy /= hlen
            hz /= hlen
        else:
            hx = hy = hz = 0.0
        ndl = nx * lx + ny * ly + nz * lz
        if ndl < 0.0:
            ndl = 0.0
        ndh = nx * hx + ny * hy + nz * hz
        if ndh < 0.0:
            ndh = 0.0
        tau = 1.0
        if ctx.mode == 2:
            tau = _transmit(ctx, px, py, pz, li, ctx.pool_obj[i], leaf)
        spec = pow(ndh, shin)
        r += ctx.light_ambient[3 * li] * dr
        g += ctx.light_ambient[3 * li + 1] * dg
        b += ctx.light_ambient[3 * li + 2] * db
        r += tau * ndl * dr * ctx.light_color[3 * li]
        g += tau * ndl * dg * ctx.light_color[3 * li + 1]
        b += tau * ndl * db * ctx.light_color[3 * li + 2]
        r += tau * spec * sr * ctx.light_color[3 * li]
        g += tau * spec * sg * ctx.light_color[3 * li + 1]
        b += tau * spec * sb * ctx.light_color[3 * li + 2]
    if r < 0.0: r = 0.0
    if r > 1.0: r = 1.0
    if g < 0.0: g = 0.0
    if g > 1.0: g = 1.0
    if b < 0.0: b = 0.0
    if b > 1.0: b = 1.0
    out3[0] = r
    out3[1] = g
    out3[2] = b


cdef void _ray_eval(Ctx* ctx, double ox, double oy, double oz,
                    double dx, double dy, double dz,
                    double* out4, long long* first_obj) nogil:
    cdef double c0 = 0.0, c1 = 0.0, c2 = 0.0, acc = 0.0
    cdef bint any_hit = False
    cdef bint done = False
    first_obj[0] = -1

    cdef StackEntry stack[256]
    cdef int sp = 0
    cdef double rt0, rt1, cte, cext, sx0, sy0, sz0
    cdef StackEntry e
    cdef int mask, c, nc, j, m
    cdef double half
    cdef double chte[8]
    cdef int chc[8]
    cdef double chtx[8]
    cdef double chlo[24]
    cdef long long nh, hidx, q
    cdef double a, tcov
    cdef double color[3]

    if _slab(ox, oy, oz, dx, dy, dz, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0,
             0.0, INFINITY, &rt0, &rt1):
        stack[0].level = 0
        stack[0].code = 0
        stack[0].lox = 0.0
        stack[0].loy = 0.0
        stack[0].loz = 0.0
        stack[0].te = rt0
        stack[0].tx = rt1
        sp = 1
    while sp > 0 and not done:
        sp -= 1
        e = stack[sp]
        if e.level == ctx.levels:
            ctx.visited += 1
            nh = _leaf_hits(ctx, &ctx.primary, e.code, ox, oy, oz, dx, dy, dz,
                            0.0, INFINITY)
            for q in range(nh):
                hidx = ctx.primary.i[q]
                ctx.hits += 1
                if first_obj[0] < 0:
                    first_obj[0] = ctx.pool_obj[hidx]
                if ctx.mode == 0:
                    _shade_hit(ctx, hidx, e.code, color)
                    c0 = color[0]
                    c1 = color[1]
                    c2 = color[2]
                    acc = 1.0
                    any_hit = True
                    done = True
                    break
                a = ctx.mat_alpha[ctx.pool_mat[hidx]]
                _shade_hit(ctx, hidx, e.code, color)
                tcov = (1.0 - acc) * a
                c0 += tcov * color[0]
                c1 += tcov * color[1]
                c2 += tcov * color[2]
                acc += tcov
                any_hit = True
            if done:
                break
            if ctx.cutoff >= 0.0 and acc >= ctx.cutoff:
                ctx.early += 1
                break
            continue
        mask = ctx.pyramid[ctx.pyr_off[e.level] + e.code]
        if mask == 0:
            continue
        half = 0.5 / (1 << e.level)
        nc = 0
        for c in range(8):
            if not (mask >> c) & 1:
                continue
            chlo[3 * nc] = e.lox + (c & 1) * half
            chlo[3 * nc + 1] = e.loy + ((c >> 1) & 1) * half
            chlo[3 * nc + 2] = e.loz + ((c >> 2) & 1) * half
            if _slab(ox, oy, oz, dx, dy, dz,
                     chlo[3 * nc], chlo[3 * nc + 1], chlo[3 * nc + 2],
                     chlo[3 * nc] + half, chlo[3 * nc + 1] + half,
                     chlo[3 * nc + 2] + half, 0.0, INFINITY, &cte, &cext):
                chte[nc] = cte
                chtx[nc] = cext
                chc[nc] = c
                nc += 1
        for j in range(1, nc):
            cte = chte[j]; cext = chtx[j]; c = chc[j]
            m = 3 * j
            sx0 = chlo[m]; sy0 = chlo[m + 1]; sz0 = chlo[m + 2]
            m = j - 1
            while m >= 0 and (chte[m] > cte or (chte[m] == cte and chc[m] > c)):
                chte[m + 1] = chte[m]; chtx[m + 1] = chtx[m]; chc[m + 1] = chc[m]
                chlo[3 * m + 3] = chlo[3 * m]
                chlo[3 * m + 4] = chlo[3 * m + 1]
                chlo[3 * m + 5] = chlo[3 * m + 2]
                m -= 1
            chte[m + 1] = cte; chtx[m + 1] = cext; chc[m + 1] = c
            chlo[3 * m + 3] = sx0; chlo[3 * m + 4] = sy0; chlo[3 * m + 5] = sz0
        for j in range(nc - 1, -1, -1):
            stack[sp].level = e.level + 1
            stack[sp].code = e.code * 8 + chc[j]
            stack[sp].lox = chlo[3 * j]
            stack[sp].loy = chlo[3 * j + 1]
            stack[sp].loz = chlo[3 * j + 2]
            stack[sp].te = chte[j]
            stack[sp].tx = chtx[j]
            sp += 1

    if ctx.mode == 0:
        if any_hit:
            out4[0] = c0
            out4[1] = c1
            out4[2] = c2
            out4[3] = 1.0
        else:
            out4[0] = ctx.bg[0]
            out4[1] = ctx.bg[1]
            out4[2] = ctx.bg[2]
            out4[3] = ctx.bg[3]
        return
    out4[0] = c0 + (1.0 - acc) * ctx.bg[3] * ctx.bg[0]
    out4[1] = c1 + (1.0 - acc) * ctx.bg[3] * ctx.bg[1]
    out4[2] = c2 + (1.0 - acc) * ctx.bg[3] * ctx.bg[2]
    out4[3] = acc + (1.0 - acc) * ctx.bg[3]


def raycast_image(long long start_pix, long long end_pix,
                  double[:, ::1] origins, double[:, ::1] dirs,
                  int layout_kind, int levels,
                  cnp.int64_t[::1] arr_a, cnp.int64_t[::1] arr_b,
                  const unsigned char[::1] pyramid, cnp.int64_t[::1] pyr_off,
                  float[:, ::1] pool_pos, float[:, ::1] pool_nrm,
                  cnp.int64_t[::1] pool_mat, cnp.int64_t[::1] pool_obj,
                  double[:, ::1] mat_diffuse, double[:, ::1] mat_specular,
                  double[::1] mat_shininess, double[::1] mat_alpha,
                  const unsigned char[::1] light_kind, double[:, ::1] light_vec,
                  double[:, ::1] light_color, double[:, ::1] light_ambient,
                  double[::1] eye, double[::1] background,
                  double radius, double cutoff, int mode, double shadow_eps,
                  double[:, ::1] out_rgba, cnp.int32_t[::1] out_ids,
                  cnp.int64_t[::1] counters):
    """Evaluate primary rays [start_pix, end_pix); mirrors raycast_pixel."""
    if levels < 1 or levels > 24:
        raise ValueError("levels out of range")
    cdef Ctx ctx
    ctx.layout_kind = layout_kind
    ctx.levels = levels
    ctx.mode = mode
    ctx.n_lights = <int>light_kind.shape[0]
    ctx.arr_a = &arr_a[0]
    ctx.arr_b = &arr_b[0] if arr_b.shape[0] > 0 else NULL
    ctx.pyramid = <unsigned char*>&pyramid[0]
    ctx.pyr_off = &pyr_off[0]
    ctx.pool_pos = &pool_pos[0, 0] if pool_pos.shape[0] > 0 else NULL
    ctx.pool_nrm = &pool_nrm[0, 0] if pool_nrm.shape[0] > 0 else NULL
    ctx.pool_mat = &pool_mat[0] if pool_mat.shape[0] > 0 else NULL
    ctx.pool_obj = &pool_obj[0] if pool_obj.shape[0] > 0 else NULL
    ctx.mat_diffuse = &mat_diffuse[0, 0]
    ctx.mat_specular = &mat_specular[0, 0]
    ctx.mat_shininess = &mat_shininess[0]
    ctx.mat_alpha = &mat_alpha[0]
    ctx.light_kind = <unsigned char*>&light_kind[0] if ctx.n_lights > 0 else NULL
    ctx.light_vec = &light_vec[0, 0] if ctx.n_lights > 0 else NULL
    ctx.light_color = &light_color[0, 0] if ctx.n_lights > 0 else NULL
    ctx.light_ambient = &light_ambient[0, 0] if ctx.n_lights > 0 else NULL
    ctx.eye[0] = eye[0]
    ctx.eye[1] = eye[1]
    ctx.eye[2] = eye[2]
    ctx.bg[0] = background[0]
    ctx.bg[1] = background[1]
    ctx.bg[2] = background[2]
    ctx.bg[3] = background[3]
    ctx.radius = radius
    ctx.cutoff = cutoff
    ctx.shadow_eps = shadow_eps
    ctx.visited = 0
    ctx.tested = 0
    ctx.hits = 0
    ctx.early = 0
    ctx.primary.cap = 256
    ctx.primary.t = <double*>malloc(256 * sizeof(double))
    ctx.primary.i = <long long*>malloc(256 * sizeof(long long))
    ctx.shadow.cap = 256
    ctx.shadow.t = <double*>malloc(256 * sizeof(double))
    ctx.shadow.i = <long long*>malloc(256 * sizeof(long long))
    if (ctx.primary.t == NULL or ctx.primary.i == NULL
            or ctx.shadow.t == NULL or ctx.shadow.i == NULL):
        free(ctx.primary.t)
        free(ctx.primary.i)
        free(ctx.shadow.t)
        free(ctx.shadow.i)
        raise MemoryError()

    cdef bint collect = out_ids.shape[0] > 0
    cdef long long k
    cdef double out4[4]
    cdef long long first
    try:
        with nogil:
            for k in range(start_pix, end_pix):
                _ray_eval(&ctx, origins[k, 0], origins[k, 1], origins[k, 2],
                          dirs[k, 0], dirs[k, 1], dirs[k, 2], out4, &first)
                out_rgba[k, 0] = out4[0]
                out_rgba[k, 1] = out4[1]
                out_rgba[k, 2] = out4[2]
                out_rgba[k, 3] = out4[3]
                if collect and first >= 0:
                    out_ids[k] = <cnp.int32_t>first
    finally:
        free(ctx.primary.t)
        free(ctx.primary.i)
        free(ctx.shadow.t)
        free(ctx.shadow.i)
    counters[0] += ctx.visited
    counters[1] += ctx.tested
    counters[2] += ctx.hits
    counters[3] += ctx.early
