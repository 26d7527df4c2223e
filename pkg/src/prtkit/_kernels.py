"""Numba kernels: ray/triangle tests, BVH traversal, G-buffer and bake loops.

Everything here is deterministic and pixel-parallel: each output pixel is
produced by an independent computation seeded from (global seed, x, y), so
results are byte-identical for any worker count.
"""

import math

import numba
import numpy as np
from numba import njit, prange

# Skip the TBB probe (the bundled TBB is too old and only emits warnings);
# results are per-pixel independent and identical under any layer.
numba.config.THREADING_LAYER = "workqueue"

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX_A = U64(0xBF58476D1CE4E5B9)
_MIX_B = U64(0x94D049BB133111EB)
_XMUL = U64(0x9E3779B97F4A7C15)
_YMUL = U64(0xC2B2AE3D27D4EB4F)
_INV_2P53 = 1.0 / 9007199254740992.0

# SH polynomial constants, duplicated from sh.py for nopython use.
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2A = 1.0925484305920792
_C2B = 0.31539156525252005
_C2C = 0.5462742152960396


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX_A
    z = (z ^ (z >> U64(27))) * _MIX_B
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _pixel_seed(seed, x, y):
    h = _mix64(seed ^ (U64(x) * _XMUL))
    return _mix64(h ^ (U64(y) * _YMUL))


@njit(cache=True, inline="always")
def _rand_at(state, k):
    """k-th uniform in [0,1) of a counter-based stream rooted at state."""
    z = _mix64(state + U64(k) * _GOLDEN)
    return (z >> U64(11)) * _INV_2P53


@njit(cache=True, inline="always")
def _safe_inv(d):
    if d > 1e-12 or d < -1e-12:
        return 1.0 / d
    return 1e12 if d >= 0.0 else -1e12


@njit(cache=True, inline="always")
def _box_hit(ox, oy, oz, ix, iy, iz, tmax, bmin, bmax, n):
    t1 = (bmin[n, 0] - ox) * ix
    t2 = (bmax[n, 0] - ox) * ix
    tlo = min(t1, t2)
    thi = max(t1, t2)
    t1 = (bmin[n, 1] - oy) * iy
    t2 = (bmax[n, 1] - oy) * iy
    tlo = max(tlo, min(t1, t2))
    thi = min(thi, max(t1, t2))
    t1 = (bmin[n, 2] - oz) * iz
    t2 = (bmax[n, 2] - oz) * iz
    tlo = max(tlo, min(t1, t2))
    thi = min(thi, max(t1, t2))
    return thi >= max(tlo, 0.0) and tlo <= tmax


@njit(cache=True, inline="always")
def _tri_t(ox, oy, oz, dx, dy, dz, p0, p1, p2, i):
    """Moller-Trumbore; returns (t, bu, bv) with t < 0 on miss."""
    e1x = p1[i, 0] - p0[i, 0]
    e1y = p1[i, 1] - p0[i, 1]
    e1z = p1[i, 2] - p0[i, 2]
    e2x = p2[i, 0] - p0[i, 0]
    e2y = p2[i, 1] - p0[i, 1]
    e2z = p2[i, 2] - p0[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-12 < det < 1e-12:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - p0[i, 0]
    ty = oy - p0[i, 1]
    tz = oz - p0[i, 2]
    bu = (tx * px + ty * py + tz * pz) * inv
    if bu < 0.0 or bu > 1.0:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    bv = (dx * qx + dy * qy + dz * qz) * inv
    if bv < 0.0 or bu + bv > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, bu, bv


@njit(cache=True)
def bvh_any_hit(ox, oy, oz, dx, dy, dz, tmin, tmax,
                bmin, bmax, child, start, count, p0, p1, p2):
    ix = _safe_inv(dx)
    iy = _safe_inv(dy)
    iz = _safe_inv(dz)
    stack = np.empty(128, np.int32)
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if not _box_hit(ox, oy, oz, ix, iy, iz, tmax, bmin, bmax, n):
            continue
        if child[n, 0] < 0:
            s = start[n]
            for i in range(s, s + count[n]):
                t, _, _ = _tri_t(ox, oy, oz, dx, dy, dz, p0, p1, p2, i)
                if tmin < t < tmax:
                    return True
        else:
            stack[sp] = child[n, 0]
            stack[sp + 1] = child[n, 1]
            sp += 2
    return False


@njit(cache=True)
def bvh_nearest_hit(ox, oy, oz, dx, dy, dz, tmin,
                    bmin, bmax, child, start, count, p0, p1, p2):
    """Returns (t, element, bu, bv); element is -1 on miss."""
    ix = _safe_inv(dx)
    iy = _safe_inv(dy)
    iz = _safe_inv(dz)
    best_t = 1e300
    best_e = -1
    best_u = 0.0
    best_v = 0.0
    stack = np.empty(128, np.int32)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if not _box_hit(ox, oy, oz, ix, iy, iz, best_t, bmin, bmax, n):
            continue
        if child[n, 0] < 0:
            s = start[n]
            for i in range(s, s + count[n]):
                t, bu, bv = _tri_t(ox, oy, oz, dx, dy, dz, p0, p1, p2, i)
                if tmin < t < best_t:
                    best_t = t
                    best_e = i
                    best_u = bu
                    best_v = bv
        else:
            stack[sp] = child[n, 0]
            stack[sp + 1] = child[n, 1]
            sp += 2
    return best_t, best_e, best_u, best_v


@njit(cache=True, parallel=True)
def raster_kernel(width, height, cx, cy, scale, z0,
                  bmin, bmax, child, start, count, p0, p1, p2, elem_tri,
                  corner_n, corner_col, corner_uv, tex, has_tex,
                  out_mask, out_normal, out_albedo, out_pos):
    """One orthographic primary ray per pixel center, looking along -z."""
    for p in prange(height * width):
        py = p // width
        px = p % width
        wx = cx + (px + 0.5 - width * 0.5) / scale
        wy = cy + (height * 0.5 - (py + 0.5)) / scale
        t, e, bu, bv = bvh_nearest_hit(wx, wy, z0, 0.0, 0.0, -1.0, 0.0,
                                       bmin, bmax, child, start, count, p0, p1, p2)
        if e < 0:
            continue
        tri = elem_tri[e]
        w0 = 1.0 - bu - bv
        nx = w0 * corner_n[tri, 0, 0] + bu * corner_n[tri, 1, 0] + bv * corner_n[tri, 2, 0]
        ny = w0 * corner_n[tri, 0, 1] + bu * corner_n[tri, 1, 1] + bv * corner_n[tri, 2, 1]
        nz = w0 * corner_n[tri, 0, 2] + bu * corner_n[tri, 1, 2] + bv * corner_n[tri, 2, 2]
        norm = math.sqrt(nx * nx + ny * ny + nz * nz)
        if norm < 1e-12:
            e0x = p1[e, 0] - p0[e, 0]
            e0y = p1[e, 1] - p0[e, 1]
            e0z = p1[e, 2] - p0[e, 2]
            e1x = p2[e, 0] - p0[e, 0]
            e1y = p2[e, 1] - p0[e, 1]
            e1z = p2[e, 2] - p0[e, 2]
            nx = e0y * e1z - e0z * e1y
            ny = e0z * e1x - e0x * e1z
            nz = e0x * e1y - e0y * e1x
            norm = math.sqrt(nx * nx + ny * ny + nz * nz)
            if norm < 1e-300:
                norm = 1.0
        out_mask[py, px] = 1.0
        out_normal[py, px, 0] = nx / norm
        out_normal[py, px, 1] = ny / norm
        out_normal[py, px, 2] = nz / norm
        out_pos[py, px, 0] = wx
        out_pos[py, px, 1] = wy
        out_pos[py, px, 2] = z0 - t
        if has_tex:
            u = w0 * corner_uv[tri, 0, 0] + bu * corner_uv[tri, 1, 0] + bv * corner_uv[tri, 2, 0]
            v = w0 * corner_uv[tri, 0, 1] + bu * corner_uv[tri, 1, 1] + bv * corner_uv[tri, 2, 1]
            r, g, b = _tex_bilinear(tex, u, v)
            out_albedo[py, px, 0] = r
            out_albedo[py, px, 1] = g
            out_albedo[py, px, 2] = b
        else:
            for c in range(3):
                out_albedo[py, px, c] = (w0 * corner_col[tri, 0, c]
                                         + bu * corner_col[tri, 1, c]
                                         + bv * corner_col[tri, 2, c])


@njit(cache=True, inline="always")
def _tex_bilinear(tex, u, v):
    """Bilinear texture sample; OBJ v axis points up, rows are top-down."""
    th, tw = tex.shape[0], tex.shape[1]
    fx = min(max(u * tw - 0.5, 0.0), tw - 1.0)
    fy = min(max((1.0 - v) * th - 0.5, 0.0), th - 1.0)
    x0 = int(math.floor(fx))
    y0 = int(math.floor(fy))
    ax = fx - x0
    ay = fy - y0
    x1 = min(x0 + 1, tw - 1)
    y1 = min(y0 + 1, th - 1)
    r = ((1 - ax) * (1 - ay) * tex[y0, x0, 0] + ax * (1 - ay) * tex[y0, x1, 0]
         + (1 - ax) * ay * tex[y1, x0, 0] + ax * ay * tex[y1, x1, 0])
    g = ((1 - ax) * (1 - ay) * tex[y0, x0, 1] + ax * (1 - ay) * tex[y0, x1, 1]
         + (1 - ax) * ay * tex[y1, x0, 1] + ax * ay * tex[y1, x1, 1])
    b = ((1 - ax) * (1 - ay) * tex[y0, x0, 2] + ax * (1 - ay) * tex[y0, x1, 2]
         + (1 - ax) * ay * tex[y1, x0, 2] + ax * ay * tex[y1, x1, 2])
    return r, g, b


@njit(cache=True, parallel=True)
def bake_kernel(pos, nrm, msk, spp, seed, eps,
                bmin, bmax, child, start, count, p0, p1, p2,
                out_t, out_ao):
    """Joint transport + AO bake over one stratified sample set per pixel.

    T_i = (4 pi / N) sum_k V cos+ Y_i(w_k), AO = (4 / N) sum_k V cos+.
    Both derive from the same double-precision sums, so the band-0 identity
    dot(T, constant light) = pi * AO holds to float32 rounding.
    """
    height, width = msk.shape
    a = int(math.sqrt(spp))
    while spp % a != 0:
        a -= 1
    b = spp // a
    for p in prange(height * width):
        py = p // width
        px = p % width
        if msk[py, px] == 0.0:
            continue
        nx = float(nrm[py, px, 0])
        ny = float(nrm[py, px, 1])
        nz = float(nrm[py, px, 2])
        ox = float(pos[py, px, 0]) + eps * nx
        oy = float(pos[py, px, 1]) + eps * ny
        oz = float(pos[py, px, 2]) + eps * nz
        st = _pixel_seed(seed, px, py)
        t1 = 0.0
        t2 = 0.0
        t3 = 0.0
        t4 = 0.0
        t5 = 0.0
        t6 = 0.0
        t7 = 0.0
        t8 = 0.0
        s_ao = 0.0
        for s in range(spp):
            u = (s // b + _rand_at(st, U64(2 * s))) / a
            v = (s % b + _rand_at(st, U64(2 * s + 1))) / b
            z = 1.0 - 2.0 * u
            r = math.sqrt(max(0.0, 1.0 - z * z))
            phi = 2.0 * math.pi * v
            dx = r * math.cos(phi)
            dy = r * math.sin(phi)
            dz = z
            cosw = nx * dx + ny * dy + nz * dz
            if cosw <= 0.0:
                continue
            if bvh_any_hit(ox, oy, oz, dx, dy, dz, 1e-12, 1e300,
                           bmin, bmax, child, start, count, p0, p1, p2):
                continue
            t1 += cosw * _C1 * dy
            t2 += cosw * _C1 * dz
            t3 += cosw * _C1 * dx
            t4 += cosw * _C2A * dx * dy
            t5 += cosw * _C2A * dy * dz
            t6 += cosw * _C2B * (3.0 * dz * dz - 1.0)
            t7 += cosw * _C2A * dx * dz
            t8 += cosw * _C2C * (dx * dx - dy * dy)
            s_ao += cosw
        # Y_0 is constant, so the band-0 sum IS the AO sum (times C0).
        # Clamp the shared sum once so AO <= 1 and the band-0 identity
        # dot(T, constant light) == pi * AO both hold exactly.
        s_ao = min(s_ao, 0.25 * spp)
        w = 4.0 * math.pi / spp
        out_t[py, px, 0] = s_ao * _C0 * w
        out_t[py, px, 1] = t1 * w
        out_t[py, px, 2] = t2 * w
        out_t[py, px, 3] = t3 * w
        out_t[py, px, 4] = t4 * w
        out_t[py, px, 5] = t5 * w
        out_t[py, px, 6] = t6 * w
        out_t[py, px, 7] = t7 * w
        out_t[py, px, 8] = t8 * w
        out_ao[py, px] = s_ao * 4.0 / spp


@njit(cache=True, inline="always")
def _env_bilinear(env, dx, dy, dz):
    """Equirectangular lookup matching the projection convention:
    theta from +y, image center column at +z, rows top-down."""
    eh, ew = env.shape[0], env.shape[1]
    theta = math.acos(min(1.0, max(-1.0, dy)))
    phi = math.atan2(dx, -dz)
    if phi < 0.0:
        phi += 2.0 * math.pi
    fx = phi / (2.0 * math.pi) * ew - 0.5
    fy = min(max(theta / math.pi * eh - 0.5, 0.0), eh - 1.0)
    x0 = int(math.floor(fx))
    y0 = int(math.floor(fy))
    ax = fx - x0
    ay = fy - y0
    y1 = min(y0 + 1, eh - 1)
    x0 = x0 % ew
    x1 = (x0 + 1) % ew
    r = ((1 - ax) * (1 - ay) * env[y0, x0, 0] + ax * (1 - ay) * env[y0, x1, 0]
         + (1 - ax) * ay * env[y1, x0, 0] + ax * ay * env[y1, x1, 0])
    g = ((1 - ax) * (1 - ay) * env[y0, x0, 1] + ax * (1 - ay) * env[y0, x1, 1]
         + (1 - ax) * ay * env[y1, x0, 1] + ax * ay * env[y1, x1, 1])
    b = ((1 - ax) * (1 - ay) * env[y0, x0, 2] + ax * (1 - ay) * env[y0, x1, 2]
         + (1 - ax) * ay * env[y1, x0, 2] + ax * ay * env[y1, x1, 2])
    return r, g, b


@njit(cache=True, parallel=True)
def reference_kernel(pos, nrm, msk, env, spp, seed, eps,
                     bmin, bmax, child, start, count, p0, p1, p2,
                     out_rgb):
    """Shadowed Monte Carlo irradiance against the full environment map.

    E_c = (4 pi / N) sum_k V cos+ L_c(w_k); no SH truncation anywhere.
    """
    height, width = msk.shape
    a = int(math.sqrt(spp))
    while spp % a != 0:
        a -= 1
    b = spp // a
    for p in prange(height * width):
        py = p // width
        px = p % width
        if msk[py, px] == 0.0:
            continue
        nx = float(nrm[py, px, 0])
        ny = float(nrm[py, px, 1])
        nz = float(nrm[py, px, 2])
        ox = float(pos[py, px, 0]) + eps * nx
        oy = float(pos[py, px, 1]) + eps * ny
        oz = float(pos[py, px, 2]) + eps * nz
        st = _pixel_seed(seed, px, py)
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        for s in range(spp):
            u = (s // b + _rand_at(st, U64(2 * s))) / a
            v = (s % b + _rand_at(st, U64(2 * s + 1))) / b
            z = 1.0 - 2.0 * u
            r = math.sqrt(max(0.0, 1.0 - z * z))
            phi = 2.0 * math.pi * v
            dx = r * math.cos(phi)
            dy = r * math.sin(phi)
            dz = z
            cosw = nx * dx + ny * dy + nz * dz
            if cosw <= 0.0:
                continue
            if bvh_any_hit(ox, oy, oz, dx, dy, dz, 1e-12, 1e300,
                           bmin, bmax, child, start, count, p0, p1, p2):
                continue
            lr, lg, lb = _env_bilinear(env, dx, dy, dz)
            acc_r += cosw * lr
            acc_g += cosw * lg
            acc_b += cosw * lb
        w = 4.0 * math.pi / spp
        out_rgb[py, px, 0] = acc_r * w
        out_rgb[py, px, 1] = acc_g * w
        out_rgb[py, px, 2] = acc_b * w
