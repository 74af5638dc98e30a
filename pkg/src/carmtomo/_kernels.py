"""Compiled inner loops for the ray-driven and pixel-driven projectors.

Output ownership is exclusive per parallel task (one ray row for forward
projection, one fixed-width x-slab of voxels for backprojection, one x-plane of voxels
for pixel-driven backprojection), and every task sums in a fixed order, so
results do not depend on the thread count.
"""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True)
def trace(sx, sy, sz, ex, ey, ez, lox, loy, loz, s, nx, ny, nz, ix0, ix1, tol, idx, w):
    """Siddon traversal of segment (s -> e) through voxels ``ix0 <= ix < ix1``.

    Writes flat voxel indices and intersection lengths (mm) into ``idx``/``w``
    and returns the number of entries. ``tol`` is in mm; crossings closer
    than that are merged.
    """
    dx = ex - sx
    dy = ey - sy
    dz = ez - sz
    length = math.sqrt(dx * dx + dy * dy + dz * dz)
    if length == 0.0:
        return 0
    tol_t = tol / length
    hix = lox + ix1 * s
    xlo = lox + ix0 * s
    hiy = loy + ny * s
    hiz = loz + nz * s

    t0 = 0.0
    t1 = 1.0
    if dx == 0.0:
        if sx < xlo or sx >= hix:
            return 0
    else:
        ta = (xlo - sx) / dx
        tb = (hix - sx) / dx
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if dy == 0.0:
        if sy < loy or sy >= hiy:
            return 0
    else:
        ta = (loy - sy) / dy
        tb = (hiy - sy) / dy
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if dz == 0.0:
        if sz < loz or sz >= hiz:
            return 0
    else:
        ta = (loz - sz) / dz
        tb = (hiz - sz) / dz
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t1 - t0 <= tol_t:
        return 0

    # entry voxel
    ix = int(math.floor((sx + t0 * dx - lox) / s))
    iy = int(math.floor((sy + t0 * dy - loy) / s))
    iz = int(math.floor((sz + t0 * dz - loz) / s))
    ix = min(max(ix, ix0), ix1 - 1)
    iy = min(max(iy, 0), ny - 1)
    iz = min(max(iz, 0), nz - 1)

    stepx = 1 if dx > 0 else -1
    stepy = 1 if dy > 0 else -1
    stepz = 1 if dz > 0 else -1
    inf = np.inf

    count = 0
    t = t0
    while True:
        if dx != 0.0:
            tx = (lox + (ix + (1 if dx > 0 else 0)) * s - sx) / dx
        else:
            tx = inf
        if dy != 0.0:
            ty = (loy + (iy + (1 if dy > 0 else 0)) * s - sy) / dy
        else:
            ty = inf
        if dz != 0.0:
            tz = (loz + (iz + (1 if dz > 0 else 0)) * s - sz) / dz
        else:
            tz = inf
        tn = min(tx, ty, tz, t1)
        if tn > t:
            idx[count] = (ix * ny + iy) * nz + iz
            w[count] = (tn - t) * length
            count += 1
            t = tn
        if tn >= t1 - tol_t:
            break
        lim = tn + tol_t
        if tx <= lim:
            ix += stepx
        if ty <= lim:
            iy += stepy
        if tz <= lim:
            iz += stepz
        if ix < ix0 or ix >= ix1 or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            break
    # crossings merged within tol can leave a sliver at the exit face
    if count > 0 and t < t1:
        w[count - 1] += (t1 - t) * length
    return count


@njit(cache=True, parallel=True)
def rdm_forward(vol, hits, lo, s, shape, src, dst, tol, out, raylen):
    """``out[k, r, c] = sum_j w_ij vol[j]`` and ``raylen = sum_j w_ij``.

    Rays with ``hits`` false are left untouched.
    """
    nv_views, nrow, ncol = out.shape
    nx, ny, nz = shape[0], shape[1], shape[2]
    nbuf = nx + ny + nz + 4
    for task in prange(nv_views * nrow):
        k = task // nrow
        r = task % nrow
        idx = np.empty(nbuf, dtype=np.int64)
        w = np.empty(nbuf)
        for c in range(ncol):
            if not hits[k, r, c]:
                continue
            n = trace(src[k, 0], src[k, 1], src[k, 2],
                      dst[k, r, c, 0], dst[k, r, c, 1], dst[k, r, c, 2],
                      lo[0], lo[1], lo[2], s, nx, ny, nz, 0, nx, tol, idx, w)
            acc = 0.0
            tot = 0.0
            for m in range(n):
                acc += w[m] * vol[idx[m]]
                tot += w[m]
            out[k, r, c] = acc
            raylen[k, r, c] = tot


@njit(cache=True)
def ray_hits(lo, hi, src, dst, out):
    """Flag rays whose segment meets the grid box (cheap prefilter)."""
    nk, nrow, ncol = out.shape
    for k in range(nk):
        for r in range(nrow):
            for c in range(ncol):
                t0 = 0.0
                t1 = 1.0
                hit = True
                for a in range(3):
                    p = src[k, a]
                    dd = dst[k, r, c, a] - p
                    if dd == 0.0:
                        if p < lo[a] or p > hi[a]:
                            hit = False
                    else:
                        ta = (lo[a] - p) / dd
                        tb = (hi[a] - p) / dd
                        if ta > tb:
                            ta, tb = tb, ta
                        t0 = max(t0, ta)
                        t1 = min(t1, tb)
                out[k, r, c] = hit and t1 > t0


SLAB = 16  # x-planes per backprojection task; fixed so results ignore thread count


@njit(cache=True, parallel=True)
def rdm_back(values, rays, lo, s, shape, src, dst, tol, out, wsum):
    """Accumulate ``out[c, j] += w_ij values[c, i]`` and ``wsum[j] += w_ij``.

    ``values`` carries a leading channel axis so several backprojections share
    one traversal. ``rays`` lists flat ray indices (view, row, col) in order.
    Parallel over fixed x-slabs: each task re-traces every ray clipped to its
    own slab, so each voxel has a single writer.
    """
    nch, nk, nrow, ncol = values.shape
    nx, ny, nz = shape[0], shape[1], shape[2]
    nbuf = SLAB + ny + nz + 6
    nslab = (nx + SLAB - 1) // SLAB
    for b in prange(nslab):
        ix0 = b * SLAB
        ix1 = min(ix0 + SLAB, nx)
        idx = np.empty(nbuf, dtype=np.int64)
        w = np.empty(nbuf)
        for q in range(rays.shape[0]):
            ray = rays[q]
            k = ray // (nrow * ncol)
            rem = ray % (nrow * ncol)
            r = rem // ncol
            c = rem % ncol
            n = trace(src[k, 0], src[k, 1], src[k, 2],
                      dst[k, r, c, 0], dst[k, r, c, 1], dst[k, r, c, 2],
                      lo[0], lo[1], lo[2], s, nx, ny, nz, ix0, ix1, tol, idx, w)
            for m in range(n):
                j = idx[m]
                wsum[j] += w[m]
                for ch in range(nch):
                    out[ch, j] += w[m] * values[ch, k, r, c]


@njit(cache=True, parallel=True)
def pdm_back(values, cosb, sinb, d, pitch, origin, s, shape, out, count):
    """Voxel-driven backprojection with bilinear detector interpolation.

    ``out`` gets the sum of interpolated samples, ``count`` the number of
    views in which the voxel center projected inside the detector.
    """
    nk, nv, nu = values.shape
    nx, ny, nz = shape[0], shape[1], shape[2]
    cu = (nu - 1) / 2.0
    cv = (nv - 1) / 2.0
    for ix in prange(nx):
        x = origin[0] + ix * s
        for iy in range(ny):
            y = origin[1] + iy * s
            for iz in range(nz):
                z = origin[2] + iz * s
                acc = 0.0
                cnt = 0
                for k in range(nk):
                    c = cosb[k]
                    sn = sinb[k]
                    # relative to source (d c, -d s, 0); normal (c, -s, 0); u axis (s, c, 0)
                    rx = x - d * c
                    ry = y + d * sn
                    denom = rx * c - ry * sn
                    if denom >= -1e-12 * d:
                        continue
                    t = -2.0 * d / denom
                    u = (rx * sn + ry * c) * t
                    v = z * t
                    fu = u / pitch + cu
                    fv = v / pitch + cv
                    if fu < 0.0 or fu > nu - 1 or fv < 0.0 or fv > nv - 1:
                        continue
                    iu = min(int(math.floor(fu)), nu - 2)
                    iv = min(int(math.floor(fv)), nv - 2)
                    au = fu - iu
                    av = fv - iv
                    acc += ((1.0 - av) * ((1.0 - au) * values[k, iv, iu] + au * values[k, iv, iu + 1])
                            + av * ((1.0 - au) * values[k, iv + 1, iu] + au * values[k, iv + 1, iu + 1]))
                    cnt += 1
                out[ix, iy, iz] = acc
                count[ix, iy, iz] = cnt
