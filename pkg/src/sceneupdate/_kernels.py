"""Compiled inner loops for visibility queries."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _segment_blocked(ax, ay, az, dx, dy, dz, length, planes, nplanes, aabb, tol):
    # Cyrus-Beck clip of the segment a + t*d, t in [0, 1], against each convex prism.
    sx0 = min(ax, ax + dx)
    sx1 = max(ax, ax + dx)
    sy0 = min(ay, ay + dy)
    sy1 = max(ay, ay + dy)
    sz0 = min(az, az + dz)
    sz1 = max(az, az + dz)
    ttol = tol / length
    for p in range(planes.shape[0]):
        if (
            sx1 < aabb[p, 0]
            or sx0 > aabb[p, 3]
            or sy1 < aabb[p, 1]
            or sy0 > aabb[p, 4]
            or sz1 < aabb[p, 2]
            or sz0 > aabb[p, 5]
        ):
            continue
        t0 = 0.0
        t1 = 1.0
        empty = False
        for k in range(nplanes[p]):
            nx = planes[p, k, 0]
            ny = planes[p, k, 1]
            nz = planes[p, k, 2]
            num = planes[p, k, 3] - (nx * ax + ny * ay + nz * az)
            den = nx * dx + ny * dy + nz * dz
            if den == 0.0:
                if num < 0.0:
                    empty = True
                    break
                continue
            t = num / den
            if den < 0.0:
                if t > t0:
                    t0 = t
            else:
                if t < t1:
                    t1 = t
            if t0 > t1:
                empty = True
                break
        if empty:
            continue
        if t1 - t0 > ttol and t0 < 1.0 - ttol:
            return True
    return False


@njit(cache=True)
def visibility_kernel(
    vpos, vdir, vright, vup, tan_h, tan_v, far, pts, nrm, planes, nplanes, aabb, tol, out
):
    """Fill ``out[j, i]`` with the visibility of sample ``i`` from view ``j``."""
    n_views = vpos.shape[0]
    n_pts = pts.shape[0]
    for j in range(n_views):
        ax = vpos[j, 0]
        ay = vpos[j, 1]
        az = vpos[j, 2]
        fx = vdir[j, 0]
        fy = vdir[j, 1]
        fz = vdir[j, 2]
        rx = vright[j, 0]
        ry = vright[j, 1]
        rz = vright[j, 2]
        ux = vup[j, 0]
        uy = vup[j, 1]
        uz = vup[j, 2]
        for i in range(n_pts):
            dx = pts[i, 0] - ax
            dy = pts[i, 1] - ay
            dz = pts[i, 2] - az
            # back-face: the surface normal must point toward the camera
            if nrm[i, 0] * dx + nrm[i, 1] * dy + nrm[i, 2] * dz >= 0.0:
                out[j, i] = False
                continue
            depth = dx * fx + dy * fy + dz * fz
            if depth <= 0.0:
                out[j, i] = False
                continue
            dist = math.sqrt(dx * dx + dy * dy + dz * dz)
            if dist > far[j]:
                out[j, i] = False
                continue
            if abs(dx * rx + dy * ry + dz * rz) > depth * tan_h[j]:
                out[j, i] = False
                continue
            if abs(dx * ux + dy * uy + dz * uz) > depth * tan_v[j]:
                out[j, i] = False
                continue
            out[j, i] = not _segment_blocked(
                ax, ay, az, dx, dy, dz, dist, planes, nplanes, aabb, tol
            )



@njit(cache=True)
def greedy_reduce_kernel(r_ptr, r_idx, c_ptr, c_idx, w, counts, ids, tau):
    """Greedy least-importance removal under a full-coverage constraint.

    ``r_*`` is the CSR (view -> samples) and ``c_*`` the CSC (sample -> views)
    structure of the visibility matrix. Returns ``(alive, event_kind,
    event_view)`` where kind is 0 removed, 1 reverted, 2 stopped.
    """
    n_views = r_ptr.shape[0] - 1
    c = counts.copy()
    g = np.zeros(n_views)
    for v in range(n_views):
        s = 0.0
        for k in range(r_ptr[v], r_ptr[v + 1]):
            i = r_idx[k]
            s += w[i] / c[i]
        g[v] = s
    alive = np.ones(n_views, dtype=np.bool_)
    locked = np.zeros(n_views, dtype=np.bool_)
    total = 0.0
    for v in range(n_views):
        total += g[v]
    start_total = total
    kinds = np.empty(2 * n_views + 1, dtype=np.int64)
    who = np.empty(2 * n_views + 1, dtype=np.int64)
    n_ev = 0
    while True:
        j = -1
        for v in range(n_views):
            if alive[v] and not locked[v]:
                if j < 0 or g[v] < g[j] or (g[v] == g[j] and ids[v] < ids[j]):
                    j = v
        if j < 0:
            break
        sole = False
        for k in range(r_ptr[j], r_ptr[j + 1]):
            if c[r_idx[k]] == 1:
                sole = True
                break
        if sole:
            locked[j] = True
            kinds[n_ev] = 1
            who[n_ev] = j
            n_ev += 1
            continue
        new_total = total - g[j]
        for k in range(r_ptr[j], r_ptr[j + 1]):
            i = r_idx[k]
            delta = w[i] / (c[i] - 1) - w[i] / c[i]
            new_total += delta * (c[i] - 1)
        if new_total < (1.0 - tau) * start_total:
            kinds[n_ev] = 2
            who[n_ev] = j
            n_ev += 1
            break
        for k in range(r_ptr[j], r_ptr[j + 1]):
            i = r_idx[k]
            delta = w[i] / (c[i] - 1) - w[i] / c[i]
            for m in range(c_ptr[i], c_ptr[i + 1]):
                g[c_idx[m]] += delta
            c[i] -= 1
        alive[j] = False
        total = new_total
        kinds[n_ev] = 0
        who[n_ev] = j
        n_ev += 1
    return alive, kinds[:n_ev], who[:n_ev]


@njit(cache=True)
def _pd_inside(x, z, poly):
    n = poly.shape[0]
    for i in range(n):
        ax = poly[i, 0]
        az = poly[i, 1]
        ex = poly[(i + 1) % n, 0] - ax
        ez = poly[(i + 1) % n, 1] - az
        if ex * (z - az) - ez * (x - ax) < 0.0:
            return False
    return True


@njit(cache=True)
def _pd_fits(x, z, pts, grid, lo0, lo1, cell, r2):
    nx = grid.shape[0]
    nz = grid.shape[1]
    cx = int((x - lo0) // cell)
    cz = int((z - lo1) // cell)
    for i in range(max(cx - 2, 0), min(cx + 3, nx)):
        for j in range(max(cz - 2, 0), min(cz + 3, nz)):
            idx = grid[i, j]
            if idx >= 0:
                if (pts[idx, 0] - x) ** 2 + (pts[idx, 1] - z) ** 2 < r2:
                    return False
    return True


@njit(cache=True)
def poisson_kernel(poly, start, lo0, lo1, hi0, hi1, radius, k, seed, probes):
    """Bridson dart throwing from ``start``, then a greedy fill over ``probes``."""
    np.random.seed(seed)
    cell = radius / math.sqrt(2.0)
    nx = max(1, int(math.ceil((hi0 - lo0) / cell))) + 1
    nz = max(1, int(math.ceil((hi1 - lo1) / cell))) + 1
    grid = -np.ones((nx, nz), dtype=np.int64)
    cap = nx * nz + 1
    pts = np.empty((cap, 2))
    active = np.empty(cap, dtype=np.int64)
    r2 = radius * radius
    n = 0
    pts[0, 0] = start[0]
    pts[0, 1] = start[1]
    grid[int((start[0] - lo0) // cell), int((start[1] - lo1) // cell)] = 0
    n = 1
    active[0] = 0
    na = 1
    while na > 0:
        a = np.random.randint(0, na)
        bx = pts[active[a], 0]
        bz = pts[active[a], 1]
        placed = False
        for _ in range(k):
            th = np.random.uniform(0.0, 2.0 * math.pi)
            rr = radius * math.sqrt(np.random.uniform(1.0, 4.0))
            x = bx + rr * math.cos(th)
            z = bz + rr * math.sin(th)
            if x < lo0 or x > hi0 or z < lo1 or z > hi1:
                continue
            if not _pd_inside(x, z, poly):
                continue
            if _pd_fits(x, z, pts, grid, lo0, lo1, cell, r2):
                pts[n, 0] = x
                pts[n, 1] = z
                grid[int((x - lo0) // cell), int((z - lo1) // cell)] = n
                active[na] = n
                na += 1
                n += 1
                placed = True
                break
        if not placed:
            active[a] = active[na - 1]
            na -= 1
    for i in range(probes.shape[0]):
        x = probes[i, 0]
        z = probes[i, 1]
        if _pd_fits(x, z, pts, grid, lo0, lo1, cell, r2):
            pts[n, 0] = x
            pts[n, 1] = z
            grid[int((x - lo0) // cell), int((z - lo1) // cell)] = n
            n += 1
    return pts[:n].copy()
