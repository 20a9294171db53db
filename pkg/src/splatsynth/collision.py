"""Convex-polytope queries: GJK distance and exact penetration depth.

Shapes are given by their (world-frame) vertex arrays; the support mapping is
a max over vertices, so any convex hull works without face data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numpy.typing import NDArray
from scipy.spatial import ConvexHull, QhullError

GJK_MAX_ITER = 64
GJK_REL_TOL = 1e-12


@dataclass(frozen=True)
class GjkResult:
    distance: float
    point_a: NDArray[np.float64]
    point_b: NDArray[np.float64]
    intersecting: bool


@numba.njit(cache=True)
def _solve_small(m, rhs, k):
    """Solve the k x k system (k <= 3) by Cramer's rule; returns ok flag."""
    out = np.zeros(3)
    if k == 1:
        if m[0, 0] == 0.0:
            return False, out
        out[0] = rhs[0] / m[0, 0]
        return True, out
    if k == 2:
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        scale = abs(m[0, 0] * m[1, 1]) + abs(m[0, 1] * m[1, 0])
        if scale == 0.0 or abs(det) <= 1e-14 * scale:
            return False, out
        out[0] = (rhs[0] * m[1, 1] - m[0, 1] * rhs[1]) / det
        out[1] = (m[0, 0] * rhs[1] - rhs[0] * m[1, 0]) / det
        return True, out
    det = np.linalg.det(m[:3, :3])
    scale = 0.0
    for i in range(3):
        for j in range(3):
            scale = max(scale, abs(m[i, j]))
    if scale == 0.0 or abs(det) <= 1e-14 * scale**3:
        return False, out
    for c in range(3):
        mc = m[:3, :3].copy()
        mc[:, c] = rhs[:3]
        out[c] = np.linalg.det(mc) / det
    return True, out


@numba.njit(cache=True)
def _closest_on_simplex(w, n):
    """Closest point of conv(w[:n]) to the origin by exhaustive sub-simplex search.

    Sub-simplices are tried from the smallest up; a candidate is accepted when
    its affine minimiser has positive weights and every excluded vertex lies on
    the far side of the candidate point.
    """
    best_lam = np.zeros(4)
    best_p = np.zeros(3)
    found = False
    best_d = np.inf
    for size in range(1, n + 1):
        for mask in range(1, 1 << n):
            cnt = 0
            idx = np.empty(4, dtype=np.int64)
            for k in range(n):
                if mask & (1 << k):
                    idx[cnt] = k
                    cnt += 1
            if cnt != size:
                continue
            lam = np.zeros(4)
            if size == 1:
                lam[idx[0]] = 1.0
            else:
                e = np.empty((3, 3))
                for c in range(size - 1):
                    e[c] = w[idx[c + 1]] - w[idx[0]]
                g = np.zeros((3, 3))
                rhs = np.zeros(3)
                for r in range(size - 1):
                    rhs[r] = -np.dot(e[r], w[idx[0]])
                    for c in range(size - 1):
                        g[r, c] = np.dot(e[r], e[c])
                ok, t = _solve_small(g, rhs, size - 1)
                if not ok:
                    continue
                tsum = 0.0
                pos = True
                for c in range(size - 1):
                    tsum += t[c]
                    if t[c] <= 0.0:
                        pos = False
                if not pos or 1.0 - tsum <= 0.0:
                    continue
                lam[idx[0]] = 1.0 - tsum
                for c in range(size - 1):
                    lam[idx[c + 1]] = t[c]
            p = np.zeros(3)
            for k in range(n):
                p += lam[k] * w[k]
            pp = np.dot(p, p)
            good = True
            for k in range(n):
                if not (mask & (1 << k)):
                    wk = w[k] - p
                    if np.dot(p, wk) < -1e-15 * max(pp, 1e-300):
                        good = False
            if good and pp < best_d:
                best_d = pp
                best_lam = lam
                best_p = p
                found = True
        if found:
            return best_lam, best_p
    # degenerate simplex: nearest vertex
    k = 0
    for j in range(1, n):
        if (w[j] ** 2).sum() < (w[k] ** 2).sum():
            k = j
    lam = np.zeros(4)
    lam[k] = 1.0
    return lam, w[k].copy()


@numba.njit(cache=True)
def _gjk(a, b, max_iter, rel_tol):
    sa = np.zeros(4, dtype=np.int64)
    sb = np.zeros(4, dtype=np.int64)
    w = np.zeros((4, 3))
    n = 1
    w[0] = a[0] - b[0]
    v = w[0].copy()
    lam = np.zeros(4)
    lam[0] = 1.0
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    for _ in range(max_iter):
        vv = np.dot(v, v)
        if vv <= (1e-14 * scale) ** 2:
            return 0.0, lam, sa, sb, n, True
        ia = np.argmax(a @ -v)
        ib = np.argmax(b @ v)
        wn = a[ia] - b[ib]
        dup = False
        for k in range(n):
            if sa[k] == ia and sb[k] == ib:
                dup = True
        if vv - np.dot(v, wn) <= rel_tol * vv or dup:
            break
        sa[n] = ia
        sb[n] = ib
        w[n] = wn
        n += 1
        lam, v = _closest_on_simplex(w, n)
        if n == 4 and lam[0] > 0 and lam[1] > 0 and lam[2] > 0 and lam[3] > 0:
            return 0.0, lam, sa, sb, n, True
        m = 0
        for k in range(n):
            if lam[k] > 0:
                sa[m] = sa[k]
                sb[m] = sb[k]
                w[m] = w[k]
                lam[m] = lam[k]
                m += 1
        n = m
    lam, v = _closest_on_simplex(w, n)
    return np.sqrt(np.dot(v, v)), lam, sa, sb, n, False


def gjk_distance(a: NDArray, b: NDArray) -> GjkResult:
    """Euclidean distance between conv(a) and conv(b) (0 when they overlap)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    dist, lam, sa, sb, n, hit = _gjk(a, b, GJK_MAX_ITER, GJK_REL_TOL)
    lam = lam[:n]
    return GjkResult(float(dist), lam @ a[sa[:n]], lam @ b[sb[:n]], bool(hit))


def penetration_depth(a: NDArray, b: NDArray) -> tuple[float, NDArray[np.float64]]:
    """Minimum translation depth and direction separating conv(a) from conv(b).

    Computed on the exact Minkowski difference hull; the returned normal n
    moves ``a`` out of ``b`` when it is translated by depth * n. Returns
    (0, 0-vector) for disjoint or touching shapes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = (a[:, None, :] - b[None, :, :]).reshape(-1, 3)
    try:
        hull = ConvexHull(diff)
    except QhullError:
        return 0.0, np.zeros(3)
    # facets satisfy n.x + c <= 0 inside; origin distance to facet is -c
    dist = -hull.equations[:, 3]
    k = int(np.argmin(dist))
    if dist[k] <= 0:
        return 0.0, np.zeros(3)
    return float(dist[k]), -hull.equations[k, :3]
