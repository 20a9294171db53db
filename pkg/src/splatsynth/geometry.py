"""Collision/box geometry from splat clouds.

extract means -> statistical outlier removal -> alpha shape -> Laplacian
smoothing -> vertex-clustering decimation. Also binary STL and OBJ I/O.
"""

from __future__ import annotations

import logging
import os
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import InvalidAssetError, PreconditionError, ReconstructionError
from .sh_math import SH_C0
from .splat_model import GaussianCloud

log = logging.getLogger(__name__)

JITTER_SEED = 0x5EED
JITTER_REL = 1e-9
MIN_TRIANGLE_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class PointSet:
    points: NDArray[np.float64]
    colors: NDArray[np.float64] | None = None

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    colors: NDArray[np.float64] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> NDArray[np.float64]:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def edges(self) -> NDArray[np.int64]:
        """Undirected edges, one row per (triangle, side)."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.sort(e, axis=1)

    def is_watertight(self) -> bool:
        if not len(self.triangles):
            return False
        _, counts = np.unique(self.edges(), axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def volume(self) -> float:
        """Signed enclosed volume (positive for outward-oriented closed meshes)."""
        v = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        used = self.vertices[np.unique(self.triangles)] if len(self.triangles) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def validate(self) -> None:
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise InvalidAssetError("triangle index out of range")
        if np.any(self.triangle_areas() <= MIN_TRIANGLE_AREA):
            raise InvalidAssetError("degenerate triangle")

    def compact(self) -> "TriangleMesh":
        """Drop vertices no triangle references."""
        used, inv = np.unique(self.triangles, return_inverse=True)
        cols = None if self.colors is None else self.colors[used]
        return TriangleMesh(self.vertices[used], inv.reshape(-1, 3), cols)


# ---------------------------------------------------------------- point stages


def extract_points(cloud: GaussianCloud) -> PointSet:
    """Splat means with colours decoded from the DC SH term."""
    if not len(cloud):
        return PointSet(np.zeros((0, 3)), np.zeros((0, 3)))
    colors = np.clip(SH_C0 * cloud.sh[:, :, 0] + 0.5, 0.0, 1.0)
    return PointSet(np.array(cloud.means), colors)


def remove_outliers(points: PointSet, k: int = 16, sigma_mult: float = 2.0) -> PointSet:
    """Drop points whose mean k-NN distance exceeds mean + sigma_mult * std."""
    n = len(points)
    if n <= k:
        log.warning("remove_outliers: %d points, need more than k=%d; returning input unchanged", n, k)
        return points
    dist, _ = cKDTree(points.points).query(points.points, k=k + 1)
    mean_d = dist[:, 1:].mean(axis=1)
    # relative slack so identical neighbourhoods are not split by rounding
    keep = mean_d <= (mean_d.mean() + sigma_mult * mean_d.std()) * (1 + 1e-9)
    colors = None if points.colors is None else points.colors[keep]
    return PointSet(points.points[keep], colors)


def median_spacing(points: NDArray) -> float:
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


# ------------------------------------------------------------------ alpha shape


def _circumradius_tets(p: NDArray) -> NDArray[np.float64]:
    a = p[:, 1:] - p[:, :1]
    rhs = 0.5 * np.einsum("tij,tij->ti", a, a)
    det = np.linalg.det(a)
    scale = np.einsum("tij,tij->t", a, a) ** 1.5
    ok = np.abs(det) > 1e-14 * np.maximum(scale, 1e-300)
    c = np.zeros((len(p), 3))
    if ok.any():
        c[ok] = np.linalg.solve(a[ok], rhs[ok][..., None])[..., 0]
    r = np.linalg.norm(c, axis=1)
    r[~ok] = np.inf
    return r


def _smallest_circumsphere_tris(p: NDArray) -> tuple[NDArray, NDArray]:
    """Centre and radius of each triangle's circumcircle (its smallest sphere if acute)."""
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    axb = np.cross(a, b)
    denom = 2.0 * np.einsum("ij,ij->i", axb, axb)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.einsum("i,ij->ij", np.einsum("ij,ij->i", a, a), np.cross(b, axb)) + np.einsum(
            "i,ij->ij", np.einsum("ij,ij->i", b, b), np.cross(axb, a)
        )
        off = num / denom[:, None]
    r = np.linalg.norm(off, axis=1)
    r[~np.isfinite(r)] = np.inf
    return p[:, 0] + off, r


def _orient(triangles: NDArray, trusted: NDArray, vertices: NDArray) -> NDArray:
    """Make orientation consistent across shared edges, seeded by trusted faces."""
    tris = triangles.copy()
    n = len(tris)
    if not n:
        return tris
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for f, (a, b, c) in enumerate(tris):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault((min(u, v), max(u, v)), []).append(f)
    seen = np.zeros(n, dtype=bool)
    order = list(np.flatnonzero(trusted)) + list(np.flatnonzero(~trusted))
    for seed in order:
        if seen[seed]:
            continue
        seen[seed] = True
        component = [seed]
        queue = deque([seed])
        while queue:
            f = queue.popleft()
            a, b, c = tris[f]
            for u, v in ((a, b), (b, c), (c, a)):
                faces = edge_faces[(min(u, v), max(u, v))]
                if len(faces) != 2:
                    continue
                g = faces[0] if faces[1] == f else faces[1]
                if seen[g]:
                    continue
                ga, gb, gc = tris[g]
                same_dir = (u, v) in ((ga, gb), (gb, gc), (gc, ga))
                if same_dir:
                    tris[g] = tris[g][::-1]
                seen[g] = True
                component.append(g)
                queue.append(g)
        if not trusted[component].any():
            v = vertices[tris[component]]
            vol = np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum()
            if vol < 0:
                tris[component] = tris[component][:, ::-1]
    return tris


def alpha_shape(points: NDArray | PointSet, alpha: float = np.inf) -> TriangleMesh:
    """Boundary of the alpha complex of the 3-D Delaunay tetrahedralization.

    Tetrahedra with circumradius <= alpha are kept; faces separating a kept
    tetrahedron from a discarded one (or the outside) are emitted with outward
    orientation. Triangles with no kept tetrahedron are added when they belong
    to the alpha complex on their own (circumradius <= alpha and unattached),
    which recovers surfaces sampled only on their boundary. ``alpha = inf``
    gives the convex hull.
    """
    colors = points.colors if isinstance(points, PointSet) else None
    pts = np.asarray(points.points if isinstance(points, PointSet) else points, dtype=np.float64)
    if not (alpha > 0):
        raise PreconditionError("alpha must be positive or inf")
    if len(pts) < 4 or not np.all(np.isfinite(pts)):
        raise ReconstructionError("alpha shape needs at least 4 finite points")
    diag = float(np.linalg.norm(np.ptp(pts, axis=0)))
    if diag == 0:
        raise ReconstructionError("all points coincide")
    centered = pts - pts.mean(axis=0)
    thickness = np.linalg.svd(centered, compute_uv=False)[-1] / np.sqrt(len(pts))
    if thickness <= 10 * JITTER_REL * diag:
        raise ReconstructionError("points are coplanar or collinear")
    jitter = np.random.default_rng(JITTER_SEED).uniform(-1.0, 1.0, pts.shape) * (JITTER_REL * diag)
    work = pts + jitter
    try:
        tri = Delaunay(work)
    except QhullError as exc:  # pragma: no cover - qhull reports degenerate input
        raise ReconstructionError(f"Delaunay tetrahedralization failed: {exc}") from None
    simp = tri.simplices.astype(np.int64)
    nbr = tri.neighbors.astype(np.int64)
    if np.isinf(alpha):
        kept = np.ones(len(simp), dtype=bool)
    else:
        kept = _circumradius_tets(pts[simp]) <= alpha

    # every (tet, local face) once: boundary faces, or t < neighbour
    t_idx, f_idx = np.nonzero((nbr == -1) | (np.arange(len(simp))[:, None] < nbr))
    others = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    faces = simp[t_idx[:, None], others[f_idx]]
    apex_t = simp[t_idx, f_idx]
    n = nbr[t_idx, f_idx]
    kept_t = kept[t_idx]
    kept_n = np.where(n >= 0, kept[np.maximum(n, 0)], False)

    out_faces = []
    trusted = []
    # faces with exactly one kept tetrahedron, oriented away from its apex
    one = kept_t ^ kept_n
    if one.any():
        f1 = faces[one].copy()
        apex = apex_t[one].copy()
        from_n = kept_n[one]
        if from_n.any():
            nn = n[one][from_n]
            fn = f1[from_n]
            # apex of the neighbour: its vertex not on the shared face
            cand = simp[nn]
            on_face = (cand[:, :, None] == fn[:, None, :]).any(axis=2)
            apex[from_n] = cand[~on_face]
        # sign taken on the perturbed points so flat cells orient consistently
        p = work[f1]
        nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        flip = np.einsum("ij,ij->i", nrm, work[apex] - p[:, 0]) > 0
        f1[flip] = f1[flip][:, ::-1]
        out_faces.append(f1)
        trusted.append(np.ones(len(f1), dtype=bool))
    # singular faces: no kept tetrahedron, small and unattached
    zero = ~kept_t & ~kept_n
    if zero.any() and np.isfinite(alpha):
        fz = faces[zero]
        cen, rad = _smallest_circumsphere_tris(pts[fz])
        small = rad <= alpha
        a_t = apex_t[zero]
        nz = n[zero]
        free = np.linalg.norm(pts[a_t] - cen, axis=1) > rad
        has_n = nz >= 0
        if has_n.any():
            cand = simp[nz[has_n]]
            on_face = (cand[:, :, None] == fz[has_n][:, None, :]).any(axis=2)
            apex_n = cand[~on_face]
            free[has_n] &= np.linalg.norm(pts[apex_n] - cen[has_n], axis=1) > rad[has_n]
        sel = small & free
        if sel.any():
            out_faces.append(fz[sel])
            trusted.append(np.zeros(int(sel.sum()), dtype=bool))
    if not out_faces:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    triangles = np.concatenate(out_faces)
    trusted_arr = np.concatenate(trusted)
    p = pts[triangles]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    good = area > MIN_TRIANGLE_AREA
    triangles, trusted_arr = triangles[good], trusted_arr[good]
    # canonical order so output does not depend on face discovery order
    order = np.lexsort(np.sort(triangles, axis=1).T[::-1])
    triangles, trusted_arr = triangles[order], trusted_arr[order]
    triangles = _orient(triangles, trusted_arr, pts)
    return TriangleMesh(pts, triangles, colors).compact()


# -------------------------------------------------------------- mesh processing


def _adjacency(mesh: TriangleMesh) -> sparse.csr_matrix:
    e = np.unique(mesh.edges(), axis=0)
    n = len(mesh.vertices)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def laplacian_smooth(mesh: TriangleMesh, iterations: int = 10, lam: float = 0.5) -> TriangleMesh:
    """Uniform umbrella smoothing v += lam * (mean(neighbours) - v)."""
    if iterations < 0:
        raise PreconditionError("iterations must be non-negative")
    if lam == 0 or iterations == 0 or not len(mesh.triangles):
        return TriangleMesh(mesh.vertices.copy(), mesh.triangles.copy(), mesh.colors)
    adj = _adjacency(mesh)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    has = deg > 0
    inv = np.zeros_like(deg)
    inv[has] = 1.0 / deg[has]
    avg = sparse.diags(inv) @ adj
    v = mesh.vertices.copy()
    for _ in range(iterations):
        delta = avg @ v - v
        delta[~has] = 0.0
        v = v + lam * delta
    return TriangleMesh(v, mesh.triangles.copy(), mesh.colors)


def _cluster(mesh: TriangleMesh, origin: NDArray, cell: float, ext_idx: NDArray):
    v = mesh.vertices
    keys = np.floor((v - origin) / cell).astype(np.int64)
    _, label, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    label = label.ravel()
    reps = np.zeros((len(counts), 3))
    for a in range(3):
        reps[:, a] = np.bincount(label, weights=v[:, a], minlength=len(counts)) / counts
    # clusters holding a bbox extreme snap to it along that axis
    for a in range(3):
        for i in ext_idx[a]:
            reps[label[i], a] = v[i, a]
    tri = label[mesh.triangles]
    ok = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
    return reps, _cancel_coincident(tri[ok])


def _cancel_coincident(tri: NDArray[np.int64]) -> NDArray[np.int64]:
    """Collapse faces on the same vertex triple: opposite orientations cancel pairwise.

    Folded sheets from clustering produce such pairs; keeping one of them
    would leave a dangling fin. One face survives per triple when the
    orientation counts differ.
    """
    if not len(tri):
        return tri
    key = np.sort(tri, axis=1)
    # +1 when the face is a cyclic rotation of its sorted triple
    r = np.argsort(tri, axis=1)
    cyc = ((r[:, 0] == 0) & (r[:, 1] == 1)) | ((r[:, 0] == 1) & (r[:, 1] == 2)) | ((r[:, 0] == 2) & (r[:, 1] == 0))
    sign = np.where(cyc, 1, -1)
    _, group = np.unique(key, axis=0, return_inverse=True)
    group = group.ravel()
    net = np.bincount(group, weights=sign).astype(np.int64)
    cand = np.flatnonzero((net[group] != 0) & (sign == np.sign(net[group])))
    _, first = np.unique(group[cand], return_index=True)
    return tri[np.sort(cand[first])]


def decimate(mesh: TriangleMesh, target_triangles: int) -> TriangleMesh:
    """Vertex clustering on a uniform grid anchored at the bbox minimum."""
    if target_triangles < 4:
        raise PreconditionError("target_triangles must be >= 4")
    if mesh.n_triangles <= target_triangles:
        return mesh
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    ext_idx = np.array([[int(np.argmin(v[:, a])), int(np.argmax(v[:, a]))] for a in range(3)])

    def attempt(cell):
        reps, tri = _cluster(mesh, lo, cell, ext_idx)
        m = TriangleMesh(reps, tri)
        if len(tri):
            m = TriangleMesh(reps, tri[m.triangle_areas() > MIN_TRIANGLE_AREA])
        return m

    # grow until under target, then bisect for the finest grid that fits
    fine = diag / np.sqrt(mesh.n_triangles)
    coarse = fine
    best = attempt(coarse)
    while best.n_triangles > target_triangles:
        fine = coarse
        coarse *= 2.0
        best = attempt(coarse)
    for _ in range(25):
        mid = 0.5 * (fine + coarse)
        m = attempt(mid)
        if m.n_triangles <= target_triangles:
            coarse, best = mid, m
        else:
            fine = mid
    if best.n_triangles >= 4:
        return best.compact()
    reps = best.vertices
    try:
        return alpha_shape(reps, np.inf)
    except ReconstructionError:
        return best.compact()


# ----------------------------------------------------------------------- mesh I/O


def write_stl(mesh: TriangleMesh, path: str | os.PathLike) -> None:
    v = mesh.vertices[mesh.triangles]
    nrm = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    ln = np.linalg.norm(nrm, axis=1, keepdims=True)
    nrm = np.divide(nrm, ln, out=np.zeros_like(nrm), where=ln > 0)
    rec = np.zeros(len(v), dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    rec["n"] = nrm
    rec["v"] = v
    with open(path, "wb") as fh:
        fh.write(b"binary STL".ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(v)))
        fh.write(rec.tobytes())


def read_stl(path: str | os.PathLike) -> TriangleMesh:
    raw = open(path, "rb").read()
    if len(raw) < 84:
        raise InvalidAssetError(f"{path}: truncated STL")
    (n,) = struct.unpack("<I", raw[80:84])
    rec = np.frombuffer(raw[84 : 84 + 50 * n], dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    verts = rec["v"].reshape(-1, 3).astype(np.float64)
    uniq, inv = np.unique(verts, axis=0, return_inverse=True)
    return TriangleMesh(uniq, inv.reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path: str | os.PathLike) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path: str | os.PathLike) -> TriangleMesh:
    verts, faces = [], []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
                faces += [[idx[0], idx[i], idx[i + 1]] for i in range(1, len(idx) - 1)]
    mesh = TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
    if len(mesh.triangles) and (mesh.triangles.min() < 0 or mesh.triangles.max() >= len(mesh.vertices)):
        raise InvalidAssetError(f"{path}: face index out of range")
    return mesh


def load_mesh(path: str | os.PathLike) -> TriangleMesh:
    return read_stl(path) if str(path).lower().endswith(".stl") else read_obj(path)


def icosphere(radius: float = 1.0, level: int = 2) -> TriangleMesh:
    """Subdivided icosahedron with all vertices on the sphere."""
    t = (1.0 + 5.0**0.5) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(level):
        mid: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in mid:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                mid[key] = len(verts) - 1
            return mid[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return TriangleMesh(radius * np.array(verts), np.array(faces))


@dataclass(frozen=True)
class GeometryParams:
    alpha: float | None = None  # None: closed_alpha_shape ladder from 3x median spacing
    smooth_iters: int = 10
    smooth_lambda: float = 0.5
    target_tris: int = 500
    outlier_k: int = 16
    outlier_sigma: float = 2.0


ALPHA_START = 3.0
ALPHA_GROWTH = 1.5
ALPHA_STEPS = 8


def default_alpha(points: NDArray) -> float:
    return ALPHA_START * median_spacing(points)


def closed_alpha_shape(points: PointSet | NDArray) -> tuple[TriangleMesh, float]:
    """Smallest alpha on the ladder 3x spacing * 1.5^k (k < 8) giving a closed surface.

    Random surface samples leave gaps wider than the median spacing, so a
    fixed multiple often produces holes. Falls back to the last rung (with a
    warning) when none closes.
    """
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    alpha = default_alpha(pts)
    for _ in range(ALPHA_STEPS):
        mesh = alpha_shape(pts, alpha)
        if len(mesh.triangles) and mesh.is_watertight():
            return mesh, alpha
        alpha *= ALPHA_GROWTH
    alpha /= ALPHA_GROWTH
    log.warning("no alpha up to %.4g m closes the surface; using it anyway", alpha)
    return mesh, alpha


def build_geometric_entity(cloud: GaussianCloud, params: GeometryParams = GeometryParams()) -> TriangleMesh:
    """Splat cloud -> cleaned points -> alpha shape -> smoothed -> low-poly mesh.

    Raises ReconstructionError tagged with the failing stage.
    """
    stage = "extract"
    try:
        pts = extract_points(cloud)
        if len(pts) < 4:
            raise ReconstructionError("fewer than 4 splats")
        stage = "outliers"
        pts = remove_outliers(pts, params.outlier_k, params.outlier_sigma)
        stage = "alpha_shape"
        if params.alpha is None:
            mesh, alpha = closed_alpha_shape(pts)
        else:
            alpha = params.alpha
            mesh = alpha_shape(pts, alpha)
        if not len(mesh.triangles):
            raise ReconstructionError(f"alpha {alpha:g} keeps no faces")
        stage = "smooth"
        mesh = laplacian_smooth(mesh, params.smooth_iters, params.smooth_lambda)
        stage = "decimate"
        return decimate(mesh, params.target_tris)
    except ReconstructionError as exc:
        raise ReconstructionError(f"{stage}: {exc}") from None


def environment_mesh(cloud: GaussianCloud, alpha: float | None = None) -> TriangleMesh:
    """Environment surface: alpha shape of the cleaned splat means, full resolution."""
    try:
        pts = remove_outliers(extract_points(cloud))
        return alpha_shape(pts, alpha if alpha is not None else default_alpha(pts.points))
    except ReconstructionError as exc:
        raise ReconstructionError(f"alpha_shape: {exc}") from None
