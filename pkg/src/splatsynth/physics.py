"""Deterministic rigid-body drop simulation.

Static triangle-mesh environment plus dynamic convex hulls, semi-implicit
Euler integration and a sequential-impulse contact solver. Body state is kept
at the centre of mass; trajectories report the model-frame pose.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from numpy.typing import NDArray

from . import quat
from .collision import gjk_distance, penetration_depth
from .compose import RigidTransform
from .errors import PlacementError, PreconditionError, SimulationDivergedError
from .geometry import TriangleMesh, alpha_shape

log = logging.getLogger(__name__)

DEFAULT_MASS = 0.1
ENV_DEPTH_MAX = 0.02
RESTITUTION_THRESHOLD = 0.5


@dataclass(frozen=True)
class PhysicsParams:
    dt: float = 1.0 / 240.0
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)
    friction: float = 0.5
    restitution: float = 0.1
    baumgarte: float = 0.2
    slop: float = 5e-4
    iterations: int = 10
    margin: float = 1e-3
    max_time: float = 10.0
    settle_steps: int = 120
    settle_linear: float = 1e-3
    settle_angular: float = 1e-2

    def __post_init__(self):
        if not (self.dt > 0) or self.iterations < 1 or self.friction < 0 or not (0 <= self.restitution <= 1):
            raise PreconditionError("invalid physics parameters")


@dataclass(frozen=True, eq=False)
class ConvexShape:
    """Convex hull in model coordinates with its mass properties at unit density."""

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    normals: NDArray[np.float64]
    offsets: NDArray[np.float64]
    volume: float
    com: NDArray[np.float64]
    unit_inertia: NDArray[np.float64]

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices - self.com, axis=1).max())

    @classmethod
    def from_points(cls, points: NDArray) -> "ConvexShape":
        hull = alpha_shape(np.asarray(points, dtype=np.float64), np.inf)
        v, t = hull.vertices, hull.triangles
        p = v[t]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        off = np.einsum("ij,ij->i", n, p[:, 0])
        volume, com, inertia = mass_properties(v, t)
        return cls(v, t, n, off, volume, com, inertia)

    @classmethod
    def from_mesh(cls, mesh: TriangleMesh) -> "ConvexShape":
        return cls.from_points(mesh.vertices[np.unique(mesh.triangles)])


def mass_properties(vertices: NDArray, triangles: NDArray) -> tuple[float, NDArray, NDArray]:
    """Volume, centroid and unit-density inertia (about the centroid) of a closed mesh."""
    p = vertices[triangles]
    det = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))
    volume = det.sum() / 6.0
    if not volume > 0:
        raise PreconditionError("mesh encloses no positive volume")
    com = (det[:, None] * p.sum(axis=1)).sum(axis=0) / (24.0 * volume)
    # second moment of each origin-apex tetrahedron: det/120 * (sum vv^T + (sum v)(sum v)^T)
    s = p.sum(axis=1)
    c = (np.einsum("t,tij,tik->jk", det, p, p) + np.einsum("t,ti,tj->ij", det, s, s)) / 120.0
    c -= volume * np.outer(com, com)
    inertia = np.trace(c) * np.eye(3) - c
    return float(volume), com, inertia


@dataclass
class RigidBodyState:
    position: NDArray[np.float64]
    orientation: NDArray[np.float64]
    linear_velocity: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    angular_velocity: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))


@dataclass
class Body:
    object_id: int
    shape: ConvexShape
    mass: float
    state: RigidBodyState
    escaped: bool = False

    def __post_init__(self):
        if not self.mass > 0:
            raise PreconditionError("mass must be positive")
        self.inertia = self.shape.unit_inertia * (self.mass / self.shape.volume)
        self.inv_inertia = np.linalg.inv(self.inertia)

    def rotation(self) -> NDArray[np.float64]:
        return quat.to_matrix(self.state.orientation)

    def world_vertices(self) -> NDArray[np.float64]:
        return (self.shape.vertices - self.shape.com) @ self.rotation().T + self.state.position

    def model_pose(self) -> RigidTransform:
        r = self.rotation()
        return RigidTransform(self.state.orientation.copy(), self.state.position - r @ self.shape.com)

    def world_inertia(self, inverse: bool = False) -> NDArray[np.float64]:
        r = self.rotation()
        return r @ (self.inv_inertia if inverse else self.inertia) @ r.T


def body_from_pose(object_id: int, shape: ConvexShape, pose: RigidTransform, mass: float = DEFAULT_MASS) -> Body:
    """Place a body so that its model frame sits at ``pose``."""
    r = pose.rotation_matrix
    state = RigidBodyState(pose.translation + r @ shape.com, np.array(pose.rotation, dtype=np.float64))
    return Body(object_id, shape, mass, state)


@dataclass
class BodyTrajectory:
    object_id: int
    times: list[float] = field(default_factory=list)
    positions: list[NDArray] = field(default_factory=list)
    orientations: list[NDArray] = field(default_factory=list)
    settled: bool = False
    settle_time: float | None = None
    escaped: bool = False

    def pose(self, k: int = -1) -> RigidTransform:
        return RigidTransform(self.orientations[k], self.positions[k])

    @property
    def final_pose(self) -> RigidTransform:
        return self.pose(-1)


class Environment:
    """Static triangle soup, treated two-sided."""

    def __init__(self, mesh: TriangleMesh):
        if not len(mesh.triangles):
            raise PreconditionError("environment mesh has no triangles")
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        self.a = p[:, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        n = np.cross(e1, e2)
        self.normals = n / np.linalg.norm(n, axis=1, keepdims=True)
        self.e1, self.e2 = e1, e2
        g = np.stack([np.einsum("ij,ij->i", e1, e1), np.einsum("ij,ij->i", e1, e2), np.einsum("ij,ij->i", e2, e2)], 1)
        self.gram = g
        self.gram_det = g[:, 0] * g[:, 2] - g[:, 1] ** 2
        self.lo = p.min(axis=1)
        self.hi = p.max(axis=1)
        self.bounds = (mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))
        self._build_grid()

    def _build_grid(self) -> None:
        # xy bucket grid over triangle bounding boxes for broad-phase queries
        lo, hi = self.bounds
        n_tri = len(self.lo)
        self.grid_n = int(np.clip(np.sqrt(n_tri / 4.0), 1, 256))
        span = np.maximum(hi[:2] - lo[:2], 1e-12)
        self.grid_lo, self.grid_cell = lo[:2], span / self.grid_n
        c0, c1 = self._cells(self.lo[:, :2]), self._cells(self.hi[:, :2])
        d = c1 - c0 + 1
        tri_ids, cell_ids = [], []
        small = np.flatnonzero((d[:, 0] <= 4) & (d[:, 1] <= 4))
        for ox in range(4):
            for oy in range(4):
                sel = small[(d[small, 0] > ox) & (d[small, 1] > oy)]
                tri_ids.append(sel)
                cell_ids.append((c0[sel, 0] + ox) * self.grid_n + c0[sel, 1] + oy)
        for t in np.setdiff1d(np.arange(n_tri), small):
            gx, gy = np.meshgrid(np.arange(c0[t, 0], c1[t, 0] + 1), np.arange(c0[t, 1], c1[t, 1] + 1), indexing="ij")
            tri_ids.append(np.full(gx.size, t))
            cell_ids.append((gx * self.grid_n + gy).ravel())
        tri = np.concatenate(tri_ids)
        cell = np.concatenate(cell_ids)
        order = np.lexsort((tri, cell))
        self.grid_tris = tri[order]
        self.grid_start = np.searchsorted(cell[order], np.arange(self.grid_n**2 + 1))

    def _cells(self, xy: NDArray) -> NDArray[np.int64]:
        f = np.nan_to_num(np.floor((xy - self.grid_lo) / self.grid_cell), nan=0.0)
        return np.clip(f, 0, self.grid_n - 1).astype(np.int64)

    def candidates(self, lo: NDArray, hi: NDArray) -> NDArray[np.int64]:
        """Sorted ids of triangles whose bounding boxes overlap [lo, hi]."""
        (x0, y0), (x1, y1) = self._cells(lo[None, :2])[0], self._cells(hi[None, :2])[0]
        parts = [self.grid_tris[self.grid_start[gx * self.grid_n + y0]:self.grid_start[gx * self.grid_n + y1 + 1]]
                 for gx in range(x0, x1 + 1)]
        tri = np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        keep = np.all(self.lo[tri] <= hi, axis=1) & np.all(self.hi[tri] >= lo, axis=1)
        return tri[keep]

    def height_under(self, region: Sequence[float], pad: float = 0.0) -> float:
        x0, y0, x1, y1 = region
        v = self.mesh.vertices
        m = (v[:, 0] >= x0 - pad) & (v[:, 0] <= x1 + pad) & (v[:, 1] >= y0 - pad) & (v[:, 1] <= y1 + pad)
        return float(v[m, 2].max() if m.any() else v[:, 2].max())

    def escape_box(self) -> tuple[NDArray, NDArray]:
        lo, hi = self.bounds
        c = 0.5 * (lo + hi)
        half = np.full(3, 0.5 * float(np.max(hi - lo)))
        return c - 2 * half, c + 2 * half


@dataclass
class Contact:
    a: int
    b: int  # -1 for the environment
    point: NDArray
    normal: NDArray  # pushes body a along +normal
    depth: float  # > 0 penetrating, < 0 separated
    key: tuple


@numba.njit(cache=True)
def _vertex_triangle_hits(verts, a, n, e1, e2, gram, det, margin, depth_max):
    """Per vertex, the least penetrating triangle whose prism holds it within the band."""
    nv, nc = len(verts), len(a)
    hit = np.full(nv, -1, dtype=np.int64)
    best = np.full(nv, -np.inf)
    tol = 1e-9
    for v in range(nv):
        for c in range(nc):
            rx = verts[v, 0] - a[c, 0]
            ry = verts[v, 1] - a[c, 1]
            rz = verts[v, 2] - a[c, 2]
            d = rx * n[c, 0] + ry * n[c, 1] + rz * n[c, 2]
            if not (d < margin and d > -depth_max):
                continue
            r1 = rx * e1[c, 0] + ry * e1[c, 1] + rz * e1[c, 2]
            r2 = rx * e2[c, 0] + ry * e2[c, 1] + rz * e2[c, 2]
            u = (gram[c, 2] * r1 - gram[c, 1] * r2) / det[c]
            w = (gram[c, 0] * r2 - gram[c, 1] * r1) / det[c]
            if u >= -tol and w >= -tol and u + w <= 1 + tol and d > best[v]:
                best[v] = d
                hit[v] = c
    return hit, best


def _env_contacts(i: int, body: Body, verts: NDArray, env: Environment, margin: float) -> list[Contact]:
    lo, hi = verts.min(axis=0) - margin, verts.max(axis=0) + margin
    cand = env.candidates(lo, hi)
    if not len(cand):
        return []
    n = env.normals[cand]
    a = env.a[cand]
    # orient each triangle toward the body's centre of mass
    side = np.sign(np.einsum("ij,ij->i", n, body.state.position - a))
    side[side == 0] = 1.0
    n = n * side[:, None]
    hit, depth = _vertex_triangle_hits(np.ascontiguousarray(verts), a, n, env.e1[cand], env.e2[cand],
                                       env.gram[cand], env.gram_det[cand], margin, ENV_DEPTH_MAX)
    out = []
    for vi in np.flatnonzero(hit >= 0):
        k = hit[vi]
        out.append(Contact(i, -1, verts[vi], n[k], -float(depth[vi]), (i, -1, int(vi), int(cand[k]))))
    return out


def _hull_planes(body: Body, verts_world: NDArray) -> tuple[NDArray, NDArray]:
    r = body.rotation()
    n = body.shape.normals @ r.T
    t = verts_world[body.shape.triangles[:, 0]]
    return n, np.einsum("ij,ij->i", n, t)


def _pair_contacts(i: int, j: int, bi: Body, bj: Body, vi: NDArray, vj: NDArray, margin: float) -> list[Contact]:
    out = []
    ni, oi = _hull_planes(bi, vi)
    nj, oj = _hull_planes(bj, vj)
    # vertices of i against the faces of j, then j against i
    for (src, dst_n, dst_o, sign, side) in ((vi, nj, oj, 1.0, 0), (vj, ni, oi, -1.0, 1)):
        s = src @ dst_n.T - dst_o
        k = np.argmax(s, axis=1)
        smax = s[np.arange(len(src)), k]
        for v in np.flatnonzero(smax < margin):
            out.append(Contact(i, j, src[v], sign * dst_n[k[v]], -float(smax[v]), (i, j, side, int(v), int(k[v]))))
    return out


def _closest_feature_contact(i: int, j: int, vi: NDArray, vj: NDArray, res) -> Contact | None:
    """One contact along the separating (GJK) or minimum-translation direction.

    Catches edge-edge configurations that vertex-in-hull tests miss.
    """
    if not res.intersecting and res.distance > 0:
        n = (res.point_a - res.point_b) / res.distance
        return Contact(i, j, 0.5 * (res.point_a + res.point_b), n, -res.distance, (i, j, 2, 0, 0))
    depth, n = penetration_depth(vi, vj)
    if depth <= 0:
        return None
    # midpoint of the deepest features of both hulls along n
    da = vi @ n
    db = vj @ n
    tol = 1e-9 + 1e-6 * depth
    pa = vi[da <= da.min() + tol].mean(axis=0)
    pb = vj[db >= db.max() - tol].mean(axis=0)
    return Contact(i, j, 0.5 * (pa + pb), n, depth, (i, j, 2, 0, 0))


@numba.njit(cache=True)
def _solve(ia, ib, pts, nrm, depth, lam, inv_mass, inv_i, pos, vel, omg, dt, mu, e, beta, slop, iters, thresh):
    m = len(ia)
    ra = np.empty((m, 3))
    rb = np.empty((m, 3))
    t1 = np.empty((m, 3))
    t2 = np.empty((m, 3))
    kn = np.empty(m)
    k1 = np.empty(m)
    k2 = np.empty(m)
    target = np.empty(m)

    def eff_mass(a, b, r_a, r_b, d):
        k = inv_mass[a]
        c = np.cross(r_a, d)
        k += np.dot(d, np.cross(inv_i[a] @ c, r_a))
        if b >= 0:
            k += inv_mass[b]
            c2 = np.cross(r_b, d)
            k += np.dot(d, np.cross(inv_i[b] @ c2, r_b))
        return k

    def rel_vel(a, b, r_a, r_b):
        v = vel[a] + np.cross(omg[a], r_a)
        if b >= 0:
            v = v - vel[b] - np.cross(omg[b], r_b)
        return v

    def apply(a, b, r_a, r_b, imp):
        vel[a] += inv_mass[a] * imp
        omg[a] += inv_i[a] @ np.cross(r_a, imp)
        if b >= 0:
            vel[b] -= inv_mass[b] * imp
            omg[b] -= inv_i[b] @ np.cross(r_b, imp)

    for c in range(m):
        a, b = ia[c], ib[c]
        n = nrm[c]
        ra[c] = pts[c] - pos[a]
        if b >= 0:
            rb[c] = pts[c] - pos[b]
        else:
            rb[c] = 0.0
        if abs(n[0]) < 0.57735:
            u = np.cross(n, np.array([1.0, 0.0, 0.0]))
        else:
            u = np.cross(n, np.array([0.0, 1.0, 0.0]))
        u /= np.linalg.norm(u)
        t1[c] = u
        t2[c] = np.cross(n, u)
        kn[c] = eff_mass(a, b, ra[c], rb[c], n)
        k1[c] = eff_mass(a, b, ra[c], rb[c], t1[c])
        k2[c] = eff_mass(a, b, ra[c], rb[c], t2[c])
        vn = np.dot(rel_vel(a, b, ra[c], rb[c]), n)
        if depth[c] < 0.0:
            target[c] = depth[c] / dt
        else:
            bounce = -e * vn if vn < -thresh else 0.0
            target[c] = max(bounce, beta / dt * max(depth[c] - slop, 0.0))
        # warm start
        apply(a, b, ra[c], rb[c], lam[c, 0] * n + lam[c, 1] * t1[c] + lam[c, 2] * t2[c])

    for _ in range(iters):
        for c in range(m):
            a, b = ia[c], ib[c]
            n = nrm[c]
            # friction within the current normal-impulse cone
            v = rel_vel(a, b, ra[c], rb[c])
            f1 = lam[c, 1] - np.dot(v, t1[c]) / k1[c]
            f2 = lam[c, 2] - np.dot(v, t2[c]) / k2[c]
            lim = mu * lam[c, 0]
            mag = np.sqrt(f1 * f1 + f2 * f2)
            if mag > lim:
                s = lim / mag if mag > 0.0 else 0.0
                f1 *= s
                f2 *= s
            d1 = f1 - lam[c, 1]
            d2 = f2 - lam[c, 2]
            lam[c, 1] = f1
            lam[c, 2] = f2
            apply(a, b, ra[c], rb[c], d1 * t1[c] + d2 * t2[c])
            # normal
            vn = np.dot(rel_vel(a, b, ra[c], rb[c]), n)
            new = max(lam[c, 0] + (target[c] - vn) / kn[c], 0.0)
            dn = new - lam[c, 0]
            lam[c, 0] = new
            apply(a, b, ra[c], rb[c], dn * n)


class World:
    """Bodies, environment and solver parameters; advanced by :meth:`step`."""

    def __init__(self, env: TriangleMesh | Environment, bodies: Sequence[Body], params: PhysicsParams | None = None):
        self.env = env if isinstance(env, Environment) else Environment(env)
        self.bodies = list(bodies)
        self.params = params or PhysicsParams()
        self.step_index = 0
        self.time = 0.0
        self._warm: dict[tuple, NDArray] = {}
        self.last_contacts: list[Contact] = []

    def _margin(self, b: Body) -> float:
        s = b.state
        speed = np.linalg.norm(s.linear_velocity) + np.linalg.norm(s.angular_velocity) * b.shape.bounding_radius
        return self.params.margin + 2.0 * self.params.dt * speed

    def collect_contacts(self) -> list[Contact]:
        active = [k for k, b in enumerate(self.bodies) if not b.escaped]
        verts = {k: self.bodies[k].world_vertices() for k in active}
        margins = {k: self._margin(self.bodies[k]) for k in active}
        boxes = {k: (verts[k].min(axis=0), verts[k].max(axis=0)) for k in active}
        contacts: list[Contact] = []
        for k in active:
            contacts += _env_contacts(k, self.bodies[k], verts[k], self.env, margins[k])
        for x, i in enumerate(active):
            for j in active[x + 1:]:
                m = margins[i] + margins[j]
                if np.any(boxes[i][0] > boxes[j][1] + m) or np.any(boxes[j][0] > boxes[i][1] + m):
                    continue
                res = gjk_distance(verts[i], verts[j])
                if res.distance > m:
                    continue
                contacts += _pair_contacts(i, j, self.bodies[i], self.bodies[j], verts[i], verts[j], m)
                c = _closest_feature_contact(i, j, verts[i], verts[j], res)
                if c is not None:
                    contacts.append(c)
        return contacts

    def step(self) -> None:
        p = self.params
        dt = p.dt
        g = np.asarray(p.gravity, dtype=np.float64)
        active = [b for b in self.bodies if not b.escaped]
        for b in active:
            b.state.linear_velocity = b.state.linear_velocity + g * dt
        contacts = self.collect_contacts()
        self.last_contacts = contacts
        if contacts:
            n_b = len(self.bodies)
            inv_mass = np.array([0.0 if b.escaped else 1.0 / b.mass for b in self.bodies])
            inv_i = np.stack([b.world_inertia(inverse=True) for b in self.bodies])
            pos = np.stack([b.state.position for b in self.bodies])
            vel = np.stack([b.state.linear_velocity for b in self.bodies]).reshape(n_b, 3)
            omg = np.stack([b.state.angular_velocity for b in self.bodies]).reshape(n_b, 3)
            lam = np.stack([self._warm.get(c.key, np.zeros(3)) for c in contacts])
            _solve(
                np.array([c.a for c in contacts], dtype=np.int64),
                np.array([c.b for c in contacts], dtype=np.int64),
                np.stack([c.point for c in contacts]),
                np.stack([c.normal for c in contacts]),
                np.array([c.depth for c in contacts]),
                lam, inv_mass, inv_i, pos, vel, omg,
                dt, p.friction, p.restitution, p.baumgarte, p.slop, p.iterations, RESTITUTION_THRESHOLD,
            )
            self._warm = {c.key: lam[k].copy() for k, c in enumerate(contacts)}
            for k, b in enumerate(self.bodies):
                if not b.escaped:
                    b.state.linear_velocity = vel[k].copy()
                    b.state.angular_velocity = omg[k].copy()
        else:
            self._warm = {}
        for k, b in enumerate(self.bodies):
            if b.escaped:
                continue
            s = b.state
            ang_mom = b.world_inertia() @ s.angular_velocity
            s.position = s.position + s.linear_velocity * dt
            s.orientation = quat.normalize(quat.multiply(quat.exp_map(s.angular_velocity, dt), s.orientation))
            s.angular_velocity = b.world_inertia(inverse=True) @ ang_mom
            if not (np.all(np.isfinite(s.position)) and np.all(np.isfinite(s.orientation))
                    and np.all(np.isfinite(s.linear_velocity)) and np.all(np.isfinite(s.angular_velocity))):
                raise SimulationDivergedError(b.object_id, self.step_index + 1)
        self.step_index += 1
        self.time = self.step_index * dt

    def max_penetration(self) -> float:
        """Deepest current overlap, environment contacts and hull pairs."""
        depth = 0.0
        active = [k for k, b in enumerate(self.bodies) if not b.escaped]
        for k in active:
            for c in _env_contacts(k, self.bodies[k], self.bodies[k].world_vertices(), self.env, 0.0):
                depth = max(depth, c.depth)
        for x, i in enumerate(active):
            for j in active[x + 1:]:
                d, _ = penetration_depth(self.bodies[i].world_vertices(), self.bodies[j].world_vertices())
                depth = max(depth, d)
        return depth


def _record(traj: BodyTrajectory, body: Body, t: float) -> None:
    pose = body.model_pose()
    traj.times.append(t)
    traj.positions.append(pose.translation)
    traj.orientations.append(pose.rotation)


def simulate_until_settled(world: World, max_time: float | None = None) -> list[BodyTrajectory]:
    p = world.params
    max_time = p.max_time if max_time is None else max_time
    max_steps = int(round(max_time / p.dt))
    trajs = [BodyTrajectory(b.object_id) for b in world.bodies]
    for tr, b in zip(trajs, world.bodies):
        _record(tr, b, world.time)
    streak = [0] * len(world.bodies)
    lo, hi = world.env.escape_box()
    for _ in range(max_steps):
        world.step()
        for k, (tr, b) in enumerate(zip(trajs, world.bodies)):
            if b.escaped:
                continue
            _record(tr, b, world.time)
            if np.any(b.state.position < lo) or np.any(b.state.position > hi):
                b.escaped = True
                tr.escaped = True
                log.warning("body %d escaped the environment at t=%.4f s; excluded", b.object_id, world.time)
                continue
            s = b.state
            if np.linalg.norm(s.linear_velocity) < p.settle_linear and np.linalg.norm(s.angular_velocity) < p.settle_angular:
                streak[k] += 1
            else:
                streak[k] = 0
        if all(b.escaped or streak[k] >= p.settle_steps for k, b in enumerate(world.bodies)):
            break
    for k, (tr, b) in enumerate(zip(trajs, world.bodies)):
        if not b.escaped and streak[k] >= p.settle_steps:
            tr.settled = True
            tr.settle_time = world.time - streak[k] * p.dt
    return trajs


def spawn_drop(
    shapes: Sequence[tuple[int, ConvexShape, float]],
    region: Sequence[float],
    env: TriangleMesh | Environment,
    rng: np.random.Generator,
    max_tries: int = 100,
    max_stack_height: float = 2.0,
) -> list[Body]:
    """Random non-overlapping drop poses above the environment.

    ``shapes`` lists (object_id, shape, mass) per instance. The body origin
    (centre of mass) is placed at z = surface height + bounding radius + U(0.05, 0.15).
    """
    env = env if isinstance(env, Environment) else Environment(env)
    x0, y0, x1, y1 = (float(r) for r in region)
    lo, hi = env.bounds
    if not (x0 <= x1 and y0 <= y1) or x0 < lo[0] or y0 < lo[1] or x1 > hi[0] or y1 > hi[1]:
        raise PreconditionError(f"drop region {tuple(region)} is not inside the environment bounds")
    base = env.height_under((x0, y0, x1, y1))
    placed: list[Body] = []
    for object_id, shape, mass in shapes:
        r = shape.bounding_radius
        body = None
        for _ in range(max_tries):
            xy = rng.uniform([x0, y0], [x1, y1])
            z = base + r + rng.uniform(0.05, 0.15)
            q = quat.random_uniform(rng)
            cand = Body(object_id, shape, mass, RigidBodyState(np.array([xy[0], xy[1], z]), q))
            if _separated(cand, placed):
                body = cand
                break
        if body is None:
            # stack above everything placed so far
            top = max(b.state.position[2] + b.shape.bounding_radius for b in placed)
            z = top + r + rng.uniform(0.05, 0.15)
            if z - base > max_stack_height:
                raise PlacementError(f"cannot place object {object_id}: region too small for the requested count")
            body = Body(object_id, shape, mass, RigidBodyState(np.array([xy[0], xy[1], z]), q))
        placed.append(body)
    return placed


def _separated(cand: Body, placed: Sequence[Body]) -> bool:
    vc = cand.world_vertices()
    for b in placed:
        if np.linalg.norm(b.state.position - cand.state.position) > b.shape.bounding_radius + cand.shape.bounding_radius:
            continue
        if gjk_distance(vc, b.world_vertices()).distance <= 0.0:
            return False
    return True


def write_trajectories_jsonl(trajs: Sequence[BodyTrajectory], path: str | os.PathLike) -> None:
    """One line per (step, body): {t, object_id, q:[w,x,y,z], p:[x,y,z]}."""
    n = max((len(t.times) for t in trajs), default=0)
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(n):
            for tr in trajs:
                if k < len(tr.times):
                    rec = {"t": tr.times[k], "object_id": tr.object_id,
                           "q": tr.orientations[k].tolist(), "p": tr.positions[k].tolist()}
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
