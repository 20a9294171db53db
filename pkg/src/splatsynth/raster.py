"""Tile-based CPU splat rasterizer.

Splats are projected with the local affine (EWA) approximation of the pinhole
camera, binned into screen tiles, depth-sorted per tile and alpha-blended front
to back. Besides colour the renderer accumulates expected depth, coverage and a
per-object blend weight used for segmentation masks.

Pixel centres sit at integer coordinates (OpenCV convention).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.typing import NDArray

from .compose import RigidTransform
from .errors import PreconditionError
from .sh_math import sh_basis
from .splat_model import Gaussian, GaussianCloud, covariance_of, covariances

Z_NEAR = 0.01
DILATION = 0.3
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
BG_ALPHA = 0.5
SINGULAR_DET = 1e-12


@dataclass(frozen=True, eq=False)
class CameraView:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise PreconditionError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise PreconditionError("principal point must lie inside the image")

    @property
    def K(self) -> NDArray[np.float64]:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> NDArray[np.float64]:
        """Camera centre in world coordinates."""
        return self.world_to_camera.inverse().translation

    def with_pose(self, world_to_camera: RigidTransform) -> "CameraView":
        return CameraView(self.fx, self.fy, self.cx, self.cy, self.width, self.height, world_to_camera)

    def project_points(self, points: NDArray) -> NDArray[np.float64]:
        """Pixel coordinates of world points (no culling)."""
        pc = self.world_to_camera.apply(points)
        return np.column_stack([self.fx * pc[:, 0] / pc[:, 2] + self.cx, self.fy * pc[:, 1] / pc[:, 2] + self.cy])


@dataclass(frozen=True)
class RenderOptions:
    tile_size: int = 16
    t_min: float = T_MIN
    alpha_min: float = ALPHA_MIN
    alpha_max: float = ALPHA_MAX
    dilation: float = DILATION
    z_near: float = Z_NEAR
    bg_alpha: float = BG_ALPHA
    workers: int = 1


@dataclass
class RenderStats:
    splats: int = 0
    culled: int = 0
    skipped_singular: int = 0
    tiles_touched: int = 0
    tile_splat_pairs: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(eq=False)
class RenderOutput:
    rgb: NDArray[np.float64]  # H x W x 3
    depth: NDArray[np.float64]  # H x W, meters, 0 = background
    alpha: NDArray[np.float64]  # H x W
    object_weight: NDArray[np.float64]  # K x H x W
    object_ids: NDArray[np.int32]  # K, plane -> object id (ascending)
    stats: RenderStats = field(default_factory=RenderStats)

    def weight_of(self, object_id: int) -> NDArray[np.float64]:
        idx = np.flatnonzero(self.object_ids == object_id)
        if not len(idx):
            return np.zeros_like(self.alpha)
        return self.object_weight[idx[0]]


@dataclass(frozen=True)
class Projection:
    center_px: NDArray[np.float64]
    cov2d: NDArray[np.float64]
    depth_cam: float


@dataclass
class _Projected:
    """Per-splat screen-space quantities for the splats that survived culling."""

    index: NDArray[np.int64]
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    conic: NDArray[np.float64]  # n x 3 (a, b, c) of the inverse 2-D covariance
    depth: NDArray[np.float64]
    opacity: NDArray[np.float64]
    color: NDArray[np.float64]  # n x 3
    label: NDArray[np.int32]  # plane index
    rect: NDArray[np.int64]  # n x 4 pixel bounds x0, x1, y0, y1 (inclusive)


def _screen_space(means, covs, view: CameraView, dilation: float):
    w = view.world_to_camera
    wr = w.rotation_matrix
    pc = means @ wr.T + w.translation
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = view.fx * x / z + view.cx
        v = view.fy * y / z + view.cy
        jac = np.zeros((len(means), 2, 3))
        jac[:, 0, 0] = view.fx / z
        jac[:, 0, 2] = -view.fx * x / (z * z)
        jac[:, 1, 1] = view.fy / z
        jac[:, 1, 2] = -view.fy * y / (z * z)
        cov_cam = wr @ covs @ wr.T
        cov2d = jac @ cov_cam @ np.swapaxes(jac, 1, 2)
    cov2d[:, 0, 0] += dilation
    cov2d[:, 1, 1] += dilation
    return u, v, z, cov2d


def project_gaussian(g: Gaussian, view: CameraView, z_near: float = Z_NEAR, dilation: float = DILATION) -> Projection | None:
    """Screen-space centre, dilated 2-D covariance and depth; None when culled."""
    cov = covariance_of(g)
    u, v, z, cov2d = _screen_space(g.mean[None, :], cov[None], view, dilation)
    if not z[0] > z_near:
        return None
    c = cov2d[0]
    # 3-sigma footprint against the image rectangle
    hx, hy = 3.0 * math.sqrt(max(c[0, 0], 0.0)), 3.0 * math.sqrt(max(c[1, 1], 0.0))
    if u[0] + hx < 0 or u[0] - hx > view.width - 1 or v[0] + hy < 0 or v[0] - hy > view.height - 1:
        return None
    return Projection(np.array([u[0], v[0]]), c, float(z[0]))


def _project_cloud(cloud: GaussianCloud, view: CameraView, opts: RenderOptions, planes: NDArray, stats: RenderStats) -> _Projected:
    n = len(cloud)
    stats.splats = n
    covs = covariances(cloud)
    u, v, z, cov2d = _screen_space(cloud.means, covs, view, opts.dilation)
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    opacity = cloud.opacities
    front = z > opts.z_near
    singular = front & ~(det >= SINGULAR_DET)
    # A pixel can only contribute where opacity*exp(-q/2) >= alpha_min, i.e. inside
    # the ellipse q <= 2 ln(opacity/alpha_min); its bounding box is the support.
    with np.errstate(divide="ignore", invalid="ignore"):
        level = 2.0 * np.log(opacity / opts.alpha_min)
        hx = np.sqrt(np.maximum(level * a, 0.0)) * (1 + 1e-6) + 1e-6
        hy = np.sqrt(np.maximum(level * c, 0.0)) * (1 + 1e-6) + 1e-6
        x0 = np.ceil(u - hx)
        x1 = np.floor(u + hx)
        y0 = np.ceil(v - hy)
        y1 = np.floor(v + hy)
    x0 = np.clip(x0, 0, view.width - 1)
    x1 = np.clip(x1, -1, view.width - 1)
    y0 = np.clip(y0, 0, view.height - 1)
    y1 = np.clip(y1, -1, view.height - 1)
    visible = front & ~singular & (level >= 0) & np.isfinite(u) & np.isfinite(v)
    with np.errstate(invalid="ignore"):
        visible &= (x0 <= x1) & (y0 <= y1)
    stats.skipped_singular = int(np.count_nonzero(singular))
    stats.culled = int(n - np.count_nonzero(visible) - stats.skipped_singular)
    idx = np.flatnonzero(visible)
    a, b, c, det = a[idx], b[idx], c[idx], det[idx]
    conic = np.column_stack([c / det, -b / det, a / det])
    if len(idx):
        dirs = cloud.means[idx] - view.center
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        color = np.einsum("nck,nk->nc", cloud.sh[idx], sh_basis(dirs))
        color = np.clip(color + 0.5, 0.0, 1.0)
    else:
        color = np.zeros((0, 3))
    label = np.searchsorted(planes, cloud.object_ids[idx]).astype(np.int32)
    rect = np.column_stack([x0[idx], x1[idx], y0[idx], y1[idx]]).astype(np.int64)
    return _Projected(idx, u[idx], v[idx], conic, z[idx], opacity[idx].astype(np.float64), color, label, rect)


def _bin_tiles(p: _Projected, n_tx: int, n_ty: int, tile: int):
    """Sorted (tile, depth, splat) pairs and per-tile [start, end) ranges."""
    tx0 = p.rect[:, 0] // tile
    tx1 = p.rect[:, 1] // tile
    ty0 = p.rect[:, 2] // tile
    ty1 = p.rect[:, 3] // tile
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(counts)), counts)
    offset = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    tx = tx0[owner] + offset % nx[owner]
    ty = ty0[owner] + offset // nx[owner]
    tile_id = ty * n_tx + tx
    order = np.lexsort((p.index[owner], p.depth[owner], tile_id))
    sorted_tiles = tile_id[order]
    sorted_splats = owner[order]
    bounds = np.searchsorted(sorted_tiles, np.arange(n_tx * n_ty + 1))
    return sorted_splats.astype(np.int64), bounds.astype(np.int64)


@numba.njit(nogil=True, cache=True)
def _blend_tiles(
    tiles, bounds, splats, u, v, conic, depth, opacity, color, label,
    width, height, tile, n_tx, alpha_min, alpha_max, t_min,
    rgb, alpha, depth_acc, obj_w,
):  # fmt: skip
    for t in tiles:
        start = bounds[t]
        end = bounds[t + 1]
        px0 = (t % n_tx) * tile
        py0 = (t // n_tx) * tile
        for py in range(py0, min(py0 + tile, height)):
            for px in range(px0, min(px0 + tile, width)):
                trans = 1.0
                r = 0.0
                g = 0.0
                bl = 0.0
                d = 0.0
                for k in range(start, end):
                    s = splats[k]
                    dx = px - u[s]
                    dy = py - v[s]
                    power = -0.5 * (conic[s, 0] * dx * dx + conic[s, 2] * dy * dy) - conic[s, 1] * dx * dy
                    if power > 0.0:
                        continue
                    al = opacity[s] * math.exp(power)
                    if al > alpha_max:
                        al = alpha_max
                    if al < alpha_min:
                        continue
                    w = al * trans
                    r += color[s, 0] * w
                    g += color[s, 1] * w
                    bl += color[s, 2] * w
                    d += depth[s] * w
                    obj_w[label[s], py, px] += w
                    trans *= 1.0 - al
                    if trans < t_min:
                        break
                rgb[py, px, 0] = r
                rgb[py, px, 1] = g
                rgb[py, px, 2] = bl
                alpha[py, px] = 1.0 - trans
                depth_acc[py, px] = d


def render(cloud: GaussianCloud, view: CameraView, opts: RenderOptions | None = None) -> RenderOutput:
    """Render ``cloud`` from ``view``; deterministic regardless of ``opts.workers``."""
    opts = opts or RenderOptions()
    h, w, tile = view.height, view.width, opts.tile_size
    planes = np.unique(cloud.object_ids).astype(np.int32) if len(cloud) else np.zeros(0, dtype=np.int32)
    stats = RenderStats()
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    depth_acc = np.zeros((h, w))
    obj_w = np.zeros((max(len(planes), 1), h, w))
    p = _project_cloud(cloud, view, opts, planes, stats)
    n_tx = (w + tile - 1) // tile
    n_ty = (h + tile - 1) // tile
    if len(p.index):
        splats, bounds = _bin_tiles(p, n_tx, n_ty, tile)
        counts = np.diff(bounds)
        active = np.flatnonzero(counts > 0).astype(np.int64)
        stats.tiles_touched = len(active)
        stats.tile_splat_pairs = len(splats)
        # Heaviest tiles first, dealt round-robin, keeps workers balanced.
        active = active[np.argsort(-counts[active], kind="stable")]
        nw = max(1, min(opts.workers, len(active)))
        args = (
            bounds, splats, p.u, p.v, np.ascontiguousarray(p.conic), p.depth, p.opacity,
            np.ascontiguousarray(p.color), p.label, w, h, tile, n_tx,
            opts.alpha_min, opts.alpha_max, opts.t_min, rgb, alpha, depth_acc, obj_w,
        )  # fmt: skip
        if nw == 1:
            _blend_tiles(active, *args)
        else:
            with ThreadPoolExecutor(nw) as pool:
                list(pool.map(lambda chunk: _blend_tiles(chunk, *args), [active[i::nw] for i in range(nw)]))
    depth = np.zeros((h, w))
    fg = alpha >= opts.bg_alpha
    depth[fg] = depth_acc[fg] / alpha[fg]
    if not len(planes):
        obj_w = obj_w[:0]
    return RenderOutput(rgb, depth, alpha, obj_w, planes, stats)


def render_silhouette(cloud: GaussianCloud, view: CameraView, opts: RenderOptions | None = None) -> NDArray[np.bool_]:
    """Amodal mask of a single-object cloud: coverage >= 0.5 when rendered alone."""
    if len(np.unique(cloud.object_ids)) > 1:
        raise PreconditionError("silhouette cloud must contain exactly one object id")
    if not len(cloud):
        return np.zeros((view.height, view.width), dtype=bool)
    out = render(cloud, view, opts)
    return out.alpha >= BG_ALPHA


def visibility_masks(output: RenderOutput, bg_alpha: float = BG_ALPHA) -> dict[int, NDArray[np.bool_]]:
    """Assign each covered pixel to the object with the largest blend weight.

    Ties go to the lower object id; pixels with coverage below ``bg_alpha`` stay
    unassigned.
    """
    h, w = output.alpha.shape
    if not len(output.object_ids):
        return {}
    winner = np.argmax(output.object_weight, axis=0)
    covered = output.alpha >= bg_alpha
    return {int(oid): covered & (winner == k) for k, oid in enumerate(output.object_ids)}
