"""Scene assembly, camera trajectories, rendering and annotation.

A manifest names an environment asset, object assets with instance counts, a
camera and the dataset size. Each scene draws its own generators from
``SeedSequence(seed, spawn_key=(scene_index, stream))``: stream 0 drives
object counts, drop poses and nothing else, stream 1 drives the camera
trajectory. A scene therefore depends only on (seed, scene_index), never on
which worker built it or what ran before.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Annotated, Literal, Sequence, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import quat
from .bop_io import FrameRecord, GtObject, SceneWriter, encode_rgb, write_json, write_models_info
from .compose import RigidTransform, merge_clouds, transform_cloud
from .errors import ConfigurationError, PreconditionError, SceneError, SplatSynthError
from .geometry import GeometryParams, TriangleMesh, build_geometric_entity, environment_mesh, icosphere, load_mesh
from .physics import (
    DEFAULT_MASS,
    BodyTrajectory,
    ConvexShape,
    Environment,
    PhysicsParams,
    World,
    simulate_until_settled,
    spawn_drop,
)
from .raster import CameraView, RenderOptions, RenderOutput, render, render_silhouette, visibility_masks
from .splat_model import GaussianCloud, load_splat_ply

log = logging.getLogger(__name__)

ENV_LABEL = 0
STREAM_PLACEMENT = 0
STREAM_CAMERA = 1


# ------------------------------------------------------------------ manifest


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AssetRef(_Strict):
    splat: str
    mesh: str | None = None
    alpha: float | None = Field(default=None, gt=0)
    smooth_iters: int = Field(default=10, ge=0)
    target_tris: int = Field(default=500, ge=4)


class ObjectSpec(_Strict):
    asset: AssetRef
    object_id: int = Field(ge=1)
    count_min: int = Field(default=1, ge=1)
    count_max: int = Field(default=1, ge=1)
    mass: float = Field(default=DEFAULT_MASS, gt=0)

    @model_validator(mode="after")
    def _counts(self):
        if self.count_max < self.count_min:
            raise ValueError("count_max must be >= count_min")
        return self


class HemispherePoses(_Strict):
    kind: Literal["hemisphere"] = "hemisphere"
    radius: float = Field(gt=0)
    elevation_deg: tuple[float, float] = (20.0, 70.0)
    count: int | None = Field(default=None, ge=2)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    level: int = Field(default=2, ge=0, le=5)

    @field_validator("elevation_deg")
    @classmethod
    def _range(cls, v):
        if not (-90.0 <= v[0] <= v[1] <= 90.0):
            raise ValueError("elevation range must satisfy -90 <= lo <= hi <= 90")
        return v


class FilePoses(_Strict):
    kind: Literal["file"] = "file"
    path: str


class CameraSpec(_Strict):
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    poses: Annotated[Union[HemispherePoses, FilePoses], Field(discriminator="kind")]


class ModeSpec(_Strict):
    kind: Literal["static", "dynamic"] = "static"
    frame_stride: int = Field(default=8, ge=1)


class PhysicsOverrides(_Strict):
    dt: float | None = Field(default=None, gt=0)
    gravity: tuple[float, float, float] | None = None
    friction: float | None = Field(default=None, ge=0)
    restitution: float | None = Field(default=None, ge=0, le=1)
    iterations: int | None = Field(default=None, ge=1)
    max_time: float | None = Field(default=None, gt=0)
    settle_steps: int | None = Field(default=None, ge=1)


class RenderSpec(_Strict):
    tile_size: int = Field(default=16, ge=1)
    workers: int = Field(default=1, ge=1)


class SceneManifest(_Strict):
    environment: AssetRef
    objects: list[ObjectSpec] = []
    camera: CameraSpec
    scenes: int = Field(ge=1)
    views_per_scene: int = Field(ge=1)
    k_keys: int = Field(default=4, ge=2)
    mode: ModeSpec = ModeSpec()
    seed: int = Field(ge=0, le=2**64 - 1)
    physics: PhysicsOverrides = PhysicsOverrides()
    drop_region: tuple[float, float, float, float] | None = None
    depth_scale: float = Field(default=0.1, gt=0)
    render: RenderSpec = RenderSpec()

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"object_id values must be unique, got {ids}")
        return self

    def physics_params(self) -> PhysicsParams:
        changes = {k: v for k, v in self.physics.model_dump().items() if v is not None}
        return replace(PhysicsParams(), **changes)

    def camera_template(self) -> CameraView:
        c = self.camera
        try:
            return CameraView(c.fx, c.fy, c.cx, c.cy, c.width, c.height)
        except PreconditionError as exc:
            raise ConfigurationError(f"camera: {exc}") from None

    def resolved(self, base_dir: str | os.PathLike) -> "SceneManifest":
        """Copy with every relative asset or pose path made absolute against ``base_dir``."""
        base = Path(base_dir).resolve()

        def fix(p: str | None) -> str | None:
            return None if p is None else str((base / p).resolve())

        def fix_ref(r: AssetRef) -> AssetRef:
            return r.model_copy(update={"splat": fix(r.splat), "mesh": fix(r.mesh)})

        poses = self.camera.poses
        if isinstance(poses, FilePoses):
            poses = poses.model_copy(update={"path": fix(poses.path)})
        return self.model_copy(update={
            "environment": fix_ref(self.environment),
            "objects": [o.model_copy(update={"asset": fix_ref(o.asset)}) for o in self.objects],
            "camera": self.camera.model_copy(update={"poses": poses}),
        })


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_manifest(data: dict, base_dir: str | os.PathLike = ".") -> SceneManifest:
    try:
        m = SceneManifest.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid manifest: {_format_validation(exc)}") from None
    return m.resolved(base_dir)


def load_manifest(path: str | os.PathLike) -> SceneManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"manifest not found: {path}") from None
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: manifest must be a JSON object")
    return parse_manifest(data, path.parent)


def manifest_echo(m: SceneManifest) -> dict:
    """Resolved manifest minus settings that must not change the output (worker counts)."""
    d = m.model_dump(mode="json")
    d["render"].pop("workers", None)
    return d


# -------------------------------------------------------------------- assets


@dataclass(eq=False)
class PreparedObject:
    spec: ObjectSpec
    cloud: GaussianCloud
    mesh: TriangleMesh
    shape: ConvexShape


@dataclass(eq=False)
class PreparedAssets:
    env_cloud: GaussianCloud
    env_mesh: TriangleMesh
    objects: list[PreparedObject]

    def meshes_by_obj_id(self) -> dict[int, TriangleMesh]:
        return {o.spec.object_id: o.mesh for o in self.objects}


def _load_cloud(path: str) -> GaussianCloud:
    if not Path(path).is_file():
        raise ConfigurationError(f"asset not found: {path}")
    return load_splat_ply(path)


def prepare_assets(m: SceneManifest) -> PreparedAssets:
    """Load splat clouds and geometric entities (building meshes that are not given)."""
    env_cloud = _load_cloud(m.environment.splat)
    if m.environment.mesh:
        env_mesh = load_mesh(m.environment.mesh)
    else:
        env_mesh = environment_mesh(env_cloud, m.environment.alpha)
    objects = []
    for spec in m.objects:
        cloud = _load_cloud(spec.asset.splat)
        if spec.asset.mesh:
            mesh = load_mesh(spec.asset.mesh)
        else:
            params = GeometryParams(alpha=spec.asset.alpha, smooth_iters=spec.asset.smooth_iters,
                                    target_tris=spec.asset.target_tris)
            mesh = build_geometric_entity(cloud, params)
        objects.append(PreparedObject(spec, cloud, mesh, ConvexShape.from_mesh(mesh)))
    return PreparedAssets(env_cloud, env_mesh, objects)


# -------------------------------------------------------------- camera poses


def look_at(eye: NDArray, target: NDArray, up: NDArray = np.array([0.0, 0.0, 1.0])) -> RigidTransform:
    """World-to-camera transform of a camera at ``eye`` facing ``target``.

    OpenCV axes: +z forward, +x right, +y down.
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    nz = np.linalg.norm(z)
    if nz == 0:
        raise PreconditionError("eye and target coincide")
    z /= nz
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [0.0, 1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r_w2c = np.stack([x, y, z])
    return RigidTransform.from_rt(r_w2c, -r_w2c @ eye)


def hemisphere_poses(spec: HemispherePoses) -> list[RigidTransform]:
    """Icosphere vertices inside the elevation band, each looking at the centre."""
    v = icosphere(1.0, spec.level).vertices
    elev = np.degrees(np.arcsin(np.clip(v[:, 2], -1, 1)))
    lo, hi = spec.elevation_deg
    sel = v[(elev >= lo - 1e-9) & (elev <= hi + 1e-9)]
    if len(sel):
        azim = np.arctan2(sel[:, 1], sel[:, 0])
        sel = sel[np.lexsort((azim, sel[:, 2]))]
    if spec.count is not None and spec.count < len(sel):
        sel = sel[np.round(np.linspace(0, len(sel) - 1, spec.count)).astype(int)]
    center = np.asarray(spec.center, dtype=np.float64)
    return [look_at(center + spec.radius * p, center) for p in sel]


def _pose_from_record(rec: dict) -> RigidTransform:
    if "cam_R_w2c" in rec:
        r = np.asarray(rec["cam_R_w2c"], dtype=np.float64).reshape(3, 3)
        return RigidTransform.from_rt(r, np.asarray(rec["cam_t_w2c"], dtype=np.float64) / 1000.0)
    return RigidTransform(quat.normalize(np.asarray(rec["q"], dtype=np.float64)), rec["t"])


def load_pose_file(path: str | os.PathLike) -> list[RigidTransform]:
    """World-to-camera poses from JSON.

    Accepts a list, or a dict keyed by frame id (a BOP ``scene_camera.json``),
    of records holding either ``cam_R_w2c`` + ``cam_t_w2c`` (mm) or ``q`` + ``t`` (m).
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"pose file not found: {path}") from None
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if isinstance(data, dict):
        records = [data[k] for k in sorted(data, key=lambda k: int(k))]
    else:
        records = list(data)
    try:
        return [_pose_from_record(r) for r in records]
    except (KeyError, TypeError, ValueError, PreconditionError) as exc:
        raise ConfigurationError(f"{path}: malformed pose record ({exc})") from None


def pose_set(m: SceneManifest) -> list[RigidTransform]:
    poses = m.camera.poses
    out = hemisphere_poses(poses) if isinstance(poses, HemispherePoses) else load_pose_file(poses.path)
    if len(out) < 2:
        raise ConfigurationError(f"camera pose set has {len(out)} poses; at least 2 are required")
    return out


def chain_nearest(points: NDArray, start: int) -> list[int]:
    """Greedy nearest-neighbour ordering from ``start``; ties go to the lower index."""
    order = [start]
    left = set(range(len(points))) - {start}
    while left:
        cur = points[order[-1]]
        nxt = min(left, key=lambda j: (float(np.sum((points[j] - cur) ** 2)), j))
        order.append(nxt)
        left.remove(nxt)
    return order


def sample_trajectory(
    poses: Sequence[RigidTransform],
    k_keys: int,
    n_frames: int,
    rng: np.random.Generator,
    camera: CameraView,
) -> list[CameraView]:
    """Camera path through ``k_keys`` random poses, ``n_frames`` views evenly spaced by arc length.

    Keys are ordered by nearest-neighbour chaining from a random start.
    Positions interpolate linearly, orientations by slerp; every view keeps
    ``camera``'s intrinsics.
    """
    if len(poses) < 2:
        raise ConfigurationError(f"pose set has {len(poses)} poses; at least 2 are required")
    if k_keys < 2 or k_keys > len(poses):
        raise ConfigurationError(f"k_keys={k_keys} must lie in [2, {len(poses)}]")
    if n_frames < k_keys:
        raise ConfigurationError(f"n_frames={n_frames} must be >= k_keys={k_keys}")
    picked = [int(i) for i in rng.choice(len(poses), size=k_keys, replace=False)]
    pos = np.array([poses[i].inverse().translation for i in picked])
    order = chain_nearest(pos, int(rng.integers(k_keys)))
    w2c = [poses[picked[j]] for j in order]
    pos = pos[order]

    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    if seg.sum() <= 0:
        seg = np.ones_like(seg)  # coincident positions: space by key index
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return [camera.with_pose(_interp(w2c, cum, s)) for s in np.linspace(0.0, cum[-1], n_frames)]


def _interp(w2c: Sequence[RigidTransform], cum: NDArray, s: float) -> RigidTransform:
    """World-to-camera pose at arc length ``s``; key poses are returned unchanged."""
    if s <= cum[0]:
        return w2c[0]
    if s >= cum[-1]:
        return w2c[-1]
    i = int(np.searchsorted(cum, s, side="right")) - 1
    t = (s - cum[i]) / (cum[i + 1] - cum[i])
    if t == 0.0:
        return w2c[i]
    a, b = w2c[i].inverse(), w2c[i + 1].inverse()
    p = (1 - t) * a.translation + t * b.translation
    return RigidTransform(quat.normalize(quat.slerp(a.rotation, b.rotation, t)), p).inverse()


# ------------------------------------------------------------------- scenes


@dataclass(eq=False)
class Instance:
    label: int  # render plane id, 1..M within the scene
    obj_id: int  # dataset object id
    asset: int  # index into PreparedAssets.objects
    trajectory: BodyTrajectory

    def pose_at(self, sample: int) -> RigidTransform:
        return self.trajectory.pose(min(sample, len(self.trajectory.times) - 1))


@dataclass(eq=False)
class Scene:
    index: int
    instances: list[Instance]
    views: list[CameraView]
    samples: list[int]  # trajectory sample index per frame
    warnings: list[str] = field(default_factory=list)

    def object_poses(self, frame: int) -> dict[int, RigidTransform]:
        return {inst.label: inst.pose_at(self.samples[frame]) for inst in self.instances}


def scene_rng(seed: int, scene_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(scene_index, stream)))


def default_drop_region(env_mesh: TriangleMesh) -> tuple[float, float, float, float]:
    """Central half of the environment's xy extent."""
    lo, hi = env_mesh.bounds()
    c, h = 0.5 * (lo + hi), 0.25 * (hi - lo)
    return (float(c[0] - h[0]), float(c[1] - h[1]), float(c[0] + h[0]), float(c[1] + h[1]))


def build_scene(m: SceneManifest, scene_index: int, assets: PreparedAssets) -> Scene:
    """Drop objects, simulate to rest and sample the camera path for one scene."""
    if not 0 <= scene_index < m.scenes:
        raise ConfigurationError(f"scene index {scene_index} outside [0, {m.scenes})")
    rng = scene_rng(m.seed, scene_index, STREAM_PLACEMENT)
    entries = []
    for a, obj in enumerate(assets.objects):
        n = int(rng.integers(obj.spec.count_min, obj.spec.count_max + 1))
        entries.extend([a] * n)
    warnings: list[str] = []
    instances: list[Instance] = []
    if entries:
        shapes = [(label, assets.objects[a].shape, assets.objects[a].spec.mass) for label, a in enumerate(entries, 1)]
        region = m.drop_region or default_drop_region(assets.env_mesh)
        env = Environment(assets.env_mesh)
        try:
            bodies = spawn_drop(shapes, region, env, rng)
            world = World(env, bodies, m.physics_params())
            trajs = simulate_until_settled(world)
        except SplatSynthError as exc:
            raise SceneError(scene_index, str(exc)) from None
        for label, (a, tr) in enumerate(zip(entries, trajs), 1):
            if tr.escaped:
                warnings.append(f"instance {label} (obj_id {assets.objects[a].spec.object_id}) escaped; excluded")
                continue
            if not tr.settled and m.mode.kind == "static":
                warnings.append(f"instance {label} did not settle within the time limit")
            instances.append(Instance(label, assets.objects[a].spec.object_id, a, tr))

    cam_rng = scene_rng(m.seed, scene_index, STREAM_CAMERA)
    poses = pose_set(m)
    n = m.views_per_scene
    template = m.camera_template()
    if n == 1:
        views = [template.with_pose(poses[int(cam_rng.integers(len(poses)))])]
    else:
        k = max(2, min(m.k_keys, n, len(poses)))
        views = sample_trajectory(poses, k, n, cam_rng, template)
    if m.mode.kind == "static":
        samples = [np.iinfo(np.int64).max] * n  # clamped to the final sample
    else:
        samples = [f * m.mode.frame_stride for f in range(n)]
    for w in warnings:
        log.warning("scene %d: %s", scene_index, w)
    return Scene(scene_index, instances, views, samples, warnings)


def scene_cloud(scene: Scene, frame: int, assets: PreparedAssets) -> GaussianCloud:
    """Environment (label 0) plus each instance's cloud at its pose for ``frame``."""
    poses = scene.object_poses(frame)
    parts = [(assets.env_cloud, ENV_LABEL)]
    parts += [(transform_cloud(assets.objects[i.asset].cloud, poses[i.label]), i.label) for i in scene.instances]
    return merge_clouds(parts)


# --------------------------------------------------------------- annotation


@dataclass(eq=False)
class ObjectAnnotation:
    label: int
    obj_id: int
    object_to_world: RigidTransform
    model_to_camera: RigidTransform
    bbox_amodal: list[int]
    bbox_visible: list[int]
    bbox3d: NDArray[np.float64]  # 8 x 2 px
    px_count_all: int
    px_count_valid: int
    px_count_visib: int
    visib_fract: float
    mask: NDArray[np.bool_]
    mask_visib: NDArray[np.bool_]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "obj_id": self.obj_id,
            "object_to_world": self.object_to_world.to_dict(),
            "model_to_camera": self.model_to_camera.to_dict(),
            "bbox2d_amodal": self.bbox_amodal,
            "bbox2d_visible": self.bbox_visible,
            "bbox3d": [[float(a), float(b)] for a, b in self.bbox3d],
            "px_count_all": self.px_count_all,
            "px_count_valid": self.px_count_valid,
            "px_count_visib": self.px_count_visib,
            "visib_fract": self.visib_fract,
        }


@dataclass(eq=False)
class FrameAnnotation:
    scene_id: int
    frame_id: int
    world_to_camera: RigidTransform
    objects: list[ObjectAnnotation]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "frame_id": self.frame_id,
            "world_to_camera": self.world_to_camera.to_dict(),
            "objects": [o.to_dict() for o in self.objects],
        }


def mask_bbox(mask: NDArray[np.bool_]) -> list[int]:
    """Tight [x, y, w, h] of a mask; [-1, -1, -1, -1] when empty."""
    ys, xs = np.nonzero(mask)
    if not len(xs):
        return [-1, -1, -1, -1]
    x0, y0 = int(xs.min()), int(ys.min())
    return [x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1]


def box_corners(mesh: TriangleMesh) -> NDArray[np.float64]:
    lo, hi = mesh.bounds()
    return np.array([[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)])


def annotate_frame(
    output: RenderOutput,
    silhouettes: dict[int, NDArray[np.bool_]],
    poses: dict[int, tuple[int, RigidTransform]],
    view: CameraView,
    meshes: dict[int, TriangleMesh],
    scene_id: int = 0,
    frame_id: int = 0,
) -> FrameAnnotation:
    """Per-object boxes, counts and masks for one rendered frame.

    ``poses`` maps render label -> (obj_id, object_to_world); ``meshes`` maps
    label -> geometric entity. The visible mask is the occlusion-aware
    assignment restricted to the amodal silhouette. Objects with no visible
    pixel are omitted.
    """
    vis = visibility_masks(output)
    empty = np.zeros_like(output.alpha, dtype=bool)
    objects = []
    for label in sorted(poses):
        obj_id, o2w = poses[label]
        sil = silhouettes[label]
        mv = vis.get(label, empty) & sil
        n_all, n_vis = int(sil.sum()), int(mv.sum())
        if n_vis == 0:
            continue
        m2c = view.world_to_camera @ o2w
        corners = view.with_pose(m2c).project_points(box_corners(meshes[label]))
        objects.append(ObjectAnnotation(
            label, obj_id, o2w, m2c, mask_bbox(sil), mask_bbox(mv), corners,
            n_all, int((sil & (output.depth > 0)).sum()), n_vis, n_vis / n_all, sil, mv,
        ))  # fmt: skip
    return FrameAnnotation(scene_id, frame_id, view.world_to_camera, objects)


@dataclass(eq=False)
class RenderedFrame:
    output: RenderOutput
    annotation: FrameAnnotation
    view: CameraView


def render_options(m: SceneManifest, workers: int | None = None) -> RenderOptions:
    return RenderOptions(tile_size=m.render.tile_size, workers=workers or m.render.workers)


def render_frame(scene: Scene, frame: int, assets: PreparedAssets, opts: RenderOptions | None = None) -> RenderedFrame:
    if not 0 <= frame < len(scene.views):
        raise ConfigurationError(f"frame {frame} outside [0, {len(scene.views)})")
    view = scene.views[frame]
    poses = scene.object_poses(frame)
    out = render(scene_cloud(scene, frame, assets), view, opts)
    sils, labels, meshes = {}, {}, {}
    for inst in scene.instances:
        obj = assets.objects[inst.asset]
        sils[inst.label] = render_silhouette(transform_cloud(obj.cloud, poses[inst.label]).with_object_id(inst.label), view, opts)
        labels[inst.label] = (inst.obj_id, poses[inst.label])
        meshes[inst.label] = obj.mesh
    ann = annotate_frame(out, sils, labels, view, meshes, scene.index, frame)
    return RenderedFrame(out, ann, view)


def frame_record(rf: RenderedFrame) -> FrameRecord:
    w2c = rf.view.world_to_camera
    objs = [
        GtObject(o.obj_id, o.model_to_camera.rotation_matrix, o.model_to_camera.translation, o.mask, o.mask_visib,
                 o.bbox_amodal, o.bbox_visible, o.px_count_all, o.px_count_valid, o.px_count_visib, o.visib_fract,
                 o.bbox3d)
        for o in rf.annotation.objects
    ]
    return FrameRecord(rf.annotation.frame_id, rf.view.K, encode_rgb(rf.output.rgb), rf.output.depth, objs,
                       w2c.rotation_matrix, w2c.translation)


# --------------------------------------------------------------- generation


def generate_scene(m: SceneManifest, scene_index: int, assets: PreparedAssets, root: str | os.PathLike,
                   opts: RenderOptions | None = None) -> dict:
    """Build, render and write one scene; returns a summary dict (never raises for scene errors)."""
    t0 = time.perf_counter()
    sdir = Path(root) / f"{scene_index:06d}"
    try:
        scene = build_scene(m, scene_index, assets)
        writer = SceneWriter(root, scene_index, m.depth_scale)
        for f in range(len(scene.views)):
            writer.add_frame(frame_record(render_frame(scene, f, assets, opts)))
        writer.close()
    except SplatSynthError as exc:
        shutil.rmtree(sdir, ignore_errors=True)
        msg = str(exc) if isinstance(exc, SceneError) else str(SceneError(scene_index, str(exc)))
        log.error("%s", msg)
        return {"scene": scene_index, "ok": False, "error": msg, "seconds": time.perf_counter() - t0}
    return {"scene": scene_index, "ok": True, "frames": len(scene.views), "instances": len(scene.instances),
            "warnings": scene.warnings, "seconds": time.perf_counter() - t0}


_WORKER: dict = {}


def _init_worker(m: SceneManifest, assets: PreparedAssets, root: str, opts: RenderOptions) -> None:
    _WORKER.update(m=m, assets=assets, root=root, opts=opts)


def _run_scene(index: int) -> dict:
    w = _WORKER
    return generate_scene(w["m"], index, w["assets"], w["root"], w["opts"])


@dataclass
class GenerationReport:
    scenes: list[dict]
    wall_seconds: float
    workers: int

    @property
    def failed(self) -> list[dict]:
        return [s for s in self.scenes if not s["ok"]]

    @property
    def frames(self) -> int:
        return sum(s.get("frames", 0) for s in self.scenes)

    def to_dict(self) -> dict:
        return {
            "scenes": self.scenes,
            "n_scenes": len(self.scenes),
            "n_failed": len(self.failed),
            "frames": self.frames,
            "wall_seconds": self.wall_seconds,
            "frames_per_second": self.frames / self.wall_seconds if self.wall_seconds > 0 else 0.0,
            "workers": self.workers,
        }


def generate(
    m: SceneManifest,
    out_dir: str | os.PathLike,
    workers: int = 1,
    scene_indices: Sequence[int] | None = None,
    assets: PreparedAssets | None = None,
) -> GenerationReport:
    """Write the dataset in BOP layout; scenes run on ``workers`` processes.

    Output bytes do not depend on ``workers``. ``generation_report.json``
    holds timing and is the only file that differs between reruns.
    """
    t0 = time.perf_counter()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    assets = assets or prepare_assets(m)
    indices = list(range(m.scenes)) if scene_indices is None else [int(i) for i in scene_indices]
    bad = [i for i in indices if not 0 <= i < m.scenes]
    if bad:
        raise ConfigurationError(f"scene indices {bad} outside [0, {m.scenes})")
    write_json(root / "config.json", manifest_echo(m))
    write_models_info(root, assets.meshes_by_obj_id())
    opts = render_options(m)
    workers = max(1, min(int(workers), len(indices) or 1))
    if workers == 1:
        results = [generate_scene(m, i, assets, root, opts) for i in indices]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(m, assets, str(root), opts)) as pool:
            results = list(pool.map(_run_scene, indices))
    report = GenerationReport(results, time.perf_counter() - t0, workers)
    write_json(root / "generation_report.json", report.to_dict())
    return report
