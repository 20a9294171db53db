"""BOP dataset layout: writer and validator.

Layout per scene::

    {root}/{scene_id:06d}/scene_camera.json
                          scene_gt.json
                          scene_gt_info.json
                          rgb/{frame:06d}.png
                          depth/{frame:06d}.png
                          mask/{frame:06d}_{gt:06d}.png
                          mask_visib/{frame:06d}_{gt:06d}.png
    {root}/models_info.json

Rotations are row-major 3x3, translations in millimetres. ``scene_gt_info``
entries carry an extra ``bbox_3d_proj`` key with the 8 projected corners of
the model's bounding box.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from .errors import DatasetWriteError
from .geometry import TriangleMesh

DEFAULT_DEPTH_SCALE = 0.1
PNG_COMPRESS_LEVEL = 6
ORTHO_TOL = 1e-6


# ------------------------------------------------------------------- encoding


def canonical_json(obj: Any) -> str:
    """Sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | os.PathLike, obj: Any) -> None:
    try:
        Path(path).write_text(canonical_json(obj), encoding="utf-8")
    except OSError as exc:
        raise DatasetWriteError(f"{path}: {exc.strerror or exc}") from None


def write_png(path: str | os.PathLike, array: NDArray) -> None:
    """Deterministic PNG: fixed compression, no metadata, no interlacing."""
    arr = np.ascontiguousarray(array)
    ok = (arr.dtype == np.uint16 and arr.ndim == 2) or (arr.dtype == np.uint8 and (arr.ndim == 2 or arr.shape[-1] == 3))
    if not ok:
        raise DatasetWriteError(f"{path}: unsupported image array {arr.dtype} {arr.shape}")
    img = Image.fromarray(arr)  # uint16 -> I;16, uint8 -> L / RGB
    try:
        img.save(path, format="PNG", compress_level=PNG_COMPRESS_LEVEL, optimize=False)
    except OSError as exc:
        raise DatasetWriteError(f"{path}: {exc}") from None


def read_png(path: str | os.PathLike) -> NDArray:
    with Image.open(path) as img:
        return np.array(img)


def encode_rgb(rgb: NDArray) -> NDArray[np.uint8]:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_depth(depth_m: NDArray, depth_scale: float = DEFAULT_DEPTH_SCALE) -> NDArray[np.uint16]:
    """Metres -> uint16 with value * depth_scale = millimetres."""
    q = np.round(np.asarray(depth_m, dtype=np.float64) * 1000.0 / depth_scale)
    if q.size and q.max() > np.iinfo(np.uint16).max:
        raise DatasetWriteError(
            f"depth {float(np.max(depth_m)):.3f} m exceeds the 16-bit range at depth_scale {depth_scale}; "
            "use a larger depth_scale"
        )
    return q.astype(np.uint16)


def decode_depth(stored: NDArray, depth_scale: float = DEFAULT_DEPTH_SCALE) -> NDArray[np.float64]:
    return stored.astype(np.float64) * depth_scale / 1000.0


def encode_mask(mask: NDArray) -> NDArray[np.uint8]:
    return np.where(mask, 255, 0).astype(np.uint8)


def _floats(a: NDArray) -> list[float]:
    return [float(x) for x in np.asarray(a, dtype=np.float64).ravel()]


# ------------------------------------------------------------------- records


@dataclass
class GtObject:
    obj_id: int
    cam_R_m2c: NDArray[np.float64]
    cam_t_m2c_m: NDArray[np.float64]
    mask: NDArray[np.bool_]
    mask_visib: NDArray[np.bool_]
    bbox_obj: list[int]
    bbox_visib: list[int]
    px_count_all: int
    px_count_valid: int
    px_count_visib: int
    visib_fract: float
    bbox_3d_proj: NDArray[np.float64] | None = None


@dataclass
class FrameRecord:
    frame_id: int
    K: NDArray[np.float64]
    rgb: NDArray[np.uint8]
    depth_m: NDArray[np.float64]
    objects: list[GtObject] = field(default_factory=list)
    cam_R_w2c: NDArray[np.float64] | None = None
    cam_t_w2c_m: NDArray[np.float64] | None = None


def gt_entry(o: GtObject) -> dict:
    return {"obj_id": int(o.obj_id), "cam_R_m2c": _floats(o.cam_R_m2c), "cam_t_m2c": _floats(np.asarray(o.cam_t_m2c_m) * 1000.0)}


def gt_info_entry(o: GtObject) -> dict:
    d = {
        "bbox_obj": [int(v) for v in o.bbox_obj],
        "bbox_visib": [int(v) for v in o.bbox_visib],
        "px_count_all": int(o.px_count_all),
        "px_count_valid": int(o.px_count_valid),
        "px_count_visib": int(o.px_count_visib),
        "visib_fract": float(o.visib_fract),
    }
    if o.bbox_3d_proj is not None:
        d["bbox_3d_proj"] = [_floats(p) for p in o.bbox_3d_proj]
    return d


def camera_entry(f: FrameRecord, depth_scale: float) -> dict:
    d = {"cam_K": _floats(f.K), "depth_scale": float(depth_scale)}
    if f.cam_R_w2c is not None:
        d["cam_R_w2c"] = _floats(f.cam_R_w2c)
        d["cam_t_w2c"] = _floats(np.asarray(f.cam_t_w2c_m) * 1000.0)
    return d


# -------------------------------------------------------------------- writers


class SceneWriter:
    """Streams frames of one scene to disk; JSON files are written on close."""

    def __init__(self, root: str | os.PathLike, scene_id: int, depth_scale: float = DEFAULT_DEPTH_SCALE):
        self.dir = Path(root) / f"{scene_id:06d}"
        self.depth_scale = depth_scale
        self.camera: dict[str, dict] = {}
        self.gt: dict[str, list] = {}
        self.gt_info: dict[str, list] = {}
        try:
            for sub in ("rgb", "depth", "mask", "mask_visib"):
                (self.dir / sub).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DatasetWriteError(f"{self.dir}: {exc.strerror or exc}") from None

    def add_frame(self, f: FrameRecord) -> None:
        key = str(int(f.frame_id))
        write_png(self.dir / "rgb" / f"{f.frame_id:06d}.png", f.rgb)
        write_png(self.dir / "depth" / f"{f.frame_id:06d}.png", encode_depth(f.depth_m, self.depth_scale))
        for k, o in enumerate(f.objects):
            write_png(self.dir / "mask" / f"{f.frame_id:06d}_{k:06d}.png", encode_mask(o.mask))
            write_png(self.dir / "mask_visib" / f"{f.frame_id:06d}_{k:06d}.png", encode_mask(o.mask_visib))
        self.camera[key] = camera_entry(f, self.depth_scale)
        self.gt[key] = [gt_entry(o) for o in f.objects]
        self.gt_info[key] = [gt_info_entry(o) for o in f.objects]

    def close(self) -> Path:
        write_json(self.dir / "scene_camera.json", self.camera)
        write_json(self.dir / "scene_gt.json", self.gt)
        write_json(self.dir / "scene_gt_info.json", self.gt_info)
        return self.dir


def write_scene(root: str | os.PathLike, scene_id: int, frames: Iterable[FrameRecord],
                depth_scale: float = DEFAULT_DEPTH_SCALE) -> Path:
    w = SceneWriter(root, scene_id, depth_scale)
    for f in frames:
        w.add_frame(f)
    return w.close()


def model_info(mesh: TriangleMesh) -> dict:
    """Diameter and AABB in millimetres."""
    v = mesh.vertices[np.unique(mesh.triangles)] if len(mesh.triangles) else mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    d = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d))))
    mm = 1000.0
    return {
        "diameter": diameter * mm,
        "min_x": float(lo[0]) * mm, "min_y": float(lo[1]) * mm, "min_z": float(lo[2]) * mm,
        "size_x": float(hi[0] - lo[0]) * mm, "size_y": float(hi[1] - lo[1]) * mm, "size_z": float(hi[2] - lo[2]) * mm,
    }


def write_models_info(root: str | os.PathLike, meshes: Mapping[int, TriangleMesh]) -> None:
    Path(root).mkdir(parents=True, exist_ok=True)
    write_json(Path(root) / "models_info.json", {str(k): model_info(m) for k, m in sorted(meshes.items())})


# ------------------------------------------------------------------ validator

_SCENE_DIR = re.compile(r"^\d{6}$")


class _Report:
    def __init__(self):
        self.checks: dict[str, list[str]] = {}

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        fails = self.checks.setdefault(name, [])
        if not ok:
            fails.append(detail)

    def result(self) -> dict:
        checks = [
            {"name": name, "passed": not fails, "failures": fails[:20], "n_failures": len(fails)}
            for name, fails in self.checks.items()
        ]
        return {"passed": all(c["passed"] for c in checks), "checks": checks}


def _load_json(path: Path, report: _Report):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        report.check("completeness", False, f"missing {path}")
    except (OSError, ValueError) as exc:
        report.check("json_schema", False, f"{path}: {exc}")
    return None


def _is_num_list(x, n: int) -> bool:
    return isinstance(x, list) and len(x) == n and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)


def _schema_ok(camera, gt, info, report: _Report, where: str) -> bool:
    ok = True
    for name, doc in (("scene_camera", camera), ("scene_gt", gt), ("scene_gt_info", info)):
        if not isinstance(doc, dict) or not all(isinstance(k, str) and k.isdigit() for k in doc):
            report.check("json_schema", False, f"{where}/{name}.json: top level must map frame ids to records")
            ok = False
    if not ok:
        return False
    for fid, rec in camera.items():
        good = isinstance(rec, dict) and _is_num_list(rec.get("cam_K"), 9) and isinstance(rec.get("depth_scale", 1.0), (int, float))
        report.check("json_schema", good, f"{where}/scene_camera.json[{fid}]")
        ok &= good
    for fid, recs in gt.items():
        good = isinstance(recs, list) and all(
            isinstance(r, dict) and isinstance(r.get("obj_id"), int) and _is_num_list(r.get("cam_R_m2c"), 9)
            and _is_num_list(r.get("cam_t_m2c"), 3) for r in recs)
        report.check("json_schema", good, f"{where}/scene_gt.json[{fid}]")
        ok &= good
    for fid, recs in info.items():
        good = isinstance(recs, list) and all(
            isinstance(r, dict) and _is_num_list(r.get("bbox_obj"), 4) and _is_num_list(r.get("bbox_visib"), 4)
            and isinstance(r.get("px_count_all"), int) and isinstance(r.get("px_count_visib"), int)
            and isinstance(r.get("visib_fract"), (int, float)) for r in recs)
        report.check("json_schema", good, f"{where}/scene_gt_info.json[{fid}]")
        ok &= good
    return ok


def _validate_scene(sdir: Path, report: _Report) -> None:
    camera = _load_json(sdir / "scene_camera.json", report)
    gt = _load_json(sdir / "scene_gt.json", report)
    info = _load_json(sdir / "scene_gt_info.json", report)
    if camera is None or gt is None or info is None or not _schema_ok(camera, gt, info, report, sdir.name):
        return
    for fid in sorted(gt, key=int):
        frame = int(fid)
        where = f"{sdir.name}/{frame:06d}"
        report.check("completeness", fid in camera, f"{where}: frame missing from scene_camera.json")
        report.check("completeness", fid in info, f"{where}: frame missing from scene_gt_info.json")
        for sub in ("rgb", "depth"):
            p = sdir / sub / f"{frame:06d}.png"
            report.check("completeness", p.is_file(), f"missing {p}")
        entries = gt[fid]
        infos = info.get(fid, [])
        report.check("gt_info_count", len(infos) == len(entries), f"{where}: {len(entries)} gt vs {len(infos)} gt_info")
        for sub in ("mask", "mask_visib"):
            present = sorted((sdir / sub).glob(f"{frame:06d}_*.png")) if (sdir / sub).is_dir() else []
            report.check("mask_count", len(present) == len(entries),
                         f"{where}: {len(present)} {sub} files for {len(entries)} gt entries")
        for k, entry in enumerate(entries):
            r = np.asarray(entry["cam_R_m2c"], dtype=np.float64).reshape(3, 3)
            ortho = np.max(np.abs(r.T @ r - np.eye(3))) <= ORTHO_TOL and abs(np.linalg.det(r) - 1) <= ORTHO_TOL
            report.check("rotation_orthonormal", bool(ortho), f"{where} gt {k}")
            mask_p = sdir / "mask" / f"{frame:06d}_{k:06d}.png"
            visib_p = sdir / "mask_visib" / f"{frame:06d}_{k:06d}.png"
            missing = [p for p in (mask_p, visib_p) if not p.is_file()]
            for p in missing:
                report.check("completeness", False, f"missing {p}")
            if k >= len(infos):
                continue
            gi = infos[k]
            total, vis = gi["px_count_all"], gi["px_count_visib"]
            expect = vis / total if total > 0 else 0.0
            report.check("visib_fract", abs(gi["visib_fract"] - expect) <= 1e-12,
                         f"{where} gt {k}: visib_fract {gi['visib_fract']} != {vis}/{total}")
            if missing:
                continue
            m = read_png(mask_p) > 0
            mv = read_png(visib_p) > 0
            report.check("px_count", int(mv.sum()) == vis, f"{where} gt {k}: px_count_visib {vis} != {int(mv.sum())}")
            report.check("px_count", int(m.sum()) == total, f"{where} gt {k}: px_count_all {total} != {int(m.sum())}")
            report.check("mask_visib_subset", not np.any(mv & ~m), f"{where} gt {k}")


def validate_dataset(root: str | os.PathLike) -> dict:
    """Check layout, schema and annotation arithmetic; returns a per-check report."""
    root = Path(root)
    report = _Report()
    scenes = sorted(p for p in root.iterdir() if p.is_dir() and _SCENE_DIR.match(p.name)) if root.is_dir() else []
    report.check("scenes_found", bool(scenes), f"no scenes found under {root}")
    for sdir in scenes:
        _validate_scene(sdir, report)
    for name in ("completeness", "json_schema", "mask_count", "rotation_orthonormal", "px_count",
                 "visib_fract", "mask_visib_subset", "gt_info_count"):
        report.checks.setdefault(name, [])
    out = report.result()
    out["scenes"] = len(scenes)
    return out
