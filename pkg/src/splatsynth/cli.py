"""Command-line entry point.

Subcommands: make-asset, prep-asset, generate, render, validate. Exit codes:
0 success, 1 operational failure, 2 usage or configuration error. The log
level comes from ``SPLATSYNTH_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from . import __version__
from .bop_io import canonical_json, encode_depth, encode_mask, encode_rgb, validate_dataset, write_json, write_png
from .errors import ConfigurationError, InvalidAssetError, PreconditionError, SplatSynthError
from .geometry import GeometryParams, build_geometric_entity, write_obj, write_stl
from .physics import DEFAULT_MASS, ConvexShape
from .scene_gen import build_scene, generate, load_manifest, prepare_assets, render_frame, render_options
from .splat_model import AssetParams, generate_test_asset, load_splat_ply, save_splat_ply

log = logging.getLogger("splatsynth")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
LOG_ENV = "SPLATSYNTH_LOG_LEVEL"


class UsageError(Exception):
    pass


def _floats(text: str, n: tuple[int, ...]) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(vals) not in n:
        raise argparse.ArgumentTypeError(f"expected {' or '.join(map(str, n))} values, got {len(vals)}")
    return vals


def _emit(summary: dict, human: str) -> None:
    sys.stdout.write(canonical_json(summary))
    sys.stderr.write(human + "\n")


# ------------------------------------------------------------------ commands


def cmd_make_asset(args) -> int:
    params = AssetParams(
        extent=args.extent if len(args.extent) > 1 else args.extent[0],
        n=args.n,
        color=args.color,
        center=args.center,
        opacity=args.opacity,
    )
    cloud = generate_test_asset(args.kind, params, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    header = save_splat_ply(cloud, args.out)
    _emit({"out": str(args.out), "splats": len(cloud), "kind": args.kind, "seed": args.seed, "header": header},
          f"wrote {len(cloud)} splats to {args.out}")
    return EXIT_OK


def cmd_prep_asset(args) -> int:
    splat = Path(args.splat)
    if not splat.is_file():
        raise UsageError(f"splat file not found: {splat}")
    cloud = load_splat_ply(splat)
    params = GeometryParams(alpha=args.alpha, smooth_iters=args.smooth_iters, target_tris=args.target_tris)
    mesh = build_geometric_entity(cloud, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = splat.stem
    write_stl(mesh, out / f"{stem}.stl")
    write_obj(mesh, out / f"{stem}.obj")
    shape = ConvexShape.from_mesh(mesh)
    descriptor = {
        "asset": {
            "splat": os.path.relpath(splat.resolve(), out.resolve()),
            "mesh": f"{stem}.obj",
            "smooth_iters": args.smooth_iters,
            "target_tris": args.target_tris,
            **({"alpha": args.alpha} if args.alpha is not None else {}),
        },
        "mass": args.mass,
        "bounding_radius": shape.bounding_radius,
        "n_triangles": mesh.n_triangles,
        "watertight": mesh.is_watertight(),
        "volume": mesh.volume(),
    }
    write_json(out / f"{stem}.asset.json", descriptor)
    _emit(descriptor, f"{stem}: {mesh.n_triangles} triangles, bounding radius {shape.bounding_radius:.4f} m")
    return EXIT_OK


def cmd_generate(args) -> int:
    m = load_manifest(args.manifest)
    t0 = time.perf_counter()
    report = generate(m, args.out, workers=args.workers)
    wall = time.perf_counter() - t0
    summary = {
        "scenes": len(report.scenes),
        "frames": report.frames,
        "failed": report.failed,
        "wall_seconds": wall,
        "frames_per_second": report.frames / wall if wall > 0 else 0.0,
        "out": str(args.out),
    }
    human = (f"{len(report.scenes)} scenes, {report.frames} frames, {len(report.failed)} failed, "
             f"{wall:.1f} s ({summary['frames_per_second']:.2f} frames/s)")
    for f in report.failed:
        human += f"\n  {f['error']}"
    _emit(summary, human)
    return EXIT_FAIL if report.failed else EXIT_OK


def render_paths(out: str | os.PathLike) -> dict:
    """Sibling files of a single-frame render rooted at the rgb PNG path."""
    out = Path(out)
    base = out.with_suffix("")
    return {"rgb": out, "depth": Path(f"{base}_depth.png"), "json": Path(f"{base}.json"), "base": base}


def cmd_render(args) -> int:
    m = load_manifest(args.scene)
    if not 0 <= args.scene_index < m.scenes:
        raise UsageError(f"--scene-index {args.scene_index} outside [0, {m.scenes})")
    if not 0 <= args.frame < m.views_per_scene:
        raise UsageError(f"--frame {args.frame} outside [0, {m.views_per_scene})")
    assets = prepare_assets(m)
    scene = build_scene(m, args.scene_index, assets)
    rf = render_frame(scene, args.frame, assets, render_options(m))
    paths = render_paths(args.out)
    paths["rgb"].parent.mkdir(parents=True, exist_ok=True)
    write_png(paths["rgb"], encode_rgb(rf.output.rgb))
    write_png(paths["depth"], encode_depth(rf.output.depth, m.depth_scale))
    for k, o in enumerate(rf.annotation.objects):
        write_png(Path(f"{paths['base']}_mask_{k:06d}.png"), encode_mask(o.mask))
        write_png(Path(f"{paths['base']}_mask_visib_{k:06d}.png"), encode_mask(o.mask_visib))
    ann = rf.annotation.to_dict()
    ann["camera"] = {"cam_K": rf.view.K.ravel().tolist(), "width": rf.view.width, "height": rf.view.height,
                     "depth_scale": m.depth_scale}
    write_json(paths["json"], ann)
    _emit({"rgb": str(paths["rgb"]), "objects": len(rf.annotation.objects), "annotation": str(paths["json"])},
          f"rendered scene {args.scene_index} frame {args.frame}: {len(rf.annotation.objects)} annotated objects")
    return EXIT_OK


def cmd_validate(args) -> int:
    root = Path(args.root)
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    report = validate_dataset(root)
    failed = [c for c in report["checks"] if not c["passed"]]
    human = "all checks passed" if report["passed"] else "\n".join(
        f"FAIL {c['name']}: {c['n_failures']} issue(s); first: {c['failures'][0]}" for c in failed)
    _emit(report, human)
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splatsynth", description="Synthetic 6DoF pose datasets from Gaussian splats.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("make-asset", help="write a procedural splat asset (sphere, box or plane)")
    a.add_argument("--kind", choices=["sphere", "box", "plane"], required=True)
    a.add_argument("--extent", type=lambda s: _floats(s, (1, 2, 3)), default=(0.05,),
                   help="radius, or comma-separated edge lengths in metres")
    a.add_argument("--n", type=int, default=2000, help="number of splats")
    a.add_argument("--color", type=lambda s: _floats(s, (3,)), default=(0.8, 0.2, 0.2))
    a.add_argument("--center", type=lambda s: _floats(s, (3,)), default=(0.0, 0.0, 0.0))
    a.add_argument("--opacity", type=float, default=0.9)
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--out", required=True, help="output PLY path")
    a.set_defaults(func=cmd_make_asset)

    a = sub.add_parser("prep-asset", help="build the low-poly collision mesh of a splat asset")
    a.add_argument("--splat", required=True, help="3DGS PLY file")
    a.add_argument("--alpha", type=float, default=None, help="alpha radius in metres (default: smallest closing multiple of point spacing)")
    a.add_argument("--smooth-iters", type=int, default=10)
    a.add_argument("--target-tris", type=int, default=500)
    a.add_argument("--mass", type=float, default=DEFAULT_MASS)
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(func=cmd_prep_asset)

    a = sub.add_parser("generate", help="generate a BOP dataset from a manifest")
    a.add_argument("--manifest", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--workers", type=int, default=1, help="scene worker processes")
    a.set_defaults(func=cmd_generate)

    a = sub.add_parser("render", help="render one frame of one scene with its annotation")
    a.add_argument("--scene", "--manifest", dest="scene", required=True, help="manifest JSON")
    a.add_argument("--scene-index", type=int, required=True)
    a.add_argument("--frame", type=int, required=True)
    a.add_argument("--out", required=True, help="rgb PNG path; depth, masks and JSON are written beside it")
    a.set_defaults(func=cmd_render)

    a = sub.add_parser("validate", help="check a BOP dataset directory")
    a.add_argument("--root", required=True)
    a.set_defaults(func=cmd_validate)
    return p


def _configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        sys.stderr.write("error: --workers must be >= 1\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, PreconditionError, InvalidAssetError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except SplatSynthError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
