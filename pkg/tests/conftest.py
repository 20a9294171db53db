from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from splatsynth import quat
from splatsynth.compose import RigidTransform
from splatsynth.raster import CameraView
from splatsynth.sh_math import SH_C0
from splatsynth.splat_model import AssetParams, GaussianCloud, generate_test_asset


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()


def random_transform(rng: np.random.Generator, t_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(quat.random_uniform(rng), rng.uniform(-t_scale, t_scale, 3))


def random_cloud(rng, n, center=(0.0, 0.0, 2.0), spread=0.5, scale=(0.005, 0.04), object_id=0, sh_rest=0.3):
    means = np.asarray(center) + rng.uniform(-spread, spread, (n, 3))
    scales = rng.uniform(scale[0], scale[1], (n, 3))
    rots = quat.random_uniform(rng, n)
    opac = rng.uniform(0.2, 1.0, n)
    sh = np.zeros((n, 3, 16))
    sh[:, :, 0] = (rng.uniform(0, 1, (n, 3)) - 0.5) / SH_C0
    sh[:, :, 1:] = sh_rest * rng.standard_normal((n, 3, 15))
    return GaussianCloud(means, scales, rots, opac, sh, object_ids=np.full(n, object_id))


def color_sh(rgb) -> np.ndarray:
    sh = np.zeros((3, 16))
    sh[:, 0] = (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0
    return sh


def single_splat_cloud(means, scales, opacities, colors, object_ids=None) -> GaussianCloud:
    means = np.atleast_2d(means)
    n = len(means)
    return GaussianCloud(
        means,
        np.broadcast_to(np.asarray(scales, dtype=float), (n, 3)),
        np.tile([1.0, 0, 0, 0], (n, 1)),
        np.broadcast_to(np.asarray(opacities, dtype=float), (n,)),
        np.stack([color_sh(c) for c in np.broadcast_to(np.asarray(colors, dtype=float), (n, 3))]),
        object_ids=object_ids,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_view():
    return CameraView(fx=100.0, fy=100.0, cx=64.0, cy=64.0, width=128, height=128)


def flat_ground(half: float = 1.0, z: float = 0.0):
    from splatsynth.geometry import TriangleMesh

    v = np.array([[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]])
    return TriangleMesh(v, [[0, 1, 2], [0, 2, 3]])


def drop_shapes():
    """Box, short cylinder and sphere proxies as convex shapes."""
    import itertools

    from splatsynth.geometry import icosphere
    from splatsynth.physics import ConvexShape

    box = ConvexShape.from_points(np.array(list(itertools.product([-0.03, 0.03], [-0.02, 0.02], [-0.04, 0.04]))))
    t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    ring = np.column_stack([0.035 * np.cos(t), 0.035 * np.sin(t)])
    cyl = ConvexShape.from_points(np.vstack([np.column_stack([ring, np.full(16, z)]) for z in (-0.03, 0.03)]))
    ball = ConvexShape.from_mesh(icosphere(0.03, 1))
    return [box, cyl, ball]


def ten_object_world(seed: int = 3):
    from splatsynth.physics import World, spawn_drop

    shapes = drop_shapes()
    ground = flat_ground()
    specs = [(i + 1, shapes[i % 3], 0.1) for i in range(10)]
    bodies = spawn_drop(specs, (-0.15, -0.15, 0.15, 0.15), ground, np.random.default_rng(seed))
    return World(ground, bodies)


def box_cloud(center, size, n, oid, seed):
    return generate_test_asset("box", AssetParams(extent=size, n=n, center=center), seed).with_object_id(oid)


def half_occlusion_scene():
    """Back card seen head-on; front card covers exactly its left half in image space."""
    view = CameraView(400.0, 400.0, 160.0, 120.0, 320, 240)
    back = box_cloud((0.0, 0.0, 2.0), (0.4, 0.4, 0.01), 20000, 2, 11)
    # The front card sits at depth 1; its right edge projects onto the image column
    # of the back card's centre line, and it overhangs everything else.
    front = box_cloud((-0.15, 0.0, 1.0), (0.3, 0.4, 0.01), 20000, 1, 12)
    return view, front, back


@pytest.fixture(scope="session")
def desk_manifest_path(tmp_path_factory):
    from desk import write_desk

    return write_desk(tmp_path_factory.mktemp("desk"))


@pytest.fixture(scope="session")
def desk(desk_manifest_path):
    """(manifest, prepared assets) of the small test desk."""
    from splatsynth.scene_gen import load_manifest, prepare_assets

    m = load_manifest(desk_manifest_path)
    return m, prepare_assets(m)


@pytest.fixture(scope="session")
def desk_dataset(desk, tmp_path_factory):
    """A generated 2-scene x 3-view dataset (treat as read-only)."""
    from splatsynth.scene_gen import generate

    m, assets = desk
    root = tmp_path_factory.mktemp("desk_out") / "ds"
    report = generate(m, root, assets=assets)
    assert not report.failed, report.failed
    return root


def tree_bytes(root, exclude=("generation_report.json",)) -> dict:
    """Relative path -> file bytes for every file under ``root``."""
    from pathlib import Path

    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in exclude}
