"""Gaussian splat data model, trained-splat PLY I/O and procedural test assets.

A :class:`GaussianCloud` is stored structure-of-arrays. Values held in memory are
*decoded* (opacity in [0, 1], positive scales, unit quaternions); the PLY file
holds the usual pre-activation values (opacity logit, log-scale).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from . import quat
from .errors import InvalidAssetError, PreconditionError
from .sh_math import N_COEFFS, SH_C0

SCALE_FACTOR = 0.7
OPACITY_CLAMP = 1e-6

PLY_PROPERTIES: tuple[str, ...] = (
    ("x", "y", "z", "nx", "ny", "nz")
    + tuple(f"f_dc_{i}" for i in range(3))
    + tuple(f"f_rest_{i}" for i in range(45))
    + ("opacity",)
    + tuple(f"scale_{i}" for i in range(3))
    + tuple(f"rot_{i}" for i in range(4))
)


@dataclass(frozen=True)
class Gaussian:
    mean: NDArray[np.float64]
    scale: NDArray[np.float64]
    orientation: NDArray[np.float64]  # (w, x, y, z)
    opacity: float
    sh: NDArray[np.float64]  # 3 x 16, channel x coefficient

    def __post_init__(self):
        for name in ("mean", "scale", "orientation", "sh"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))


def _readonly(a: NDArray, dtype=np.float64) -> NDArray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianCloud:
    """Immutable set of splats with a per-splat object label (0 = environment)."""

    means: NDArray[np.float64]
    scales: NDArray[np.float64]
    rotations: NDArray[np.float64]
    opacities: NDArray[np.float64]
    sh: NDArray[np.float64]
    object_ids: NDArray[np.int32] = field(default=None)  # type: ignore[assignment]
    source_path: str | None = None

    def __post_init__(self):
        n = len(np.asarray(self.means).reshape(-1, 3))
        object.__setattr__(self, "means", _readonly(np.reshape(self.means, (n, 3))))
        object.__setattr__(self, "scales", _readonly(np.reshape(self.scales, (n, 3))))
        object.__setattr__(self, "rotations", _readonly(np.reshape(self.rotations, (n, 4))))
        object.__setattr__(self, "opacities", _readonly(np.reshape(self.opacities, (n,))))
        object.__setattr__(self, "sh", _readonly(np.reshape(self.sh, (n, 3, N_COEFFS))))
        ids = np.zeros(n, dtype=np.int32) if self.object_ids is None else self.object_ids
        ids = np.broadcast_to(np.asarray(ids, dtype=np.int32), (n,))
        object.__setattr__(self, "object_ids", _readonly(ids, np.int32))

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3, N_COEFFS)))

    @classmethod
    def from_splats(cls, splats: Sequence[Gaussian], object_id: int = 0) -> "GaussianCloud":
        if not splats:
            return cls.empty()
        return cls(
            np.stack([g.mean for g in splats]),
            np.stack([g.scale for g in splats]),
            np.stack([g.orientation for g in splats]),
            np.array([g.opacity for g in splats]),
            np.stack([g.sh for g in splats]),
            object_ids=np.full(len(splats), object_id),
        )

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(self.means[i], self.scales[i], self.rotations[i], float(self.opacities[i]), self.sh[i])

    def __iter__(self) -> Iterator[Gaussian]:
        return (self[i] for i in range(len(self)))

    @property
    def splats(self) -> list[Gaussian]:
        return list(self)

    def replace(self, **changes) -> "GaussianCloud":
        fields = dict(
            means=self.means,
            scales=self.scales,
            rotations=self.rotations,
            opacities=self.opacities,
            sh=self.sh,
            object_ids=self.object_ids,
            source_path=self.source_path,
        )
        fields.update(changes)
        return GaussianCloud(**fields)

    def with_object_id(self, object_id: int) -> "GaussianCloud":
        return self.replace(object_ids=np.full(len(self), object_id, dtype=np.int32))

    def equals(self, other: "GaussianCloud") -> bool:
        """Bit-exact equality of all per-splat fields."""
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("means", "scales", "rotations", "opacities", "sh", "object_ids")
        )

    def validate(self) -> None:
        """Raise InvalidAssetError unless every splat satisfies the Gaussian invariants."""
        for name in ("means", "scales", "rotations", "opacities", "sh"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidAssetError(f"non-finite values in {name}")
        if np.any(self.scales <= 0):
            raise InvalidAssetError("scales must be strictly positive")
        if np.any((self.opacities < 0) | (self.opacities > 1)):
            raise InvalidAssetError("opacity outside [0, 1]")
        if len(self) and np.max(np.abs(np.linalg.norm(self.rotations, axis=1) - 1.0)) > 1e-6:
            raise InvalidAssetError("orientation quaternions must have unit norm")


def covariance_of(g: Gaussian) -> NDArray[np.float64]:
    """World-space covariance R S S^T R^T of a single splat."""
    vals = np.concatenate([g.mean, g.scale, g.orientation, [g.opacity]])
    if not np.all(np.isfinite(vals)):
        raise InvalidAssetError("non-finite splat parameters")
    r = quat.to_matrix(g.orientation)
    m = r * g.scale[None, :]
    cov = m @ m.T
    return 0.5 * (cov + cov.T)


def covariances(cloud: GaussianCloud) -> NDArray[np.float64]:
    """Vectorised :func:`covariance_of` over a whole cloud; shape (N, 3, 3)."""
    r = quat.to_matrix(cloud.rotations)
    m = r * cloud.scales[:, None, :]
    cov = m @ np.swapaxes(m, 1, 2)
    return 0.5 * (cov + np.swapaxes(cov, 1, 2))


# --------------------------------------------------------------------------- PLY


def _encode(cloud: GaussianCloud) -> tuple[NDArray[np.float32], int]:
    n = len(cloud)
    data = np.zeros((n, len(PLY_PROPERTIES)), dtype=np.float32)
    data[:, 0:3] = cloud.means
    data[:, 6:9] = cloud.sh[:, :, 0]
    data[:, 9:54] = cloud.sh[:, :, 1:].reshape(n, 45)
    op = cloud.opacities
    clamped = int(np.count_nonzero((op < OPACITY_CLAMP) | (op > 1 - OPACITY_CLAMP)))
    op = np.clip(op, OPACITY_CLAMP, 1 - OPACITY_CLAMP)
    data[:, 54] = np.log(op) - np.log1p(-op)
    data[:, 55:58] = np.log(cloud.scales)
    data[:, 58:62] = cloud.rotations
    return data, clamped


def _decode(data: NDArray, names: Sequence[str], source: str | None) -> GaussianCloud:
    col = {name: i for i, name in enumerate(names)}
    for name in PLY_PROPERTIES:
        if name not in col:
            raise InvalidAssetError(f"missing property '{name}'")

    def get(name: str) -> NDArray[np.float64]:
        return data[:, col[name]].astype(np.float64)

    def check(name: str, values: NDArray) -> NDArray:
        bad = ~np.isfinite(values)
        if np.any(bad):
            raise InvalidAssetError(f"non-finite decoded value in property '{name}'")
        return values

    n = len(data)
    means = np.stack([check(k, get(k)) for k in ("x", "y", "z")], axis=1)
    sh = np.zeros((n, 3, N_COEFFS))
    for k in range(3):
        sh[:, k, 0] = check(f"f_dc_{k}", get(f"f_dc_{k}"))
        for j in range(15):
            name = f"f_rest_{15 * k + j}"
            sh[:, k, 1 + j] = check(name, get(name))
    with np.errstate(over="ignore"):
        opacity = 1.0 / (1.0 + np.exp(-check("opacity", get("opacity"))))
        scales = np.stack([check(f"scale_{i}", np.exp(get(f"scale_{i}"))) for i in range(3)], axis=1)
    if np.any(scales <= 0):
        bad = int(np.argwhere(scales <= 0)[0, 1])
        raise InvalidAssetError(f"non-positive decoded value in property 'scale_{bad}'")
    rot = np.stack([check(f"rot_{i}", get(f"rot_{i}")) for i in range(4)], axis=1)
    norms = np.linalg.norm(rot, axis=1)
    if np.any(norms == 0):
        raise InvalidAssetError("zero-norm quaternion in properties 'rot_0'..'rot_3'")
    # Unit-within-float32 quaternions are kept as stored so load/save is lossless.
    off = np.abs(norms - 1.0) > 1e-6
    rot[off] /= norms[off, None]
    rot = rot.astype(np.float32).astype(np.float64)
    return GaussianCloud(means, scales, rot, opacity, sh, source_path=source)


def save_splat_ply(cloud: GaussianCloud, path: str | os.PathLike) -> dict:
    """Write ``cloud`` as a binary little-endian splat PLY.

    Returns metadata with the vertex count and how many opacities had to be
    clamped away from 0/1 before taking the logit.
    """
    data, clamped = _encode(cloud)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
    header += [f"property float {name}" for name in PLY_PROPERTIES]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.astype("<f4").tobytes())
    return {"count": len(cloud), "clamped_opacity": clamped}


_PLY_TYPES = {"float": "<f4", "float32": "<f4"}


def load_splat_ply(path: str | os.PathLike) -> GaussianCloud:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply") or end < 0:
        raise InvalidAssetError(f"{path}: not a PLY file")
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end + len(b"end_header\n") :]
    count = None
    names: list[str] = []
    in_vertex = False
    for line in header[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1] != "binary_little_endian":
                raise InvalidAssetError(f"{path}: unsupported PLY format '{tok[1]}'")
        elif tok[0] == "element":
            if count is not None:
                raise InvalidAssetError(f"{path}: unexpected extra element '{tok[1]}'")
            if tok[1] != "vertex":
                raise InvalidAssetError(f"{path}: expected element 'vertex', found '{tok[1]}'")
            count = int(tok[2])
            in_vertex = True
        elif tok[0] == "property" and in_vertex:
            if tok[1] not in _PLY_TYPES:
                raise InvalidAssetError(f"{path}: property '{tok[-1]}' has unsupported type '{tok[1]}'")
            names.append(tok[2])
    if count is None:
        raise InvalidAssetError(f"{path}: no 'vertex' element")
    need = count * len(names) * 4
    if len(body) < need:
        raise InvalidAssetError(f"{path}: truncated vertex data")
    data = np.frombuffer(body[:need], dtype="<f4").reshape(count, len(names))
    try:
        return _decode(data, names, str(path))
    except InvalidAssetError as exc:
        raise InvalidAssetError(f"{path}: {exc}") from None


def to_storage_precision(cloud: GaussianCloud) -> GaussianCloud:
    """The cloud as it would come back from a save/load round trip."""
    data, _ = _encode(cloud)
    out = _decode(data, PLY_PROPERTIES, cloud.source_path)
    return out.replace(object_ids=cloud.object_ids)


# ------------------------------------------------------------------ test assets


@dataclass(frozen=True)
class AssetParams:
    """Parameters of a procedural asset.

    ``extent`` is the sphere radius, the box edge lengths (scalar or 3-vector)
    or the plane side length (scalar or 2-vector), in meters.
    """

    extent: float | tuple[float, ...] = 0.05
    n: int = 1000
    color: tuple[float, float, float] = (0.8, 0.2, 0.2)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    opacity: float = 0.9


def _sample_sphere(rng, n, radius):
    v = rng.standard_normal((n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_box(rng, n, size):
    sx, sy, sz = size
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.random((n, 2)) - 0.5
    pts = np.empty((n, 3))
    half = 0.5 * np.asarray(size)
    for f in range(6):
        sel = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [a for a in range(3) if a != axis]
        pts[sel, axis] = sign * half[axis]
        pts[sel, others[0]] = uv[sel, 0] * size[others[0]]
        pts[sel, others[1]] = uv[sel, 1] * size[others[1]]
    return pts


def _sample_plane(rng, n, size):
    uv = rng.random((n, 2)) - 0.5
    return np.column_stack([uv[:, 0] * size[0], uv[:, 1] * size[1], np.zeros(n)])


def generate_test_asset(kind: str, params: AssetParams, seed: int) -> GaussianCloud:
    """Procedural splat asset with known geometry, deterministic per ``seed``."""
    ext = np.atleast_1d(np.asarray(params.extent, dtype=np.float64))
    if np.any(ext < 0) or not np.all(np.isfinite(ext)):
        raise PreconditionError(f"extent must be non-negative, got {params.extent!r}")
    if params.n < 0:
        raise PreconditionError("splat count must be non-negative")
    if params.n == 0:
        return GaussianCloud.empty()
    rng = np.random.default_rng(seed)
    n = params.n
    if kind == "sphere":
        pts = _sample_sphere(rng, n, float(ext[0]))
    elif kind == "box":
        size = np.broadcast_to(ext, (3,)) if ext.size in (1, 3) else None
        if size is None:
            raise PreconditionError("box extent must be a scalar or 3-vector")
        pts = _sample_box(rng, n, size)
    elif kind == "plane":
        size = np.broadcast_to(ext, (2,)) if ext.size in (1, 2) else None
        if size is None:
            raise PreconditionError("plane extent must be a scalar or 2-vector")
        pts = _sample_plane(rng, n, size)
    else:
        raise PreconditionError(f"unknown asset kind '{kind}'")
    means = pts + np.asarray(params.center, dtype=np.float64)
    if n > 1:
        dist, _ = cKDTree(means).query(means, k=2)
        spacing = float(np.mean(dist[:, 1]))
    else:
        spacing = float(np.max(ext)) or 1e-3
    spacing = max(spacing, 1e-6)
    scales = np.full((n, 3), SCALE_FACTOR * spacing)
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    sh = np.zeros((n, 3, N_COEFFS))
    sh[:, :, 0] = (np.asarray(params.color, dtype=np.float64) - 0.5) / SH_C0
    opacities = np.full(n, params.opacity)
    return GaussianCloud(means, scales, rotations, opacities, sh, source_path=f"generated:{kind}")
