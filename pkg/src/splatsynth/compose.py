"""Rigid transforms of splat clouds and scene merging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import quat
from .errors import ConfigurationError, PreconditionError
from .sh_math import rotate_sh, sh_rotation_from
from .splat_model import GaussianCloud


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> R x + t with R given as a unit quaternion (w, x, y, z)."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self):
        q = np.array(self.rotation, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise PreconditionError("transform must be finite")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise PreconditionError(f"rotation quaternion must be unit, |q|={np.linalg.norm(q)!r}")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: NDArray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(quat.from_matrix(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_rt(cls, rot: NDArray, t: NDArray) -> "RigidTransform":
        return cls(quat.from_matrix(rot), t)

    @property
    def rotation_matrix(self) -> NDArray[np.float64]:
        return quat.to_matrix(self.rotation)

    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.translation
        return m

    def apply(self, points: NDArray) -> NDArray[np.float64]:
        return np.asarray(points, dtype=np.float64) @ self.rotation_matrix.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first."""
        q = quat.normalize(quat.multiply(self.rotation, other.rotation))
        t = self.rotation_matrix @ other.translation + self.translation
        return RigidTransform(q, t)

    __matmul__ = compose

    def inverse(self) -> "RigidTransform":
        qi = quat.conjugate(self.rotation)
        return RigidTransform(qi, -(quat.to_matrix(qi) @ self.translation))

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix(), other.matrix(), rtol=0.0, atol=atol))

    def to_dict(self) -> dict:
        return {"q": [float(v) for v in self.rotation], "t": [float(v) for v in self.translation]}


def translate_cloud(cloud: GaussianCloud, t: NDArray) -> GaussianCloud:
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise PreconditionError("translation must be finite")
    return cloud.replace(means=cloud.means + t)


def transform_cloud(cloud: GaussianCloud, transform: RigidTransform) -> GaussianCloud:
    """Rotate and translate every splat: means, orientations and SH coefficients.

    Opacity and scale are untouched; covariances become R Σ R^T through the
    quaternion product.
    """
    r = transform.rotation_matrix
    means = cloud.means @ r.T + transform.translation
    rotations = quat.multiply(transform.rotation[None, :], cloud.rotations)
    sh = rotate_sh(cloud.sh, sh_rotation_from(r))
    return cloud.replace(means=means, rotations=rotations, sh=sh)


def merge_clouds(parts: Sequence[tuple[GaussianCloud, int]]) -> GaussianCloud:
    """Concatenate clouds in order, tagging each splat with its part's id."""
    ids = [int(oid) for _, oid in parts]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigurationError(f"duplicate object_id(s) in merge: {dup}")
    if any(i < 0 for i in ids):
        raise ConfigurationError("object ids must be non-negative")
    if not parts:
        return GaussianCloud.empty()
    clouds = [c for c, _ in parts]
    return GaussianCloud(
        np.concatenate([c.means for c in clouds]),
        np.concatenate([c.scales for c in clouds]),
        np.concatenate([c.rotations for c in clouds]),
        np.concatenate([c.opacities for c in clouds]),
        np.concatenate([c.sh for c in clouds]),
        object_ids=np.concatenate([np.full(len(c), oid, dtype=np.int32) for c, oid in parts]),
    )
