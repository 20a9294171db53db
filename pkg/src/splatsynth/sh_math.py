"""Real spherical harmonics up to degree 3 and band-wise coefficient rotation.

Basis ordering follows the convention used by trained splat assets: band-major,
m running from -l to +l, with the usual sign choices on the degree-1 terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import PreconditionError

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

N_COEFFS = 16
BAND_SLICES = (slice(0, 1), slice(1, 4), slice(4, 9), slice(9, 16))


def sh_basis(dirs: NDArray) -> NDArray[np.float64]:
    """All 16 basis functions at each direction; shape (..., 16)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (N_COEFFS,))
    out[..., 0] = SH_C0
    out[..., 1] = -SH_C1 * y
    out[..., 2] = SH_C1 * z
    out[..., 3] = -SH_C1 * x
    out[..., 4] = SH_C2[0] * x * y
    out[..., 5] = SH_C2[1] * y * z
    out[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    out[..., 7] = SH_C2[3] * x * z
    out[..., 8] = SH_C2[4] * (xx - yy)
    out[..., 9] = SH_C3[0] * y * (3.0 * xx - yy)
    out[..., 10] = SH_C3[1] * x * y * z
    out[..., 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    out[..., 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    out[..., 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    out[..., 14] = SH_C3[5] * z * (xx - yy)
    out[..., 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_sh(coeffs: NDArray, direction: NDArray) -> float | NDArray[np.float64]:
    """Evaluate sum_k coeffs[k] * Y_k(direction).

    ``coeffs`` may carry leading axes (e.g. 3×16 for RGB); the result drops the
    trailing coefficient axis.
    """
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise PreconditionError(f"direction must be unit length, got |d|={np.linalg.norm(d)!r}")
    val = np.asarray(coeffs, dtype=np.float64) @ sh_basis(d)
    return float(val) if np.ndim(val) == 0 else val


def _fibonacci_dirs(n: int) -> NDArray[np.float64]:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


# Fixed, well-spread sample directions. Each band's basis restricted to them has
# full row rank, so a rotation block is recovered exactly by least squares.
_SAMPLE_DIRS = _fibonacci_dirs(32)
_SAMPLE_BASIS = sh_basis(_SAMPLE_DIRS)
_SAMPLE_PINV = tuple(np.linalg.pinv(_SAMPLE_BASIS[:, s].T) for s in BAND_SLICES)


@dataclass(frozen=True)
class ShRotation:
    """Per-band orthogonal blocks (1×1, 3×3, 5×5, 7×7) acting on coefficients."""

    blocks: tuple[NDArray[np.float64], ...]

    def matrix(self) -> NDArray[np.float64]:
        """The equivalent 16×16 block-diagonal matrix."""
        m = np.zeros((N_COEFFS, N_COEFFS))
        for s, b in zip(BAND_SLICES, self.blocks):
            m[s, s] = b
        return m


def _check_rotation(rot: NDArray) -> NDArray[np.float64]:
    r = np.asarray(rot, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise PreconditionError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
        raise PreconditionError("matrix is not a proper rotation")
    return r


def sh_rotation_from(rot: NDArray) -> ShRotation:
    """Build the coefficient rotation for world rotation ``rot``.

    The result satisfies eval_sh(rotate_sh(c, op), d) == eval_sh(c, rot.T @ d).
    Each block M_l is solved from Y_l(rot.T d) = M_l Y_l(d) on fixed sample
    directions; rotated coefficients are then M_l.T @ c_l.
    """
    r = _check_rotation(rot)
    rotated = sh_basis(_SAMPLE_DIRS @ r)  # rows are Y(rot.T d_i)
    blocks = [np.ones((1, 1))]
    for band in (1, 2, 3):
        s = BAND_SLICES[band]
        m = rotated[:, s].T @ _SAMPLE_PINV[band]
        blocks.append(np.ascontiguousarray(m.T))
    return ShRotation(tuple(blocks))


def rotate_sh(coeffs: NDArray, op: ShRotation) -> NDArray[np.float64]:
    """Apply ``op`` to the trailing 16-coefficient axis of ``coeffs``."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape[-1] != N_COEFFS:
        raise PreconditionError(f"expected {N_COEFFS} coefficients, got {c.shape[-1]}")
    out = np.empty_like(c)
    for s, b in zip(BAND_SLICES, op.blocks):
        out[..., s] = c[..., s] @ b.T
    return out
