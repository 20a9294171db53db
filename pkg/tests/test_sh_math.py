import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from oracles import _basis_at, fibonacci_sphere
from splatsynth.errors import PreconditionError
from splatsynth.sh_math import BAND_SLICES, SH_C0, eval_sh, rotate_sh, sh_basis, sh_rotation_from


def test_dc_basis_is_constant():
    c = np.zeros(16)
    c[0] = 1.0
    for d in ([0, 0, 1], [1, 0, 0], [0.6, 0.8, 0.0]):
        assert eval_sh(c, np.array(d, dtype=float)) == pytest.approx(0.2820947918, abs=1e-10)
    assert SH_C0 == 0.28209479177387814


def test_zero_coefficients():
    assert eval_sh(np.zeros(16), np.array([0.0, 0.0, 1.0])) == 0.0


def test_non_unit_direction_rejected():
    with pytest.raises(PreconditionError):
        eval_sh(np.zeros(16), np.array([0.0, 0.0, 2.0]))


def test_basis_orthonormal_on_sphere():
    # quasi-uniform quadrature over 1e5 directions: ∫ Y_j Y_k dΩ = δ_jk
    d = fibonacci_sphere(100_000)
    y = sh_basis(d)
    gram = 4 * math.pi * (y.T @ y) / len(d)
    assert np.max(np.abs(gram - np.eye(16))) < 1e-3


def test_one_hot_at_pole_matches_closed_form():
    z = np.array([0.0, 0.0, 1.0])
    for k in range(16):
        e = np.zeros(16)
        e[k] = 1.0
        assert eval_sh(e, z) == pytest.approx(_basis_at(z)[k], abs=1e-12)
    # zonal terms at the pole equal sqrt((2l+1)/4π)
    for k, l in ((2, 1), (6, 2), (12, 3)):
        e = np.zeros(16)
        e[k] = 1.0
        assert eval_sh(e, z) == pytest.approx(math.sqrt((2 * l + 1) / (4 * math.pi)), abs=1e-12)


def test_basis_matches_independent_closed_forms(rng):
    d = rng.standard_normal((50, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for di in d:
        np.testing.assert_allclose(sh_basis(di), _basis_at(di), atol=1e-12)


def test_identity_rotation_blocks():
    op = sh_rotation_from(np.eye(3))
    for b in op.blocks:
        np.testing.assert_allclose(b, np.eye(len(b)), atol=1e-13)
    assert op.blocks[0].tolist() == [[1.0]]


def test_rotation_evaluation_identity(rng):
    r = Rotation.random(random_state=3).as_matrix()
    c = rng.standard_normal(16)
    rot = rotate_sh(c, sh_rotation_from(r))
    assert rot[0] == c[0]
    d = rng.standard_normal((100, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for di in d:
        assert abs(eval_sh(rot, di) - eval_sh(c, r.T @ di)) < 1e-9


def test_rotation_roundtrip_and_norms(rng):
    r = Rotation.random(random_state=4).as_matrix()
    c = rng.standard_normal(16)
    back = rotate_sh(rotate_sh(c, sh_rotation_from(r)), sh_rotation_from(r.T))
    np.testing.assert_allclose(back, c, atol=1e-9)
    rot = rotate_sh(c, sh_rotation_from(r))
    for s in BAND_SLICES:
        assert abs(np.linalg.norm(rot[s]) - np.linalg.norm(c[s])) < 1e-10


def test_blocks_orthogonal(rng):
    op = sh_rotation_from(Rotation.random(random_state=5).as_matrix())
    for b in op.blocks:
        assert np.max(np.abs(b.T @ b - np.eye(len(b)))) < 1e-10
    m = op.matrix()
    assert m.shape == (16, 16)
    assert np.count_nonzero(m[1:4, 4:]) == 0


def test_batched_rotation_matches_single(rng):
    op = sh_rotation_from(Rotation.random(random_state=6).as_matrix())
    c = rng.standard_normal((5, 3, 16))
    out = rotate_sh(c, op)
    np.testing.assert_allclose(out[2, 1], rotate_sh(c[2, 1], op), atol=1e-15)


@pytest.mark.parametrize("bad", [np.diag([1.0, 1.0, -1.0]), 2 * np.eye(3), np.ones((3, 3))])
def test_non_rotation_rejected(bad):
    with pytest.raises(PreconditionError):
        sh_rotation_from(bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1))
def test_composition_law(seed1, seed2):
    r1 = Rotation.random(random_state=seed1).as_matrix()
    r2 = Rotation.random(random_state=seed2).as_matrix()
    c = np.random.default_rng(seed1 ^ seed2).standard_normal(16)
    seq = rotate_sh(rotate_sh(c, sh_rotation_from(r1)), sh_rotation_from(r2))
    once = rotate_sh(c, sh_rotation_from(r2 @ r1))
    np.testing.assert_allclose(seq, once, atol=1e-9)
