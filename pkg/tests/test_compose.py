import numpy as np
import pytest

from conftest import random_cloud, random_transform, single_splat_cloud
from oracles import quat_wxyz_to_matrix
from splatsynth.compose import RigidTransform, merge_clouds, transform_cloud, translate_cloud
from splatsynth.errors import ConfigurationError
from splatsynth.raster import CameraView, render
from splatsynth.sh_math import eval_sh
from splatsynth.splat_model import covariance_of, covariances


def test_zero_translation_is_identity(rng):
    c = random_cloud(rng, 30)
    assert translate_cloud(c, np.zeros(3)).equals(c)


def test_translation_additive(rng):
    c = random_cloud(rng, 30)
    twice = translate_cloud(translate_cloud(c, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    once = translate_cloud(c, [2.0, 4.0, 6.0])
    np.testing.assert_allclose(twice.means, once.means, rtol=0, atol=1e-14)


def test_translation_keeps_covariance(rng):
    c = random_cloud(rng, 30)
    t = translate_cloud(c, [0.3, -0.2, 5.0])
    np.testing.assert_array_equal(covariances(t), covariances(c))
    np.testing.assert_array_equal(t.opacities, c.opacities)
    np.testing.assert_array_equal(t.sh, c.sh)


def test_identity_transform(rng):
    c = random_cloud(rng, 30)
    t = transform_cloud(c, RigidTransform.identity())
    for f in ("means", "rotations", "sh", "scales", "opacities"):
        np.testing.assert_allclose(getattr(t, f), getattr(c, f), atol=1e-12, rtol=0)


def test_transform_then_inverse(rng):
    c = random_cloud(rng, 30)
    T = random_transform(rng)
    back = transform_cloud(transform_cloud(c, T), T.inverse())
    np.testing.assert_allclose(back.means, c.means, atol=1e-9)
    np.testing.assert_allclose(back.rotations, c.rotations, atol=1e-9)
    np.testing.assert_allclose(back.sh, c.sh, atol=1e-9)
    np.testing.assert_array_equal(back.opacities, c.opacities)


def test_transformed_covariance_matches_matrix_oracle(rng):
    c = random_cloud(rng, 40)
    for _ in range(5):
        T = random_transform(rng)
        R = quat_wxyz_to_matrix(T.rotation)
        out = transform_cloud(c, T)
        for g0, g1 in zip(c, out):
            np.testing.assert_allclose(covariance_of(g1), R @ covariance_of(g0) @ R.T, atol=1e-9)
            np.testing.assert_allclose(g1.mean, R @ g0.mean + T.translation, atol=1e-12)


def test_transformed_sh_view_consistent(rng):
    c = random_cloud(rng, 5)
    T = random_transform(rng)
    R = quat_wxyz_to_matrix(T.rotation)
    out = transform_cloud(c, T)
    d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    for g0, g1 in zip(c, out):
        np.testing.assert_allclose(eval_sh(g1.sh, R @ d), eval_sh(g0.sh, d), atol=1e-12)


def test_transform_composition(rng):
    c = random_cloud(rng, 20)
    T1, T2 = random_transform(rng), random_transform(rng)
    a = transform_cloud(transform_cloud(c, T1), T2)
    b = transform_cloud(c, T2 @ T1)
    for f in ("means", "rotations", "sh"):
        np.testing.assert_allclose(getattr(a, f), getattr(b, f), atol=1e-9)


def test_opacity_invariant(rng):
    c = random_cloud(rng, 20)
    np.testing.assert_array_equal(transform_cloud(c, random_transform(rng)).opacities, c.opacities)


def test_rigid_transform_algebra(rng):
    T = random_transform(rng)
    assert (T @ T.inverse()).allclose(RigidTransform.identity(), 1e-12)
    m = T.matrix()
    assert RigidTransform.from_matrix(m).allclose(T, 1e-12)
    p = rng.standard_normal((4, 3))
    np.testing.assert_allclose(T.apply(p), p @ m[:3, :3].T + m[:3, 3], atol=1e-12)


def test_merge_single_part(rng):
    c = random_cloud(rng, 10)
    m = merge_clouds([(c, 3)])
    np.testing.assert_array_equal(m.means, c.means)
    assert set(m.object_ids.tolist()) == {3}


def test_merge_sizes_and_order(rng):
    a, b, e = random_cloud(rng, 10), random_cloud(rng, 7), random_cloud(rng, 4)
    m = merge_clouds([(e, 0), (a, 1), (b, 2)])
    assert len(m) == 21
    np.testing.assert_array_equal(m.object_ids, [0] * 4 + [1] * 10 + [2] * 7)
    np.testing.assert_array_equal(m.means[4:14], a.means)


def test_merge_duplicate_ids(rng):
    a = random_cloud(rng, 3)
    with pytest.raises(ConfigurationError):
        merge_clouds([(a, 1), (a, 1)])


def test_merge_does_not_alias(rng):
    a = random_cloud(rng, 3)
    m = merge_clouds([(a, 1)])
    assert not np.shares_memory(m.means, a.means)


def test_merged_render_equals_depth_compositing(rng):
    view = CameraView(80.0, 80.0, 32.0, 32.0, 64, 64)
    near = random_cloud(rng, 60, center=(0.0, 0.0, 1.0), spread=0.15)
    far = random_cloud(rng, 60, center=(0.05, 0.0, 3.0), spread=0.3)
    merged = render(merge_clouds([(near, 1), (far, 2)]), view)
    a, b = render(near, view), render(far, view)
    # parts are disjoint in depth: the near part is composited over the far one
    expected_rgb = a.rgb + (1 - a.alpha)[..., None] * b.rgb
    expected_alpha = a.alpha + (1 - a.alpha) * b.alpha
    assert np.max(np.abs(merged.rgb - expected_rgb)) <= 1 / 255
    assert np.max(np.abs(merged.alpha - expected_alpha)) <= 1 / 255
