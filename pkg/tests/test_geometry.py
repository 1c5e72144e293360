import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occmask.errors import InvalidInputError, SingularityError
from occmask.geometry import (
    SENTINEL_COORD,
    Intrinsics,
    RigidTransform,
    axis_angle_rotation,
    backproject,
    pixel_grid,
    project,
    reproject,
    sample_jacobian_wrt_depth,
    transform_points,
    yaw_rotation,
)

K = Intrinsics(100.0, 120.0, 32.0, 24.0)


def random_transform(rng, max_angle=0.3, max_shift=1.0):
    axis = rng.normal(size=3)
    return RigidTransform.from_axis_angle(axis, rng.uniform(-max_angle, max_angle), rng.uniform(-max_shift, max_shift, 3))


# --- Intrinsics / RigidTransform -----------------------------------------


def test_intrinsics_validation():
    with pytest.raises(InvalidInputError):
        Intrinsics(0.0, 1.0, 0.0, 0.0)
    with pytest.raises(InvalidInputError):
        Intrinsics(1.0, -1.0, 0.0, 0.0)
    with pytest.raises(InvalidInputError):
        Intrinsics(1.0, 1.0, float("nan"), 0.0)


def test_intrinsics_matrix_inverse():
    np.testing.assert_allclose(K.matrix @ K.inverse_matrix, np.eye(3), atol=1e-15)


def test_intrinsics_json_round_trip():
    data = json.loads(json.dumps(K.to_dict()))
    assert set(data) == {"fx", "fy", "cx", "cy"}
    assert Intrinsics.from_dict(data) == K


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(InvalidInputError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(InvalidInputError):
        RigidTransform(np.eye(3) * 1.01, np.zeros(3))


def test_rigid_transform_json_round_trip():
    t = random_transform(np.random.default_rng(0))
    data = json.loads(json.dumps(t.to_dict()))
    assert len(data["rotation"]) == 9 and len(data["translation"]) == 3
    back = RigidTransform.from_dict(data)
    np.testing.assert_array_equal(back.rotation, t.rotation)
    np.testing.assert_array_equal(back.translation, t.translation)


def test_compose_with_inverse_is_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        t = random_transform(rng, np.pi, 5.0)
        np.testing.assert_allclose((t @ t.inverse()).matrix, np.eye(4), atol=1e-9)
        np.testing.assert_allclose((t.inverse() @ t).matrix, np.eye(4), atol=1e-9)


def test_yaw_rotation_example():
    np.testing.assert_allclose(yaw_rotation(np.pi / 2) @ [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(axis_angle_rotation((0, 1, 0), np.pi / 2), yaw_rotation(np.pi / 2), atol=1e-15)


# --- stage examples --------------------------------------------------------


@pytest.mark.parametrize(
    "pixel, depth, expected",
    [
        ((32.0, 24.0), 5.0, (0.0, 0.0, 5.0)),
        ((132.0, 24.0), 1.0, (1.0, 0.0, 1.0)),
        ((132.0, 24.0), 2.0, (2.0, 0.0, 2.0)),
    ],
)
def test_backproject_examples(pixel, depth, expected):
    p = backproject(np.array(pixel[0]), np.array(pixel[1]), np.array(depth), K)
    np.testing.assert_allclose(p, expected, atol=1e-12)


def test_backproject_rejects_bad_depth():
    u, v = pixel_grid(2, 2)
    with pytest.raises(InvalidInputError):
        backproject(u, v, np.array([[1.0, 0.0], [1.0, 1.0]]), K)
    with pytest.raises(InvalidInputError):
        backproject(u, v, np.array([[1.0, np.inf], [1.0, 1.0]]), K)


def test_transform_points_examples():
    p = np.array([[2.0, 0.0, 2.0]])
    np.testing.assert_array_equal(transform_points(p, RigidTransform.identity()), p)
    shift = RigidTransform(np.eye(3), (0.0, 0.0, -1.0))
    np.testing.assert_allclose(transform_points(p, shift), [[2.0, 0.0, 1.0]])
    yaw = RigidTransform(yaw_rotation(np.pi / 2), np.zeros(3))
    np.testing.assert_allclose(transform_points(np.array([1.0, 0.0, 0.0]), yaw), [0.0, 0.0, -1.0], atol=1e-15)


def test_project_examples():
    g = project(np.array([0.0, 0.0, 5.0]), K)
    assert (float(g.u), float(g.v), float(g.z_proj)) == (K.cx, K.cy, 5.0)
    k0 = Intrinsics(100.0, 100.0, 0.0, 0.0)
    g = project(np.array([2.0, 0.0, 1.0]), k0)
    assert float(g.u) == 200.0 and float(g.z_proj) == 1.0
    g = project(np.array([[1.0, 1.0, -1.0], [0.0, 0.0, 0.0]]), K)
    np.testing.assert_array_equal(g.u, SENTINEL_COORD)
    np.testing.assert_array_equal(g.v, SENTINEL_COORD)
    np.testing.assert_array_equal(g.z_proj, [-1.0, 0.0])


def test_reproject_identity_is_exact():
    rng = np.random.default_rng(2)
    depth = rng.uniform(0.5, 80.0, (7, 9))
    g = reproject(depth, K, RigidTransform.identity())
    u, v = pixel_grid(7, 9)
    np.testing.assert_array_equal(g.u, u)
    np.testing.assert_array_equal(g.v, v)
    np.testing.assert_array_equal(g.z_proj, depth)


def test_reproject_forward_translation_doubles_offset():
    # pixel cx+100 at depth 2 sits at (2, 0, 2); moving 1 m forward halves its depth
    k0 = Intrinsics(100.0, 100.0, 0.0, 0.0)
    depth = np.full((1, 101), 2.0)
    g = reproject(depth, k0, RigidTransform(np.eye(3), (0.0, 0.0, -1.0)))
    assert g.u[0, 100] == pytest.approx(200.0, abs=1e-12)
    assert g.z_proj[0, 100] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("b, d", [(0.5, 10.0), (-0.3, 4.0), (1.0, 25.0)])
def test_reproject_lateral_translation_stereo_shift(b, d):
    depth = np.full((6, 8), d)
    # camera moves by b along x, so target-frame points shift by -b in the source frame
    g = reproject(depth, K, RigidTransform(np.eye(3), (-b, 0.0, 0.0)))
    u0, v0 = pixel_grid(6, 8)
    np.testing.assert_allclose(g.u - u0, -K.fx * b / d, atol=1e-9)
    np.testing.assert_allclose(g.v, v0, atol=1e-9)


def test_reproject_equals_composition_randomized():
    rng = np.random.default_rng(3)
    for _ in range(100):
        k = Intrinsics(*rng.uniform(50, 500, 2), *rng.uniform(0, 100, 2))
        t = random_transform(rng)
        depth = rng.uniform(1.0, 50.0, (5, 6))
        u, v = pixel_grid(5, 6)
        g = reproject(depth, k, t)
        ref = project(transform_points(backproject(u, v, depth, k), t), k)
        np.testing.assert_allclose(g.u, ref.u, atol=1e-9)
        np.testing.assert_allclose(g.v, ref.v, atol=1e-9)
        np.testing.assert_allclose(g.z_proj, ref.z_proj, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    u=st.floats(-50, 700),
    v=st.floats(-50, 250),
    z=st.floats(0.01, 1e3),
    fx=st.floats(10, 2000),
    fy=st.floats(10, 2000),
)
def test_backproject_project_round_trip(u, v, z, fx, fy):
    k = Intrinsics(fx, fy, 320.0, 96.0)
    g = project(backproject(np.array(u), np.array(v), np.array(z), k), k)
    assert abs(float(g.u) - u) <= 1e-9 * max(1.0, abs(u))
    assert abs(float(g.v) - v) <= 1e-9 * max(1.0, abs(v))
    assert float(g.z_proj) == pytest.approx(z, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_transform_inverse_round_trip(seed):
    rng = np.random.default_rng(seed)
    t = random_transform(rng, np.pi, 10.0)
    p = rng.uniform(-20, 20, (10, 3))
    np.testing.assert_allclose(transform_points(transform_points(p, t), t.inverse()), p, atol=1e-9)


# --- depth Jacobian --------------------------------------------------------


def test_jacobian_identity_is_zero():
    du, dv = sample_jacobian_wrt_depth((10.0, 5.0), 3.0, K, RigidTransform.identity())
    assert du == 0.0 and dv == 0.0


@pytest.mark.parametrize("b, z", [(0.5, 4.0), (-1.0, 10.0)])
def test_jacobian_lateral_closed_form(b, z):
    # camera baseline b: u = u0 - fx*b/z, so du/dz = fx*b/z^2
    du, dv = sample_jacobian_wrt_depth((K.cx, K.cy), z, K, RigidTransform(np.eye(3), (-b, 0.0, 0.0)))
    assert du == pytest.approx(K.fx * b / z**2, rel=1e-12)
    assert dv == pytest.approx(0.0, abs=1e-15)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 200:
        t = random_transform(rng)
        pixel = rng.uniform(0, 64, 2)
        z = rng.uniform(1.0, 30.0)
        u, v = np.array([pixel[0]]), np.array([pixel[1]])

        def sample(depth):
            g = project(transform_points(backproject(u, v, np.array([depth]), K), t), K)
            return float(g.u[0]), float(g.v[0]), float(g.z_proj[0])

        if min(sample(z * (1 - 1e-4))[2], sample(z)[2]) <= 0.1:
            continue
        h = 1e-4 * z
        up, vp, _ = sample(z + h)
        um, vm, _ = sample(z - h)
        du, dv = sample_jacobian_wrt_depth(pixel, z, K, t)
        for analytic, numeric in ((du, (up - um) / (2 * h)), (dv, (vp - vm) / (2 * h))):
            assert abs(analytic - numeric) <= 1e-4 * max(abs(numeric), 1e-6)
        checked += 1


def test_jacobian_singularity():
    behind = RigidTransform(np.eye(3), (0.0, 0.0, -10.0))
    with pytest.raises(SingularityError):
        sample_jacobian_wrt_depth((K.cx, K.cy), 5.0, K, behind)
