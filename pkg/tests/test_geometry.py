import numpy as np
import pytest
from hypothesis import given, strategies as st

from slotgoal.geometry import (
    BehindCamera,
    CameraModel,
    CameraPoint,
    FrameMismatch,
    GeometryError,
    Intrinsics,
    NonPositiveDepth,
    OutOfBounds,
    PixelPoint,
    RigidTransform,
    WorldPoint,
    back_project,
    nearest_rotation,
    pixel_radius,
    project,
    to_camera,
    to_world,
    wrist_pose,
)

from conftest import random_pose


def test_back_project_principal_point(simple_k):
    p = back_project(PixelPoint(320, 240), 1.0, simple_k)
    assert (p.x, p.y, p.z) == (0.0, 0.0, 1.0)


def test_back_project_one_focal_length_offset():
    k = Intrinsics(500.0, 500.0, 320.0, 240.0, 1000, 480)
    p = back_project(PixelPoint(820, 240), 1.0, k)
    assert (p.x, p.y, p.z) == pytest.approx((1.0, 0.0, 1.0), abs=1e-15)


def test_back_project_depth_is_exact(simple_k):
    p = back_project(PixelPoint(12.3, 400.7), 0.7345678, simple_k)
    assert p.z == 0.7345678


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_back_project_rejects_nonpositive_depth(simple_k, d):
    with pytest.raises(NonPositiveDepth):
        back_project(PixelPoint(10, 10), d, simple_k)


@pytest.mark.parametrize("u,v", [(-0.1, 10), (640, 10), (10, 480), (10, -1)])
def test_back_project_rejects_out_of_bounds(simple_k, u, v):
    with pytest.raises(OutOfBounds):
        back_project(PixelPoint(u, v), 1.0, simple_k)


def test_to_world_identity(identity_cam):
    w = to_world(CameraPoint(0, 0, 1, "head"), identity_cam)
    assert w == WorldPoint(0, 0, 1)


def test_to_world_translation(simple_k):
    cam = CameraModel(simple_k, RigidTransform.from_translation((1, 2, 3)), "head")
    assert to_world(CameraPoint(0, 0, 0, "head"), cam) == WorldPoint(1, 2, 3)


def test_to_world_frame_mismatch(identity_cam):
    with pytest.raises(FrameMismatch):
        to_world(CameraPoint(0, 0, 1, "wrist"), identity_cam)


def test_to_world_matches_homogeneous_product(simple_k, rng):
    for _ in range(100):
        pose = random_pose(rng)
        cam = CameraModel(simple_k, pose, "head")
        p = rng.uniform(-1, 1, 3)
        want = (pose.matrix() @ np.append(p, 1.0))[:3]
        got = to_world(CameraPoint(*p, "head"), cam).as_array()
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_wrist_pose_examples(rng):
    assert wrist_pose(RigidTransform(), RigidTransform()).allclose(RigidTransform(), 0)
    t = wrist_pose(RigidTransform.from_translation((0, 0, 0.5)), RigidTransform.from_translation((0.1, 0, 0)))
    np.testing.assert_allclose(t.translation, (0.1, 0, 0.5))
    for _ in range(100):
        a, b = random_pose(rng), random_pose(rng)
        np.testing.assert_allclose(wrist_pose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_project_on_axis(identity_cam):
    pix, zc = project(WorldPoint(0, 0, 2), identity_cam)
    assert (pix.u, pix.v, zc) == (320.0, 240.0, 2.0)


@pytest.mark.parametrize("z", [-0.1, 0.0])
def test_project_behind_camera(identity_cam, z):
    with pytest.raises(BehindCamera):
        project(WorldPoint(0, 0, z), identity_cam)


def test_project_outside_image_is_not_an_error(identity_cam):
    pix, _ = project(WorldPoint(10, 0, 1), identity_cam)
    assert pix.u > 640


def test_pixel_radius_examples():
    assert pixel_radius(0.02, 1.0, 500) == pytest.approx(10.0)
    assert pixel_radius(0.02, 2.0, 500) == pytest.approx(5.0)
    assert pixel_radius(0.0, 3.3, 500) == 0.0
    with pytest.raises(NonPositiveDepth):
        pixel_radius(0.02, 0.0, 500)


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(1e-3, 0.1), st.floats(10, 2000))
def test_pixel_radius_monotone_and_linear(z1, z2, r, fx):
    if z1 < z2:
        assert pixel_radius(r, z1, fx) > pixel_radius(r, z2, fx)
    assert pixel_radius(2 * r, z1, fx) == pytest.approx(2 * pixel_radius(r, z1, fx))
    assert pixel_radius(r, z1, 3 * fx) == pytest.approx(3 * pixel_radius(r, z1, fx))


@given(
    st.integers(0, 2**32 - 1),
    st.floats(0, 639.999), st.floats(0, 479.999), st.floats(0.1, 10.0),
)
def test_round_trip_property(seed, u, v, d):
    k = Intrinsics.default()
    cam = CameraModel(k, random_pose(np.random.default_rng(seed)), "head")
    w = to_world(back_project(PixelPoint(u, v), d, k), cam)
    pix, zc = project(w, cam)
    assert abs(pix.u - u) < 1e-9 and abs(pix.v - v) < 1e-9
    assert zc == pytest.approx(d, abs=1e-9)


def test_wrist_projection_frame_consistency(rng):
    k = Intrinsics.default()
    for _ in range(50):
        ee, he = random_pose(rng), random_pose(rng)
        direct = CameraModel(k, RigidTransform.from_matrix(ee.matrix() @ he.matrix()), "wrist")
        composed = CameraModel(k, wrist_pose(ee, he), "wrist")
        p = WorldPoint.of(composed.world_pose.apply((0.05, -0.02, 0.7)))
        a, _ = project(p, direct)
        b, _ = project(p, composed)
        assert abs(a.u - b.u) < 1e-9 and abs(a.v - b.v) < 1e-9


def test_orthonormality_after_long_composition(rng):
    t = RigidTransform()
    for _ in range(1000):
        t = t @ random_pose(rng)
    r = t.rotation
    assert np.max(np.abs(r.T @ r - np.eye(3))) <= 1e-9
    assert abs(np.linalg.det(r) - 1) <= 1e-9


def test_compose_with_inverse_is_identity(rng):
    for _ in range(100):
        t = random_pose(rng)
        assert (t @ t.inverse()).allclose(RigidTransform(), 1e-9)


def test_rejects_non_rotation():
    with pytest.raises(GeometryError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(GeometryError):
        RigidTransform(np.eye(3) * 1.1)


def test_nearest_rotation_repairs_small_drift(rng):
    r = random_pose(rng).rotation + rng.normal(scale=1e-8, size=(3, 3))
    fixed = nearest_rotation(r)
    assert np.max(np.abs(fixed.T @ fixed - np.eye(3))) < 1e-12
    assert np.max(np.abs(RigidTransform(r).rotation - fixed)) < 1e-12


def test_intrinsics_validation():
    with pytest.raises(GeometryError):
        Intrinsics(0, 1, 1, 1, 4, 4)
    with pytest.raises(GeometryError):
        Intrinsics(1, 1, 4, 1, 4, 4)


def test_transform_is_immutable():
    t = RigidTransform.from_translation((1, 2, 3))
    with pytest.raises(ValueError):
        t.translation[0] = 5


def test_to_camera_inverts_to_world(rng, simple_k):
    cam = CameraModel(simple_k, random_pose(rng), "head")
    p = CameraPoint(0.1, -0.2, 1.3, "head")
    back = to_camera(to_world(p, cam), cam)
    np.testing.assert_allclose(back.as_array(), p.as_array(), atol=1e-12)
