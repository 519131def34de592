import numpy as np
import pytest

from slotgoal.geometry import CameraModel, PixelPoint, RigidTransform, WorldPoint, project
from slotgoal.marker import NoMarker, detect_marker
from slotgoal.pipeline import (
    DepthHole,
    Observation,
    OracleBackend,
    PerturbedBackend,
    construct_goal,
    goal_from_anchor,
    oracle_backend,
    perturbed_backend,
    read_depth,
)
from slotgoal.render import Box, render


@pytest.fixture(scope="module")
def obs_scene(scenes):
    s = scenes["ordinal"][0]
    rgb, depth = render(s, s.head)
    return s, Observation(rgb, depth, s.cameras)


class _Blank:
    def ground(self, head_rgb, text):
        return head_rgb.copy()


def test_oracle_anchor_near_ground_truth(obs_scene):
    s, obs = obs_scene
    for slot in s.tray.slots:
        goal = construct_goal(obs, "anything", oracle_backend(s, slot))
        assert goal.anchor.distance(slot.center) <= 0.002
        assert set(goal.views) == {"head", "wrist"}


def test_oracle_lateral_error_within_half_pixel(obs_scene):
    s, obs = obs_scene
    fx = s.head.intrinsics.fx
    for slot in s.tray.slots:
        goal = construct_goal(obs, "x", OracleBackend(s, slot))
        _, zc = project(slot.center, s.head)
        assert goal.anchor.distance(slot.center) <= 0.5 * zc / fx


def test_no_marker(obs_scene):
    _, obs = obs_scene
    with pytest.raises(NoMarker):
        construct_goal(obs, "x", _Blank())


def test_radius_must_be_positive(obs_scene):
    s, obs = obs_scene
    with pytest.raises(ValueError):
        construct_goal(obs, "x", OracleBackend(s, s.tray.slots[0]), r=0)


def test_views_reproject_exactly(obs_scene):
    s, obs = obs_scene
    goal = construct_goal(obs, "x", OracleBackend(s, s.tray.slot(3, 3)))
    for cid, view in goal.views.items():
        pix, zc = project(goal.anchor, s.cameras[cid])
        assert abs(pix.u - view.pixel.u) <= 1e-6 and abs(pix.v - view.pixel.v) <= 1e-6
        assert view.radius_px == pytest.approx(s.cameras[cid].intrinsics.fx * goal.sphere_radius / zc)


def test_wrist_looking_away_keeps_head_only(obs_scene):
    s, obs = obs_scene
    away = CameraModel(s.wrist.intrinsics, RigidTransform.look_at((0, 0, 0.5), (0, 0, 2.0), up=(0, 1, 0)), "wrist")
    obs2 = Observation(obs.head_rgb, obs.head_depth, {"head": s.head, "wrist": away})
    goal = construct_goal(obs2, "x", OracleBackend(s, s.tray.slots[0]))
    assert set(goal.views) == {"head"}


def test_oracle_determinism(obs_scene):
    s, obs = obs_scene
    a = OracleBackend(s, s.tray.slots[2]).ground(obs.head_rgb, "x")
    b = OracleBackend(s, s.tray.slots[2]).ground(obs.head_rgb, "x")
    assert a.tobytes() == b.tobytes()


def test_oracle_rejects_foreign_slot(scenes):
    with pytest.raises(ValueError):
        OracleBackend(scenes["ordinal"][0], scenes["size"][0].tray.slots[0])


def test_marker_at_image_edge_still_detected(obs_scene):
    s, obs = obs_scene
    slot = s.tray.slot(1, 1)
    # shift the principal point so this slot lands 3 px inside the left edge
    pix, _ = project(slot.center, s.head)
    k = s.head.intrinsics
    from dataclasses import replace

    k2 = replace(k, cx=k.cx - pix.u + 3.0)
    head2 = CameraModel(k2, s.head.world_pose, "head")
    pix2, zc = project(slot.center, head2)
    assert 2.5 < pix2.u < 3.5
    cams = {"head": head2, "wrist": s.wrist}
    from slotgoal.scene import Scene

    s2 = Scene(s.category, s.variant, s.seed, s.tray, s.objects, cams, s.ee_pose, s.hand_eye, s.knowledge)
    rgb, depth = render(s2, head2)
    goal = construct_goal(Observation(rgb, depth, cams), "x", OracleBackend(s2, slot))
    assert goal.anchor.distance(slot.center) < 0.01


def test_perturbed_sigma_zero_is_identity(obs_scene):
    s, obs = obs_scene
    inner = OracleBackend(s, s.tray.slots[4])
    assert np.array_equal(PerturbedBackend(inner, 0.0, 3).ground(obs.head_rgb, "x"), inner.ground(obs.head_rgb, "x"))


def test_perturbed_offset_statistics(obs_scene):
    s, obs = obs_scene
    b = perturbed_backend(OracleBackend(s, s.tray.slot(2, 2)), 5.0, seed=21)
    base = detect_marker(b.inner.ground(obs.head_rgb, "x")).center
    offs = []
    for _ in range(500):
        det = detect_marker(b.ground(obs.head_rgb, "x")).center
        offs.append((det.u - base.u, det.v - base.v))
        assert abs(det.u - base.u - round(b.last_offset[0])) < 1e-9
    std = np.std(np.array(offs), axis=0)
    assert np.all((std >= 4) & (std <= 6))


def test_perturbed_reproducible(obs_scene):
    s, obs = obs_scene
    mk = lambda: PerturbedBackend(OracleBackend(s, s.tray.slots[0]), 4.0, seed=5)  # noqa: E731
    a, b = mk(), mk()
    for _ in range(5):
        assert np.array_equal(a.ground(obs.head_rgb, "x"), b.ground(obs.head_rgb, "x"))


def test_perturbed_rejects_negative_sigma(obs_scene):
    s, _ = obs_scene
    with pytest.raises(ValueError):
        PerturbedBackend(OracleBackend(s, s.tray.slots[0]), -1)


def test_anchor_error_grows_with_noise(obs_scene):
    s, obs = obs_scene
    slot = s.tray.slot(2, 2)
    means = []
    for sigma in (0.0, 2.0, 5.0, 10.0):
        b = PerturbedBackend(OracleBackend(s, slot), sigma, seed=8)
        errs = [construct_goal(obs, "x", b).anchor.distance(slot.center) for _ in range(200)]
        means.append(np.mean(errs))
    assert all(a <= b for a, b in zip(means, means[1:]))


def test_read_depth_nearest_and_hole_fill():
    d = np.zeros((20, 20))
    d[10, 10] = 1.5
    assert read_depth(d, PixelPoint(10.4, 9.6)) == 1.5
    d[9:12, 12] = [2.0, 3.0, 4.0]
    assert read_depth(d, PixelPoint(11, 11)) == 2.5  # median of {1.5, 2, 3, 4}
    with pytest.raises(DepthHole):
        read_depth(np.zeros((20, 20)), PixelPoint(5, 5))


def test_depth_read_path_without_analytic_depth(identity_cam):
    # a wall at z = 2 fills the view; a backend without anchor_depth triggers the image read
    wall = Box(RigidTransform.from_translation((0, 0, 2.5)), (10.0, 10.0, 1.0), (150, 150, 150))
    rgb, depth = render([wall], identity_cam)

    class Painter:
        def ground(self, img, text):
            from slotgoal.render import draw_sphere_marker

            return draw_sphere_marker(img, PixelPoint(400.0, 300.0), 6)

    goal = construct_goal(Observation(rgb, depth, {"head": identity_cam}), "x", Painter())
    assert goal.source_depth == pytest.approx(2.0)
    assert goal.anchor.z == pytest.approx(2.0)
    assert goal.anchor.x == pytest.approx(80 / 500 * 2.0, abs=1e-2)


def test_goal_from_anchor_drops_behind(identity_cam):
    g = goal_from_anchor(WorldPoint(0, 0, -1), {"head": identity_cam})
    assert g.views == {}
