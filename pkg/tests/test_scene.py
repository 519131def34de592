import itertools

import numpy as np
import pytest

from slotgoal.geometry import RigidTransform, WorldPoint, project
from slotgoal.scene import (
    CATEGORIES,
    MAX_TRANSLATION_NOISE,
    Scene,
    SceneObject,
    Slot,
    Tray,
    dumps_scene,
    feasible_slots,
    fits,
    generate_scene,
    knowledge_table,
    loads_scene,
    region_slots,
    slot_region_contains,
)


def test_ordinal_first_variant_is_3x3_with_bottom_left_origin():
    s = generate_scene("ordinal", 1, 0)
    assert (s.tray.rows, s.tray.cols) == (3, 3)
    local = {sl.index: s.tray.to_local(sl.center.as_array()) for sl in s.tray.slots}
    xs = [p[0] for p in local.values()]
    ys = [p[1] for p in local.values()]
    assert local[(1, 1)][0] == min(xs) and local[(1, 1)][1] == min(ys)


@pytest.mark.parametrize("category", CATEGORIES)
def test_index_convention(scenes, category):
    for s in scenes[category]:
        loc = {sl.index: s.tray.to_local(sl.center.as_array()) for sl in s.tray.slots}
        for (r, c), p in loc.items():
            if (r, c + 1) in loc:
                assert loc[(r, c + 1)][0] > p[0]
            if (r + 1, c) in loc:
                assert loc[(r + 1, c)][1] > p[1]


def test_size_scenes_have_unique_largest_slot():
    for v in range(1, 6):
        for seed in range(4):
            s = generate_scene("size", v, seed)
            areas = sorted((sl.area for sl in s.tray.slots), reverse=True)
            assert areas[0] > areas[1]


@pytest.mark.parametrize("category", CATEGORIES)
def test_determinism(category):
    a = generate_scene(category, 2, 5)
    b = generate_scene(category, 2, 5)
    assert dumps_scene(a) == dumps_scene(b)


@pytest.mark.parametrize("category", CATEGORIES)
def test_all_slot_centers_visible(scenes, category):
    for s in scenes[category]:
        k = s.head.intrinsics
        for sl in s.tray.slots:
            pix, _ = project(sl.center, s.head)
            assert k.contains(pix.u, pix.v)


@pytest.mark.parametrize("category", CATEGORIES)
def test_translation_noise_bounded(category):
    for v in range(1, 6):
        s = generate_scene(category, v, 3)
        assert np.all(np.abs(s.tray.base_pose.translation[:2]) <= MAX_TRANSLATION_NOISE)


def test_slot_interiors_disjoint(scenes):
    for group in scenes.values():
        for s in group:
            loc = [(s.tray.to_local(sl.center.as_array()), sl) for sl in s.tray.slots]
            for (p, a), (q, b) in itertools.combinations(loc, 2):
                sep_x = abs(p[0] - q[0]) >= (a.inner_extent[0] + b.inner_extent[0]) / 2
                sep_y = abs(p[1] - q[1]) >= (a.inner_extent[1] + b.inner_extent[1]) / 2
                assert sep_x or sep_y


def test_unknown_category_and_bad_variant():
    with pytest.raises(ValueError):
        generate_scene("juggling", 1, 0)
    with pytest.raises(ValueError):
        generate_scene("size", 0, 0)


def test_region_contains_examples(scenes):
    s = scenes["ordinal"][0]
    slot = s.tray.slot(2, 2)
    assert slot_region_contains(s, slot, slot.center)
    shift = s.tray.base_pose.rotation @ np.array([slot.inner_extent[0], 0, 0])
    assert not slot_region_contains(s, slot, WorldPoint.of(slot.center.as_array() + shift))


def _brute_contains(scene, slot, p, tol):
    local = scene.tray.to_local(p.as_array())
    c = scene.tray.to_local(slot.center.as_array())
    return (
        abs(local[0] - c[0]) <= slot.inner_extent[0] / 2 + tol + 1e-12
        and abs(local[1] - c[1]) <= slot.inner_extent[1] / 2 + tol + 1e-12
        and slot.center.z - slot.depth - 1e-12 <= p.z <= slot.center.z + slot.rim_height + tol + 1e-12
    )


def test_region_contains_boundary_and_oracle(scenes, rng):
    s = scenes["size"][1]
    slot = s.tray.slots[3]
    c = s.tray.to_local(slot.center.as_array())
    corner = c + np.array([slot.inner_extent[0] / 2, -slot.inner_extent[1] / 2, 0])
    assert slot_region_contains(s, slot, WorldPoint.of(s.tray.base_pose.apply(corner)))
    bottom = WorldPoint(slot.center.x, slot.center.y, slot.center.z - slot.depth)
    assert slot_region_contains(s, slot, bottom)
    for _ in range(1000):
        off = rng.uniform(-0.04, 0.04, 3) + np.array([0, 0, 0.02])
        p = WorldPoint.of(slot.center.as_array() + off)
        tol = float(rng.choice([0.0, 0.003]))
        assert slot_region_contains(s, slot, p, tol) == _brute_contains(s, slot, p, tol)


def _tray(extents):
    slots = tuple(
        Slot(1, i + 1, WorldPoint(0.1 * i, 0, 0.05), e, 0.04, 0.05) for i, e in enumerate(extents)
    )
    return Tray(slots, RigidTransform())


def _scene_with(tray, footprint):
    obj = SceneObject("box", footprint, 0.15, RigidTransform(), "pick-target")
    s = generate_scene("ordinal", 1, 0)
    return Scene("ordinal", 1, 0, tray, (obj,), s.cameras, s.ee_pose, s.hand_eye), obj


def test_feasible_all_and_none():
    s, obj = _scene_with(_tray([(0.03, 0.03)] * 4), (0.02, 0.02))
    assert feasible_slots(s, obj, 0.004) == frozenset(s.tray.slots)
    s, obj = _scene_with(_tray([(0.03, 0.03)] * 4), (0.05, 0.05))
    assert feasible_slots(s, obj, 0.0) == frozenset()


def test_feasible_allows_rotation_and_matches_brute_force(rng):
    ext = [tuple(rng.uniform(0.015, 0.05, 2)) for _ in range(30)]
    s, obj = _scene_with(_tray(ext), (0.025, 0.035))
    got = feasible_slots(s, obj, 0.002)
    want = set()
    for sl in s.tray.slots:
        ex, ey = sl.inner_extent
        if (0.029 <= ex and 0.039 <= ey) or (0.039 <= ex and 0.029 <= ey):
            want.add(sl)
    assert got == want
    assert fits((0.025, 0.035), (0.04, 0.03))


def test_non_pick_objects_rejected(scenes):
    s = scenes["distance"][0]
    ref = next(o for o in s.objects if o.role == "reference")
    with pytest.raises(ValueError):
        feasible_slots(s, ref)


def test_scene_needs_one_pick_target(scenes):
    s = scenes["ordinal"][0]
    with pytest.raises(ValueError):
        Scene("ordinal", 1, 0, s.tray, (), s.cameras, s.ee_pose, s.hand_eye)


@pytest.mark.parametrize("category", CATEGORIES)
def test_serialization_round_trip_is_byte_identical(scenes, category):
    for s in scenes[category]:
        text = dumps_scene(s, "abc")
        back = loads_scene(text)
        assert dumps_scene(back, "abc") == text
        assert back.tray.slots == s.tray.slots


def test_knowledge_table_size():
    t = knowledge_table()
    assert len(t["objects"]) >= 10
    for attrs in t["objects"].values():
        for a in attrs:
            assert a in t["phrases"]


def test_regions_partition_small_grid(scenes):
    s = scenes["ordinal"][0]
    ll = region_slots(s.tray, "lower-left")
    assert {sl.index for sl in ll} == {(1, 1), (1, 2), (2, 1), (2, 2)}
    with pytest.raises(ValueError):
        region_slots(s.tray, "middle")
