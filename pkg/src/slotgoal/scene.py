"""Parametric slot-tray scenes.

A scene is a rectangular grid tray, a pick object, some named reference and
distractor objects, and a calibrated head + wrist camera rig. Everything
downstream (rendering, instruction resolution, scoring) reads its ground
truth from here.

Tray frame: origin at the center of the grid footprint on the tray base,
+x toward higher column numbers, +y toward higher row numbers, +z up. Row 1
is the row nearest the head camera, so "rows from the bottom" in the head
image and "columns from the left" both map onto increasing indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from math import ceil

import numpy as np

from .geometry import (
    BehindCamera,
    CameraModel,
    Intrinsics,
    RigidTransform,
    WorldPoint,
    project,
    wrist_pose,
)
from .seeding import rng_for

CATEGORIES = (
    "ordinal",
    "size",
    "height",
    "distance",
    "compositional",
    "negation",
    "vague",
    "affordance",
    "knowledge",
)

# variant 1 is the canonical 3x3 tray; later variants cycle through these
GRID_SHAPES = ((3, 3), (3, 4), (2, 4), (4, 4), (3, 5))

SLOT_EXTENT = 0.03
WALL_THICKNESS = 0.012
DEFAULT_DEPTH = 0.04
DEFAULT_RIM = 0.05
PICK_FOOTPRINT = (0.025, 0.025)
PICK_HEIGHT = 0.15
FEASIBLE_CLEARANCE = 0.002
MAX_TRANSLATION_NOISE = 0.05
MAX_TRAY_YAW = np.radians(8.0)
RETRY_BUDGET = 64
BOUNDARY_EPS = 1e-12
IMAGE_MARGIN_PX = 12

HEAD_EYE = (0.0, -0.42, 0.62)
HEAD_TARGET = (0.0, 0.0, 0.03)
EE_NOMINAL = (0.0, -0.14, 0.42)
# ee frame: gripper pointing down, +y toward the robot
EE_ROTATION = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
# camera mounted 6 cm behind the flange, aimed at the nominal tray center
HAND_EYE = RigidTransform(EE_ROTATION, EE_NOMINAL).inverse() @ RigidTransform.look_at(
    (0.0, -0.20, 0.44), (0.0, 0.02, 0.03)
)

REFERENCE_NAMES = ("mug", "bowl", "book", "soda can", "potted plant", "tape roll")
DISTRACTOR_NAMES = ("red block", "green block", "yellow block")


class DegenerateScene(RuntimeError):
    """Generator could not satisfy a category's well-posedness condition."""


@dataclass(frozen=True)
class Slot:
    row: int
    col: int
    center: WorldPoint
    inner_extent: tuple[float, float]
    depth: float
    rim_height: float

    @property
    def index(self) -> tuple[int, int]:
        return (self.row, self.col)

    @property
    def area(self) -> float:
        return self.inner_extent[0] * self.inner_extent[1]

    @property
    def rim_top(self) -> float:
        return self.center.z


@dataclass(frozen=True)
class Tray:
    slots: tuple[Slot, ...]
    base_pose: RigidTransform
    wall_thickness: float = WALL_THICKNESS

    def __post_init__(self):
        if not self.slots:
            raise ValueError("tray needs at least one slot")
        idx = [s.index for s in self.slots]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate slot indices")

    @property
    def rows(self) -> int:
        return max(s.row for s in self.slots)

    @property
    def cols(self) -> int:
        return max(s.col for s in self.slots)

    def slot(self, row: int, col: int) -> Slot:
        for s in self.slots:
            if s.row == row and s.col == col:
                return s
        raise KeyError((row, col))

    def to_local(self, p) -> np.ndarray:
        return self.base_pose.inverse().apply(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class SceneObject:
    name: str
    footprint: tuple[float, float]
    height: float
    pose: RigidTransform
    role: str  # pick-target | distractor | reference

    def __post_init__(self):
        if min(self.footprint) <= 0 or self.height <= 0:
            raise ValueError(f"object {self.name!r} has a non-positive dimension")
        if self.role not in ("pick-target", "distractor", "reference"):
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def position(self) -> WorldPoint:
        return WorldPoint.of(self.pose.translation)


@dataclass(frozen=True)
class Scene:
    category: str
    variant: int
    seed: int
    tray: Tray
    objects: tuple[SceneObject, ...]
    cameras: dict
    ee_pose: RigidTransform
    hand_eye: RigidTransform
    knowledge: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(o.role == "pick-target" for o in self.objects) != 1:
            raise ValueError("scene needs exactly one pick-target object")

    @property
    def id(self) -> str:
        return f"{self.category}-v{self.variant}-s{self.seed}"

    @property
    def head(self) -> CameraModel:
        return self.cameras["head"]

    @property
    def wrist(self) -> CameraModel:
        return self.cameras["wrist"]

    @property
    def pick_object(self) -> SceneObject:
        return next(o for o in self.objects if o.role == "pick-target")

    def object(self, name: str) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)


@lru_cache(maxsize=1)
def knowledge_table() -> dict:
    text = resources.files("slotgoal.data").joinpath("knowledge.json").read_text()
    return json.loads(text)


def slot_region_contains(scene: Scene, slot: Slot, p: WorldPoint, tol: float = 0.0) -> bool:
    """Closed-box membership test for a slot's region (boundary counts as inside)."""
    tray = scene.tray
    local = tray.to_local(p.as_array())
    c = tray.to_local(slot.center.as_array())
    hx, hy = slot.inner_extent[0] / 2 + tol, slot.inner_extent[1] / 2 + tol
    if abs(local[0] - c[0]) > hx + BOUNDARY_EPS or abs(local[1] - c[1]) > hy + BOUNDARY_EPS:
        return False
    z_lo = slot.center.z - slot.depth
    z_hi = slot.center.z + slot.rim_height + tol
    return z_lo - BOUNDARY_EPS <= p.z <= z_hi + BOUNDARY_EPS


def fits(footprint, extent, clearance: float = 0.0) -> bool:
    """Axis-aligned fit of a footprint inside an extent, allowing a 90 degree yaw."""
    lx, ly = footprint[0] + 2 * clearance, footprint[1] + 2 * clearance
    ex, ey = extent
    return (lx <= ex and ly <= ey) or (ly <= ex and lx <= ey)


def feasible_slots(scene: Scene, obj: SceneObject, clearance: float = FEASIBLE_CLEARANCE) -> frozenset:
    if obj.role != "pick-target":
        raise ValueError("feasibility is defined for the pick-target object")
    return frozenset(s for s in scene.tray.slots if fits(obj.footprint, s.inner_extent, clearance))


# ---------------------------------------------------------------------------
# generation


def default_cameras(resolution=(640, 480), ee_pose: RigidTransform | None = None):
    k = Intrinsics.default(*resolution)
    ee = ee_pose if ee_pose is not None else RigidTransform(EE_ROTATION, EE_NOMINAL)
    head = CameraModel(k, RigidTransform.look_at(HEAD_EYE, HEAD_TARGET), "head")
    wrist = CameraModel(k, wrist_pose(ee, HAND_EYE), "wrist")
    return {"head": head, "wrist": wrist}, ee


def _lattice(rng, n, lo, hi):
    vals = np.linspace(lo, hi, n)
    rng.shuffle(vals)
    return vals


def _slot_properties(category, rng, rows, cols):
    """Per-slot (extent, depth, rim) arrays for a category; shapes (R, C, 2), (R, C), (R, C)."""
    n = rows * cols
    ext = np.full((rows, cols, 2), SLOT_EXTENT)
    depth = np.full((rows, cols), DEFAULT_DEPTH)
    rim = np.full((rows, cols), DEFAULT_RIM)

    if category in ("size", "compositional", "negation"):
        side = _lattice(rng, n, 0.029, 0.046).reshape(rows, cols)
        ext[..., 0] = side
        ext[..., 1] = side
    if category in ("height", "compositional"):
        rim = _lattice(rng, n, 0.03, 0.09).reshape(rows, cols)
        depth = rim - 0.008
        if category == "height":
            ext[...] = 0.032
    if category == "negation":
        # a few narrow slots that the object cannot enter
        k = max(1, n // 4)
        for flat in rng.choice(n, size=k, replace=False):
            r, c = divmod(int(flat), cols)
            ext[r, c] = (0.021, ext[r, c, 0]) if rng.random() < 0.5 else (ext[r, c, 0], 0.021)
    if category == "vague":
        ext[..., 0] = ext[..., 1] = rng.uniform(0.030, 0.036, size=(rows, cols))
        k = max(1, int(round(0.4 * n)))
        for flat in rng.choice(n, size=k, replace=False):
            r, c = divmod(int(flat), cols)
            narrow = (0.020, 0.036)
            ext[r, c] = narrow if rng.random() < 0.5 else narrow[::-1]
    if category == "affordance":
        ext[...] = 0.031
        depth = rng.uniform(0.02, 0.06, size=(rows, cols))
        order = rng.permutation(n)
        target = divmod(int(order[0]), cols)
        depth[target] = 0.085
        for flat in order[1 : 1 + int(rng.integers(1, 4))]:
            r, c = divmod(int(flat), cols)
            depth[r, c] = 0.085
            ext[r, c] = (0.020, 0.040) if rng.random() < 0.5 else (0.040, 0.020)
        rim = depth + 0.01
    return ext, depth, rim


def _build_tray(ext, depth, rim, base_pose) -> Tray:
    rows, cols = depth.shape
    pitch_x = ext[..., 0].max(axis=0) + WALL_THICKNESS
    pitch_y = ext[..., 1].max(axis=1) + WALL_THICKNESS
    xs = np.cumsum(pitch_x) - pitch_x / 2 - pitch_x.sum() / 2
    ys = np.cumsum(pitch_y) - pitch_y / 2 - pitch_y.sum() / 2
    slots = []
    for r in range(rows):
        for c in range(cols):
            local = np.array([xs[c], ys[r], rim[r, c]])
            slots.append(
                Slot(
                    row=r + 1,
                    col=c + 1,
                    center=WorldPoint.of(base_pose.apply(local)),
                    inner_extent=(float(ext[r, c, 0]), float(ext[r, c, 1])),
                    depth=float(depth[r, c]),
                    rim_height=float(rim[r, c]),
                )
            )
    return Tray(tuple(slots), base_pose, WALL_THICKNESS)


def tray_half_extent(tray: Tray) -> tuple[float, float]:
    """Half-size of the tray footprint in the tray frame, walls included."""
    pts = np.array([tray.to_local(s.center.as_array()) for s in tray.slots])
    hx = max(abs(p[0]) + s.inner_extent[0] / 2 for p, s in zip(pts, tray.slots))
    hy = max(abs(p[1]) + s.inner_extent[1] / 2 for p, s in zip(pts, tray.slots))
    return hx + WALL_THICKNESS / 2, hy + WALL_THICKNESS / 2


def _noise(rng):
    return rng.uniform(-MAX_TRANSLATION_NOISE, MAX_TRANSLATION_NOISE, size=2)


def _place(tray, rng, nominal_local, name, footprint, height, role):
    x, y = nominal_local
    offset = _noise(rng) * 0.5
    local = np.array([x + offset[0], y + offset[1], 0.0])
    yaw = float(rng.uniform(-np.pi, np.pi))
    world = tray.base_pose @ RigidTransform.from_yaw(yaw, local)
    return SceneObject(name, footprint, height, world, role)


def _side_anchors(tray, gap=0.11):
    hx, hy = tray_half_extent(tray)
    return [
        (-(hx + gap), -hy * 0.5),
        (-(hx + gap), hy * 0.6),
        (hx + gap, hy * 0.6),
        (-hx * 0.6, hy + gap),
        (hx * 0.6, hy + gap),
        (0.0, hy + gap + 0.04),
    ]


def _objects(category, tray, rng):
    hx, hy = tray_half_extent(tray)
    objs = [
        _place(tray, rng, (hx + 0.13, -hy - 0.02), "box", PICK_FOOTPRINT, PICK_HEIGHT, "pick-target"),
    ]
    anchors = _side_anchors(tray)
    order = list(rng.permutation(len(anchors)))
    knowledge = {}
    if category in ("distance", "compositional"):
        n_ref = 1 if category == "compositional" else int(rng.integers(1, 3))
        names = rng.choice(len(REFERENCE_NAMES), size=n_ref, replace=False)
        for i in names:
            a = anchors[order.pop()]
            objs.append(_place(tray, rng, a, REFERENCE_NAMES[i], (0.07, 0.07), 0.09, "reference"))
    if category == "knowledge":
        table = knowledge_table()["objects"]
        names = sorted(table)
        picks = rng.choice(len(names), size=3, replace=False)
        for i in picks:
            a = anchors[order.pop()]
            name = names[i]
            objs.append(_place(tray, rng, a, name, (0.06, 0.06), 0.08, "reference"))
            knowledge[name] = list(table[name])
    for j in range(int(rng.integers(1, 3))):
        a = anchors[order.pop()]
        objs.append(_place(tray, rng, a, DISTRACTOR_NAMES[j], (0.04, 0.04), 0.04, "distractor"))
    return tuple(objs), knowledge


def _pairwise_distinct(values, margin):
    v = np.sort(np.asarray(values, dtype=float))
    return bool(np.all(np.diff(v) > margin))


def _unique_extremes(values, margin):
    v = np.sort(np.asarray(values, dtype=float))
    return len(v) < 2 or (v[1] - v[0] > margin and v[-1] - v[-2] > margin)


def well_posedness_problem(scene: Scene) -> str | None:
    """Return a reason string if the scene violates its category's conditions, else None."""
    slots = scene.tray.slots
    k = scene.head.intrinsics
    for s in slots:
        try:
            pix, _ = project(s.center, scene.head)
        except BehindCamera:
            return f"slot {s.index} behind head camera"
        m = IMAGE_MARGIN_PX
        if not (m <= pix.u < k.width - m and m <= pix.v < k.height - m):
            return f"slot {s.index} outside head image"
    cat = scene.category
    areas = [s.area for s in slots]
    rims = [s.rim_top for s in slots]
    if cat in ("size", "compositional", "negation") and not _pairwise_distinct(areas, 2e-6):
        return "slot areas not pairwise distinct"
    if cat in ("height", "compositional") and not _pairwise_distinct(rims, 0.002):
        return "rim tops not pairwise distinct"
    refs = [o for o in scene.objects if o.role == "reference"]
    if cat in ("distance", "compositional", "knowledge"):
        for o in refs:
            d = [s.center.distance(o.position) for s in slots]
            if not _unique_extremes(d, 0.003):
                return f"no unique nearest/farthest slot for {o.name}"
    pick = scene.pick_object
    feas = feasible_slots(scene, pick)
    if cat == "vague" and not (0 < len(feas) < len(slots)):
        return "vague scene needs some but not all slots feasible"
    if cat == "vague" and not any(s.row == scene.tray.rows for s in feas):
        return "vague scene needs a feasible slot in the back row"
    if cat == "negation" and len(feas) < 2:
        return "negation scene needs several feasible slots"
    if cat == "affordance":
        stable = [s for s in feas if s.depth >= pick.height / 2]
        if len(stable) != 1:
            return "affordance scene needs exactly one stable feasible slot"
    if cat == "knowledge":
        attrs = [set(v) for v in scene.knowledge.values()]
        if not any(sum(a in s for s in attrs) == 1 for a in set().union(*attrs)):
            return "no knowledge attribute singles out one object"
    return None


def generate_scene(category: str, variant: int, seed: int, resolution=(640, 480)) -> Scene:
    """Deterministically generate a well-posed scene for (category, variant, seed)."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    if variant < 1:
        raise ValueError("variant must be >= 1")
    rows, cols = GRID_SHAPES[(variant - 1) % len(GRID_SHAPES)]
    reason = None
    for attempt in range(RETRY_BUDGET):
        rng = rng_for(seed, "scene", category, variant, attempt)
        ext, depth, rim = _slot_properties(category, rng, rows, cols)
        nx, ny = _noise(rng)
        base = RigidTransform.from_yaw(float(rng.uniform(-MAX_TRAY_YAW, MAX_TRAY_YAW)), (nx, ny, 0.0))
        tray = _build_tray(ext, depth, rim, base)
        objects, knowledge = _objects(category, tray, rng)
        en = _noise(rng) * 0.4
        ee = RigidTransform(EE_ROTATION, np.array(EE_NOMINAL) + np.array([en[0], en[1], 0.0]))
        cameras, ee = default_cameras(resolution, ee)
        scene = Scene(category, variant, seed, tray, objects, cameras, ee, HAND_EYE, knowledge)
        reason = well_posedness_problem(scene)
        if reason is None:
            return scene
    raise DegenerateScene(f"{category} v{variant} seed {seed}: {reason} after {RETRY_BUDGET} attempts")


# ---------------------------------------------------------------------------
# serialization


def pose_to_dict(t: RigidTransform) -> dict:
    return {"rotation": [[float(x) for x in row] for row in t.rotation], "translation": [float(x) for x in t.translation]}


def pose_from_dict(d: dict) -> RigidTransform:
    return RigidTransform(np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))


def camera_to_dict(cam: CameraModel) -> dict:
    k = cam.intrinsics
    return {
        "id": cam.id,
        "fx": float(k.fx), "fy": float(k.fy), "cx": float(k.cx), "cy": float(k.cy),
        "width": int(k.width), "height": int(k.height),
        "world_pose": pose_to_dict(cam.world_pose),
    }


def camera_from_dict(d: dict) -> CameraModel:
    k = Intrinsics(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"])
    return CameraModel(k, pose_from_dict(d["world_pose"]), d["id"])


def scene_to_dict(scene: Scene) -> dict:
    return {
        "category": scene.category,
        "variant": scene.variant,
        "seed": scene.seed,
        "tray": {
            "base_pose": pose_to_dict(scene.tray.base_pose),
            "wall_thickness": scene.tray.wall_thickness,
            "slots": [
                {
                    "row": s.row, "col": s.col,
                    "center": [s.center.x, s.center.y, s.center.z],
                    "inner_extent": list(s.inner_extent),
                    "depth": s.depth, "rim_height": s.rim_height,
                }
                for s in scene.tray.slots
            ],
        },
        "objects": [
            {"name": o.name, "footprint": list(o.footprint), "height": o.height,
             "pose": pose_to_dict(o.pose), "role": o.role}
            for o in scene.objects
        ],
        "cameras": {cid: camera_to_dict(c) for cid, c in scene.cameras.items()},
        "ee_pose": pose_to_dict(scene.ee_pose),
        "hand_eye": pose_to_dict(scene.hand_eye),
        "knowledge": {k: list(v) for k, v in scene.knowledge.items()},
    }


def scene_from_dict(d: dict) -> Scene:
    t = d["tray"]
    slots = tuple(
        Slot(s["row"], s["col"], WorldPoint.of(s["center"]), tuple(s["inner_extent"]), s["depth"], s["rim_height"])
        for s in t["slots"]
    )
    tray = Tray(slots, pose_from_dict(t["base_pose"]), t["wall_thickness"])
    objects = tuple(
        SceneObject(o["name"], tuple(o["footprint"]), o["height"], pose_from_dict(o["pose"]), o["role"])
        for o in d["objects"]
    )
    cameras = {cid: camera_from_dict(c) for cid, c in d["cameras"].items()}
    return Scene(
        d["category"], d["variant"], d["seed"], tray, objects, cameras,
        pose_from_dict(d["ee_pose"]), pose_from_dict(d["hand_eye"]),
        {k: list(v) for k, v in d["knowledge"].items()},
    )


def dumps_scene(scene: Scene, fingerprint: str | None = None) -> str:
    doc = {"format": "slotgoal-scene/1", "scene": scene_to_dict(scene)}
    if fingerprint is not None:
        doc["fingerprint"] = fingerprint
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads_scene(text: str) -> Scene:
    doc = json.loads(text)
    if doc.get("format") != "slotgoal-scene/1":
        raise ValueError("not a slotgoal scene document")
    return scene_from_dict(doc["scene"])


def document_fingerprint(text: str) -> str | None:
    return json.loads(text).get("fingerprint")


def region_slots(tray: Tray, corner: str) -> frozenset:
    """Slots in a named corner block: the lower/upper ceil(R/2) rows x left/right ceil(C/2) cols."""
    vert, horiz = corner.split("-")
    rh, ch = ceil(tray.rows / 2), ceil(tray.cols / 2)
    def row_ok(r):
        return r <= rh if vert == "lower" else r > tray.rows - rh
    def col_ok(c):
        return c <= ch if horiz == "left" else c > tray.cols - ch
    return frozenset(s for s in tray.slots if row_ok(s.row) and col_ok(s.col))


REGIONS = ("lower-left", "lower-right", "upper-left", "upper-right")
