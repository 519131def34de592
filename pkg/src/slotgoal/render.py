"""Z-buffered software rasterizer for box worlds, plus goal-marker overlays.

Every solid is an oriented box (12 triangles). Depth images hold camera-frame
Z in meters with 0 meaning "no hit". Images are plain numpy arrays: RGB is
(H, W, 3) uint8, depth is (H, W) float64.

Palette (RGB):
    background   (40, 40, 40)
    tray         (150, 150, 150)
    pick target  (225, 120, 40)
    reference    (200, 60, 60), (60, 170, 80), (210, 190, 60), (150, 90, 50)
    distractor   (120, 160, 60)
    marker       (0, 0, 255)  -- reserved, never used for geometry
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .geometry import BehindCamera, CameraModel, PixelPoint, RigidTransform, WorldPoint, pixel_radius, project
from .scene import Scene, Tray

BACKGROUND = (40, 40, 40)
TRAY_COLOR = (150, 150, 150)
PICK_COLOR = (225, 120, 40)
REFERENCE_COLORS = ((200, 60, 60), (60, 170, 80), (210, 190, 60), (150, 90, 50))
DISTRACTOR_COLOR = (120, 160, 60)
MARKER_COLOR = (0, 0, 255)

NEAR_PLANE = 1e-3
_LIGHT = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])

# corner order: bit 0 -> x, bit 1 -> y, bit 2 -> z
_CORNER_SIGNS = np.array([[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float) - 0.5
_FACES = (
    (0, 2, 6, 4),  # -x
    (1, 5, 7, 3),  # +x
    (0, 4, 5, 1),  # -y
    (2, 3, 7, 6),  # +y
    (0, 1, 3, 2),  # -z
    (4, 6, 7, 5),  # +z
)


@dataclass(frozen=True, eq=False)
class Box:
    """Oriented box: ``pose`` maps the box frame (origin at the box center) to world."""

    pose: RigidTransform
    size: tuple[float, float, float]
    color: tuple[int, int, int]

    def corners(self) -> np.ndarray:
        local = _CORNER_SIGNS * np.asarray(self.size, dtype=float)
        return local @ self.pose.rotation.T + self.pose.translation

    def triangles(self) -> np.ndarray:
        """(12, 3, 3) world-space triangles wound counter-clockwise seen from outside."""
        c = self.corners()
        center = self.pose.translation
        tris = []
        for a, b, d, e in _FACES:
            for tri in ((a, b, d), (a, d, e)):
                t = c[list(tri)]
                n = np.cross(t[1] - t[0], t[2] - t[0])
                if np.dot(n, t.mean(axis=0) - center) < 0:
                    t = t[[0, 2, 1]]
                tris.append(t)
        return np.array(tris)


def _box_local(tray_pose: RigidTransform, lo, hi, color) -> Box:
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    center = tray_pose.apply((lo + hi) / 2)
    return Box(RigidTransform(tray_pose.rotation, center), tuple(hi - lo), color)


def tray_boxes(tray: Tray) -> list[Box]:
    """Per-slot cell walls and floors. Cells in a column share the column's widest slot pitch."""
    local = {s.index: tray.to_local(s.center.as_array()) for s in tray.slots}
    pitch_x = {c: max(s.inner_extent[0] for s in tray.slots if s.col == c) + tray.wall_thickness
               for c in range(1, tray.cols + 1)}
    pitch_y = {r: max(s.inner_extent[1] for s in tray.slots if s.row == r) + tray.wall_thickness
               for r in range(1, tray.rows + 1)}
    boxes = []
    for s in tray.slots:
        cx, cy, _ = local[s.index]
        x0, x1 = cx - pitch_x[s.col] / 2, cx + pitch_x[s.col] / 2
        y0, y1 = cy - pitch_y[s.row] / 2, cy + pitch_y[s.row] / 2
        ix0, ix1 = cx - s.inner_extent[0] / 2, cx + s.inner_extent[0] / 2
        iy0, iy1 = cy - s.inner_extent[1] / 2, cy + s.inner_extent[1] / 2
        top = s.rim_height
        for lo, hi in (
            ((x0, y0, 0.0), (ix0, y1, top)),
            ((ix1, y0, 0.0), (x1, y1, top)),
            ((ix0, y0, 0.0), (ix1, iy0, top)),
            ((ix0, iy1, 0.0), (ix1, y1, top)),
        ):
            if min(h - l for h, l in zip(hi, lo)) > 1e-9:
                boxes.append(_box_local(tray.base_pose, lo, hi, TRAY_COLOR))
        floor = s.rim_height - s.depth
        if floor > 1e-9:
            boxes.append(_box_local(tray.base_pose, (ix0, iy0, 0.0), (ix1, iy1, floor), TRAY_COLOR))
    return boxes


def scene_boxes(scene: Scene) -> list[Box]:
    boxes = tray_boxes(scene.tray)
    ref_i = 0
    for o in scene.objects:
        if o.role == "pick-target":
            color = PICK_COLOR
        elif o.role == "reference":
            color = REFERENCE_COLORS[ref_i % len(REFERENCE_COLORS)]
            ref_i += 1
        else:
            color = DISTRACTOR_COLOR
        # object pose sits at the base center
        center = o.pose.apply((0.0, 0.0, o.height / 2))
        boxes.append(Box(RigidTransform(o.pose.rotation, center), (o.footprint[0], o.footprint[1], o.height), color))
    return boxes


def _clip_near(tri: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against z >= NEAR_PLANE."""
    out = []
    n = len(tri)
    for i in range(n):
        a, b = tri[i], tri[(i + 1) % n]
        ina, inb = a[2] >= NEAR_PLANE, b[2] >= NEAR_PLANE
        if ina:
            out.append(a)
        if ina != inb:
            t = (NEAR_PLANE - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return [np.array([out[0], out[i], out[i + 1]]) for i in range(1, len(out) - 1)]


def render(scene: Scene | Sequence[Box] | None, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize a scene (or an explicit box list) from ``cam``; returns (rgb, depth)."""
    if scene is None:
        boxes: Iterable[Box] = []
    elif isinstance(scene, Scene):
        boxes = scene_boxes(scene)
    else:
        boxes = scene
    k = cam.intrinsics
    w, h = k.width, k.height
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[...] = BACKGROUND
    zbuf = np.full((h, w), np.inf)

    r_t = cam.world_pose.rotation.T
    t = cam.world_pose.translation
    for box in boxes:
        tris_w = box.triangles()
        normals = np.cross(tris_w[:, 1] - tris_w[:, 0], tris_w[:, 2] - tris_w[:, 0])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        tris_c = (tris_w - t) @ r_t.T
        for tri_c, n_w in zip(tris_c, normals):
            n_c = r_t @ n_w
            # back-face cull: the camera center (origin) lies behind the face plane
            if np.dot(n_c, tri_c[0]) >= 0:
                continue
            shade = 0.55 + 0.45 * max(0.0, float(n_w @ _LIGHT))
            color = np.round(np.asarray(box.color, dtype=float) * shade).astype(np.uint8)
            pieces = [tri_c] if np.all(tri_c[:, 2] >= NEAR_PLANE) else _clip_near(tri_c)
            for piece in pieces:
                _raster_triangle(piece, k, rgb, zbuf, color)

    depth = np.where(np.isfinite(zbuf), zbuf, 0.0)
    return rgb, depth


def _raster_triangle(tri_c, k, rgb, zbuf, color):
    z = tri_c[:, 2]
    u = k.fx * tri_c[:, 0] / z + k.cx
    v = k.fy * tri_c[:, 1] / z + k.cy
    h, w = zbuf.shape
    j0, j1 = max(int(np.ceil(u.min())), 0), min(int(np.floor(u.max())), w - 1)
    i0, i1 = max(int(np.ceil(v.min())), 0), min(int(np.floor(v.max())), h - 1)
    if j0 > j1 or i0 > i1:
        return
    area = (u[1] - u[0]) * (v[2] - v[0]) - (u[2] - u[0]) * (v[1] - v[0])
    if abs(area) < 1e-12:
        return
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1, dtype=float), np.arange(i0, i1 + 1, dtype=float))
    b0 = ((u[1] - jj) * (v[2] - ii) - (u[2] - jj) * (v[1] - ii)) / area
    b1 = ((u[2] - jj) * (v[0] - ii) - (u[0] - jj) * (v[2] - ii)) / area
    b2 = 1.0 - b0 - b1
    inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
    if not inside.any():
        return
    # perspective-correct: 1/z is affine in screen space
    zz = 1.0 / (b0 / z[0] + b1 / z[1] + b2 / z[2])
    sub = zbuf[i0 : i1 + 1, j0 : j1 + 1]
    hit = inside & (zz < sub)
    sub[hit] = zz[hit]
    rgb[i0 : i1 + 1, j0 : j1 + 1][hit] = color


def draw_sphere_marker(img: np.ndarray, center: PixelPoint, radius_px: float, color=MARKER_COLOR) -> np.ndarray:
    """Filled disk, clipped to the image. Radius 0 draws the single nearest pixel."""
    if radius_px < 0:
        raise ValueError("radius must be nonnegative")
    out = img.copy()
    h, w = img.shape[:2]
    if radius_px == 0:
        i, j = center.rounded()
        if 0 <= i < h and 0 <= j < w:
            out[i, j] = color
        return out
    j0 = max(int(np.ceil(center.u - radius_px)), 0)
    j1 = min(int(np.floor(center.u + radius_px)), w - 1)
    i0 = max(int(np.ceil(center.v - radius_px)), 0)
    i1 = min(int(np.floor(center.v + radius_px)), h - 1)
    if j0 > j1 or i0 > i1:
        return out
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
    disk = (jj - center.u) ** 2 + (ii - center.v) ** 2 <= radius_px**2
    out[i0 : i1 + 1, j0 : j1 + 1][disk] = color
    return out


def render_goal_overlays(
    scene: Scene,
    anchor: WorldPoint,
    r: float,
    images: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Draw the anchor's marker into every camera's clean render.

    Cameras that see the anchor behind the lens get the clean image back.
    """
    out = {}
    for cid, cam in scene.cameras.items():
        clean = images[cid] if images and cid in images else render(scene, cam)[0]
        try:
            pix, zc = project(anchor, cam)
        except BehindCamera:
            out[cid] = clean.copy()
            continue
        out[cid] = draw_sphere_marker(clean, pix, pixel_radius(r, zc, cam.intrinsics.fx))
    return out


# ---------------------------------------------------------------------------
# PNG I/O


def save_rgb(path: str | Path, rgb: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, optimize=False)


def load_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def quantize_depth_mm(depth: np.ndarray) -> np.ndarray:
    return np.clip(np.round(depth * 1000.0), 0, 65535).astype(np.uint16)


def save_depth_png(path: str | Path, depth: np.ndarray) -> None:
    """16-bit grayscale PNG, 1 unit = 1 mm, 0 = no hit."""
    Image.fromarray(quantize_depth_mm(depth)).save(path)


def load_depth_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im, dtype=np.float64) / 1000.0
