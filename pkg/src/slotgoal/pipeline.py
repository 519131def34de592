"""Goal construction: edited head image -> marker pixel -> world anchor -> per-view markers.

    edited  = backend.ground(head_rgb, text)
    (u, v)  = detect_marker(edited)
    z       = depth at (u, v)
    anchor  = T_W<-head (z K^-1 [u v 1]^T)
    views   = {cam: (project(anchor, cam), fx r / Z^c)}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .geometry import (
    BehindCamera,
    CameraModel,
    PixelPoint,
    WorldPoint,
    back_project,
    pixel_radius,
    project,
    to_world,
)
from .instruct import Instruction
from .marker import HsvThresholds, detect_marker
from .render import draw_sphere_marker
from .scene import Scene, Slot

DEFAULT_RADIUS = 0.015
HOLE_WINDOW = 5


class DepthHole(LookupError):
    pass


class GroundingBackend(Protocol):
    """Anything that edits the head image to contain a goal marker.

    Backends that know the exact surface depth of the point they mark may
    expose it as ``anchor_depth`` (meters along the head camera's Z axis);
    goal construction then uses it instead of reading the depth image.
    """

    def ground(self, head_rgb: np.ndarray, instruction_text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class GoalView:
    pixel: PixelPoint
    radius_px: float
    depth: float


@dataclass(frozen=True)
class VisualGoal:
    anchor: WorldPoint
    views: dict = field(default_factory=dict)  # camera id -> GoalView
    sphere_radius: float = DEFAULT_RADIUS
    source_pixel: PixelPoint | None = None
    source_depth: float | None = None


@dataclass(frozen=True)
class Observation:
    head_rgb: np.ndarray
    head_depth: np.ndarray
    cameras: dict  # camera id -> CameraModel; must contain "head"

    @property
    def head(self) -> CameraModel:
        return self.cameras["head"]


def read_depth(depth: np.ndarray, pix: PixelPoint, window: int = HOLE_WINDOW) -> float:
    """Depth at the nearest pixel; falls back to the median of valid depths in a window."""
    h, w = depth.shape
    i, j = pix.rounded()
    i, j = min(max(i, 0), h - 1), min(max(j, 0), w - 1)
    z = float(depth[i, j])
    if z > 0:
        return z
    half = window // 2
    patch = depth[max(i - half, 0) : i + half + 1, max(j - half, 0) : j + half + 1]
    valid = patch[patch > 0]
    if valid.size == 0:
        raise DepthHole(f"no valid depth within {window}x{window} of ({pix.u:.1f}, {pix.v:.1f})")
    return float(np.median(valid))


def goal_from_anchor(anchor: WorldPoint, cameras: dict, r: float = DEFAULT_RADIUS, **extra) -> VisualGoal:
    """Project one world anchor into every camera; cameras seeing it behind the lens are skipped."""
    views = {}
    for cid, cam in cameras.items():
        try:
            pix, zc = project(anchor, cam)
        except BehindCamera:
            continue
        views[cid] = GoalView(pix, pixel_radius(r, zc, cam.intrinsics.fx), zc)
    return VisualGoal(anchor, views, r, **extra)


def construct_goal(
    obs: Observation,
    instruction: Instruction | str,
    backend: GroundingBackend,
    r: float = DEFAULT_RADIUS,
    thresholds: HsvThresholds = HsvThresholds(),
) -> VisualGoal:
    if not r > 0:
        raise ValueError("sphere radius must be positive")
    text = instruction if isinstance(instruction, str) else instruction.text
    edited = backend.ground(obs.head_rgb, text)
    det = detect_marker(edited, thresholds)
    z = getattr(backend, "anchor_depth", None)
    if z is None:
        z = read_depth(obs.head_depth, det.center)
    p_head = back_project(det.center, z, obs.head.intrinsics, frame=obs.head.id)
    anchor = to_world(p_head, obs.head)
    return goal_from_anchor(anchor, obs.cameras, r, source_pixel=det.center, source_depth=z)


class OracleBackend:
    """Marks the ground-truth slot center exactly, sized by perspective scaling."""

    def __init__(self, scene: Scene, gt_slot: Slot, radius: float = DEFAULT_RADIUS):
        if gt_slot not in scene.tray.slots:
            raise ValueError(f"slot {gt_slot.index} is not part of scene {scene.id}")
        self.pixel, self.anchor_depth = project(gt_slot.center, scene.head)
        self.radius_px = pixel_radius(radius, self.anchor_depth, scene.head.intrinsics.fx)

    def ground(self, head_rgb: np.ndarray, instruction_text: str) -> np.ndarray:
        return draw_sphere_marker(head_rgb, self.pixel, self.radius_px)


def oracle_backend(scene: Scene, gt_slot: Slot, radius: float = DEFAULT_RADIUS) -> OracleBackend:
    return OracleBackend(scene, gt_slot, radius)


class PerturbedBackend:
    """Wraps a backend and shifts whatever it drew by a Gaussian pixel offset.

    The shift is applied to the pixels the inner backend changed and is
    rounded to whole pixels. Offsets come from one seeded stream, so the
    n-th call is reproducible.
    """

    def __init__(self, inner: GroundingBackend, sigma_px: float, seed: int = 0):
        if sigma_px < 0:
            raise ValueError("sigma_px must be nonnegative")
        self.inner = inner
        self.sigma_px = float(sigma_px)
        self._rng = np.random.default_rng(seed)
        self.last_offset = (0.0, 0.0)

    @property
    def anchor_depth(self):
        return getattr(self.inner, "anchor_depth", None)

    def ground(self, head_rgb: np.ndarray, instruction_text: str) -> np.ndarray:
        out = self.inner.ground(head_rgb, instruction_text)
        if self.sigma_px == 0:
            self.last_offset = (0.0, 0.0)
            return out
        du, dv = self._rng.normal(0.0, self.sigma_px, size=2)
        self.last_offset = (float(du), float(dv))
        di, dj = int(np.round(dv)), int(np.round(du))
        changed = np.any(out != head_rgb, axis=-1)
        shifted = head_rgb.copy()
        ii, jj = np.nonzero(changed)
        ti, tj = ii + di, jj + dj
        h, w = changed.shape
        keep = (ti >= 0) & (ti < h) & (tj >= 0) & (tj < w)
        shifted[ti[keep], tj[keep]] = out[ii[keep], jj[keep]]
        return shifted


def perturbed_backend(inner: GroundingBackend, sigma_px: float, seed: int = 0) -> PerturbedBackend:
    return PerturbedBackend(inner, sigma_px, seed)
